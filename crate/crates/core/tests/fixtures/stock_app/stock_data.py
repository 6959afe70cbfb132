"""Loading daily closing prices and pricing simple stock options."""

import csv
import io


def load_prices(csv_text):
    """Parse `date,symbol,close` CSV text into per-symbol price series."""
    series = {}
    for row in csv.DictReader(io.StringIO(csv_text)):
        symbol = row["symbol"].strip().upper()
        series.setdefault(symbol, []).append((row["date"].strip(), float(row["close"])))
    for points in series.values():
        points.sort()
    return series


def closing_prices(series, symbol):
    """Return the closing prices of one symbol in date order."""
    return [price for _, price in series.get(symbol.upper(), [])]


def option_payoff(kind, strike, spot):
    """Payoff at expiry of a call or put option for a given spot price."""
    if kind == "call":
        return max(spot - strike, 0.0)
    if kind == "put":
        return max(strike - spot, 0.0)
    raise ValueError("option kind must be 'call' or 'put'")


def payoff_curve(kind, strike, spots):
    """Payoff of one option at each of several spot prices."""
    return [(spot, option_payoff(kind, strike, spot)) for spot in spots]
