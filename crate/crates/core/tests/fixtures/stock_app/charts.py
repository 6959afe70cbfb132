"""SVG charts for price series and option payoffs."""

WIDTH = 480
HEIGHT = 240
MARGIN = 20


def scale(values, low, high):
    """Map values linearly onto the pixel range [low, high]."""
    lo, hi = min(values), max(values)
    span = (hi - lo) or 1.0
    return [low + (v - lo) * (high - low) / span for v in values]


def polyline(points):
    """Render (x, y) data points as an SVG polyline scaled to the canvas."""
    xs = scale([x for x, _ in points], MARGIN, WIDTH - MARGIN)
    ys = scale([y for _, y in points], HEIGHT - MARGIN, MARGIN)
    coords = " ".join("%.1f,%.1f" % (x, y) for x, y in zip(xs, ys))
    return '<polyline fill="none" stroke="black" points="%s"/>' % coords


def svg(title, body):
    """Wrap chart elements in an SVG document with a title."""
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">'
        "<title>%s</title>%s</svg>" % (WIDTH, HEIGHT, title, body)
    )


def price_chart(symbol, prices):
    """Line chart of one symbol's closing prices."""
    if not prices:
        raise ValueError("no prices to chart")
    return svg("%s closing prices" % symbol, polyline(list(enumerate(prices))))


def payoff_chart(kind, strike, curve):
    """Line chart of an option payoff curve."""
    if not curve:
        raise ValueError("empty payoff curve")
    return svg("%s payoff at strike %g" % (kind, strike), polyline(curve))
