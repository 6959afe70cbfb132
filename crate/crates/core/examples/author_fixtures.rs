//! Regenerates the scripted-provider fixtures under `tests/fixtures`.
//!
//! Summary responses are keyed by prompt fingerprint and derived from the
//! docstrings of the pinned stock-app trees, so rebuilding an index over
//! the same source always yields the same text. Every other response is
//! replayed in call order.
//!
//! Run with `cargo run -p almas --example author_fixtures`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use almas::developer::{ChangeSet, FileEdit};
use almas::fsutil::scan_files;
use almas::index::{extract_units, file_unit_id, summary_prompt, IndexOptions, ParserRegistry};
use almas::provider::{prompt_fingerprint, ScriptEntry, ScriptFile, SCRIPT_VERSION};
use almas::tokens::approx_tokens;
use serde_json::json;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

fn docstring_after(lines: &[&str], line: usize) -> Option<String> {
    let next = lines.get(line)?.trim();
    let body = next.strip_prefix("\"\"\"")?;
    Some(body.trim_end_matches("\"\"\"").trim().to_string()).filter(|s| !s.is_empty())
}

fn summary_for(path: &str, text: &str, kind: &str, name: &str, start_line: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let doc = if kind == "file" {
        lines.first().and_then(|l| l.trim().strip_prefix("\"\"\"")).map(|l| l.trim_end_matches("\"\"\"").trim().to_string())
    } else {
        docstring_after(&lines, start_line)
    };
    match doc {
        Some(d) => d,
        None if kind == "file" => format!("Unit tests in {path}."),
        None if name.contains("test_") => format!("Checks {}.", name.rsplit('.').next().unwrap_or(name).trim_start_matches("test_").replace('_', " ")),
        None => format!("Test case {name} in {path}."),
    }
}

/// Keyed summary entries for every source file of `tree`.
fn summary_entries(tree: &Path) -> Vec<ScriptEntry> {
    let registry = ParserRegistry::default();
    let options = IndexOptions::default();
    let mut out = Vec::new();
    for (path, bytes) in scan_files(tree).expect("fixture tree is readable") {
        if !registry.is_source(&path) {
            continue;
        }
        let text = String::from_utf8(bytes).expect("fixture sources are UTF-8");
        let units = extract_units(&path, &text, &registry).units;
        let mut map = BTreeMap::new();
        for u in &units {
            map.insert(u.id.clone(), summary_for(&path, &text, &u.kind.to_string(), &u.qualified_name, u.span.start_line));
        }
        let messages = summary_prompt(&path, &text, &units, &options);
        let prompt_tokens = messages.iter().map(|m| approx_tokens(&m.text)).sum::<usize>() as u64;
        let reply = serde_json::to_string(&map).expect("map serializes");
        let mut entry = ScriptEntry::keyed(prompt_fingerprint(&messages), &reply, prompt_tokens, approx_tokens(&reply) as u64);
        entry.note = Some(format!("summary of {path}"));
        out.push(entry);
    }
    out
}

struct Ordered {
    entries: Vec<ScriptEntry>,
}

impl Ordered {
    fn new() -> Self {
        Ordered { entries: Vec::new() }
    }

    fn push(&mut self, note: &str, text: impl Into<String>) {
        let text = text.into();
        let n = self.entries.len() as u64;
        let mut e = ScriptEntry::ordered(text.clone(), 600 + 97 * n, approx_tokens(&text) as u64 + 12);
        e.note = Some(note.to_string());
        self.entries.push(e);
    }

    fn json(&mut self, note: &str, v: serde_json::Value) {
        self.push(note, serde_json::to_string_pretty(&v).expect("json serializes"));
    }

    fn write(self, path: &Path) {
        write_script(path, self.entries);
    }
}

fn write_script(path: &Path, entries: Vec<ScriptEntry>) {
    let file = ScriptFile { version: SCRIPT_VERSION, entries };
    std::fs::create_dir_all(path.parent().expect("has parent")).expect("mkdir");
    std::fs::write(path, serde_json::to_string_pretty(&file).expect("script serializes") + "\n").expect("write script");
    println!("wrote {}", path.display());
}

fn changeset(tree: &Path, files: &[&str], message: &str) -> String {
    let edits = files
        .iter()
        .map(|f| FileEdit { path: f.to_string(), content: std::fs::read_to_string(tree.join(f)).expect("fixture file") })
        .collect();
    ChangeSet::new(edits, vec![], message).expect("valid changeset").to_blocks()
}

fn approve(summary: &str, criteria: usize, findings: serde_json::Value) -> serde_json::Value {
    let verdicts: Vec<_> = (1..=criteria).map(|id| json!({"id": id, "verdict": "met"})).collect();
    json!({"summary": summary, "findings": findings, "criteria": verdicts})
}

fn generation(stock: &Path) {
    let mut s = Ordered::new();
    s.json("assess", json!({
        "is_clear": false,
        "missing_aspects": ["input data format", "which charts to produce", "how the tool is run"],
        "rewritten_description": null
    }));
    s.json("refine", json!({"description":
        "Build a Python command-line tool that reads daily closing prices from a CSV file with date, symbol and \
         close columns, draws one SVG line chart of closing prices per symbol, and draws the payoff curve of a call \
         or put option for a chosen strike. Use only the standard library and ship unit tests for every module."}));
    s.json("decompose", json!({"subtasks": [
        {"title": "Price data and option payoffs",
         "description": "Create stock_data.py to parse the price CSV into per-symbol series and compute option payoffs at expiry.",
         "acceptance_criteria": [
            "load_prices groups CSV rows by symbol in date order",
            "option_payoff computes call and put payoffs and rejects other kinds",
            "unit tests cover parsing and payoffs"],
         "depends_on": []},
        {"title": "SVG charts",
         "description": "Create charts.py with SVG line charts for closing prices and option payoff curves.",
         "acceptance_criteria": [
            "price_chart renders a closing-price line chart as an SVG document",
            "payoff_chart renders an option payoff curve",
            "empty inputs raise ValueError"],
         "depends_on": ["ST-1"]},
        {"title": "Command-line app",
         "description": "Create app.py that reads a CSV file and writes every chart into an output directory, plus a sample data file.",
         "acceptance_criteria": [
            "render_all returns one price chart per symbol and a payoff chart",
            "main writes the charts into the output directory",
            "a sample price file is included"],
         "depends_on": ["ST-1", "ST-2"]}
    ]}));
    s.push("estimate ST-1", "3");
    s.push("estimate ST-2", "5");
    s.push("estimate ST-3", "2");
    s.push("generate ST-1", changeset(stock, &["stock_data.py", "test_stock_data.py"], "ST-1: Price data and option payoffs"));
    s.json("review ST-1", approve("Parsing and payoff helpers are small, correct and fully tested.", 3, json!([
        {"category": "quality", "severity": "info", "path": "stock_data.py", "start_line": 7, "end_line": 14,
         "note": "Symbols are upper-cased on load; callers may pass any case."}
    ])));
    s.push("generate ST-2", changeset(stock, &["charts.py", "test_charts.py"], "ST-2: SVG charts"));
    s.json("review ST-2", approve("Chart helpers share one scaling routine and validate their inputs.", 3, json!([])));
    s.push("generate ST-3", changeset(stock, &["app.py", "sample_prices.csv", "test_app.py"], "ST-3: Command-line app"));
    s.json("review ST-3", approve("The entry point wires the data and chart modules together and is tested end to end.", 3, json!([
        {"category": "vulnerability", "severity": "info", "path": "app.py", "start_line": 33, "end_line": 35,
         "note": "Chart file names come from symbols in the CSV; they are written only inside the chosen output directory."}
    ])));
    s.write(&fixtures().join("generation").join("script.json"));
}

fn bar_chart_localization(tree: &Path) -> serde_json::Value {
    let units: BTreeSet<String> = ["charts.py", "app.py"]
        .iter()
        .flat_map(|p| extract_units(p, &std::fs::read_to_string(tree.join(p)).unwrap(), &ParserRegistry::default()).units)
        .map(|u| u.id)
        .collect();
    let pick = |suffix: &str| units.iter().find(|id| id.contains(suffix)).cloned().expect("unit exists");
    json!({"selections": [
        {"unit_id": file_unit_id("charts.py"), "rationale": "The new bar chart belongs next to the other chart helpers."},
        {"unit_id": pick("::render_all::"), "rationale": "render_all builds the set of charts the app writes."},
        {"unit_id": pick("::svg::"), "rationale": "Bars must be wrapped in the shared SVG document helper."}
    ]})
}

const BAR_CRITERIA: usize = 3;

fn augmentation(stock: &Path, bar: &Path) {
    let mut s = Ordered::new();
    s.json("assess", json!({"is_clear": true, "missing_aspects": [], "rewritten_description": null}));
    s.json("decompose", json!({"subtasks": [
        {"title": "Average price bar chart",
         "description": "Add a bar chart of the average closing price of each symbol and write it as average_prices.svg.",
         "acceptance_criteria": [
            "bar_chart draws one labelled bar per symbol",
            "the app writes average_prices.svg with the average closing price of each symbol",
            "unit tests cover the new chart"],
         "depends_on": []}
    ]}));
    s.push("estimate ST-1", "3");
    s.json("localize ST-1", bar_chart_localization(stock));
    s.push("generate ST-1", changeset(bar, &["app.py", "charts.py", "test_app.py", "test_charts.py"], "ST-1: Average price bar chart"));
    s.json("review ST-1", approve("The bar chart reuses the SVG helpers and the app test now expects the extra file.", BAR_CRITERIA, json!([
        {"category": "quality", "severity": "warn", "path": "charts.py", "start_line": 47, "end_line": 47,
         "note": "A data set whose averages are all zero draws empty bars; consider a minimum height."}
    ])));
    s.write(&fixtures().join("augmentation").join("script.json"));
}

/// A first attempt that forgets to update the app test, then the full change.
fn augmentation_retry(stock: &Path, bar: &Path) {
    let mut s = Ordered::new();
    s.json("assess", json!({"is_clear": true, "missing_aspects": [], "rewritten_description": null}));
    s.json("decompose", json!({"subtasks": [
        {"title": "Average price bar chart",
         "description": "Add a bar chart of the average closing price of each symbol and write it as average_prices.svg.",
         "acceptance_criteria": [
            "bar_chart draws one labelled bar per symbol",
            "the app writes average_prices.svg with the average closing price of each symbol",
            "unit tests cover the new chart"],
         "depends_on": []}
    ]}));
    s.push("estimate ST-1", "3");
    s.json("localize ST-1", bar_chart_localization(stock));
    s.push("generate ST-1 (stale app test)", changeset(bar, &["app.py", "charts.py", "test_charts.py"], "ST-1: Average price bar chart"));
    let mut relocalized = bar_chart_localization(stock);
    relocalized["selections"].as_array_mut().unwrap().push(json!({
        "unit_id": file_unit_id("test_app.py"), "rationale": "The failing test pins the list of chart files."}));
    s.json("relocalize ST-1", relocalized);
    s.push("generate ST-1", changeset(bar, &["app.py", "charts.py", "test_app.py", "test_charts.py"], "ST-1: Average price bar chart"));
    s.json("review ST-1", approve("The bar chart is in place and the app test covers the new output.", BAR_CRITERIA, json!([])));
    s.write(&fixtures().join("augmentation_retry").join("script.json"));
}

fn handover() {
    let mut s = Ordered::new();
    s.json("assess", json!({"is_clear": true, "missing_aspects": [], "rewritten_description": null}));
    s.json("decompose", json!({"subtasks": [
        {"title": "Moving average", "description": "Add moving_average(prices, window) in indicators.py.",
         "acceptance_criteria": ["moving_average returns one value per full window"], "depends_on": []},
        {"title": "Volatility", "description": "Add volatility(prices) in indicators_vol.py.",
         "acceptance_criteria": ["volatility returns the population standard deviation of daily returns"], "depends_on": []}
    ]}));
    s.push("estimate ST-1", "2");
    s.push("estimate ST-2", "3");
    let broken = [
        ("ST-1", "indicators.py", "test_indicators.py", "def moving_average(prices, window):\n    return list(prices)\n",
         "import unittest\n\nfrom indicators import moving_average\n\n\nclass MovingAverageTest(unittest.TestCase):\n    def test_window_two(self):\n        self.assertEqual(moving_average([1, 3, 5], 2), [2, 4])\n"),
        ("ST-2", "indicators_vol.py", "test_indicators_vol.py", "def volatility(prices):\n    return 0.0\n",
         "import unittest\n\nfrom indicators_vol import volatility\n\n\nclass VolatilityTest(unittest.TestCase):\n    def test_nonzero(self):\n        self.assertGreater(volatility([1, 2, 1, 2]), 0)\n"),
    ];
    for (id, src, test, code, test_code) in broken {
        for attempt in 1..=3 {
            let cs = ChangeSet::new(
                vec![FileEdit { path: src.into(), content: code.into() }, FileEdit { path: test.into(), content: test_code.into() }],
                vec![],
                format!("{id}: attempt {attempt}"),
            )
            .unwrap();
            s.push(&format!("generate {id} attempt {attempt}"), cs.to_blocks());
        }
    }
    s.write(&fixtures().join("handover").join("script.json"));
}

fn main() {
    let root = fixtures();
    let stock = root.join("stock_app");
    let bar = root.join("stock_app_bar");
    let mut summaries = summary_entries(&stock);
    let seen: BTreeSet<String> = summaries.iter().filter_map(|e| e.match_key.clone()).collect();
    summaries.extend(summary_entries(&bar).into_iter().filter(|e| !seen.contains(e.match_key.as_deref().unwrap_or(""))));
    write_script(&root.join("summaries.json"), summaries);
    generation(&stock);
    augmentation(&stock, &bar);
    augmentation_retry(&stock, &bar);
    handover();
}
