use std::collections::BTreeSet;

use super::{SummaryIndex, SummaryNode, UnitKind};
use crate::tokens::approx_tokens;

/// Elision marker lines start with this (after indentation).
pub const ELISION_PREFIX: &str = "...";
const SEPARATOR: &str = " | ";

struct Entry<'a> {
    node: &'a SummaryNode,
    children: Vec<Entry<'a>>,
}

fn line(depth: usize, node: &SummaryNode) -> String {
    format!("{}{}{SEPARATOR}{}", "  ".repeat(depth), node.unit.id, node.summary)
}

fn marker(depth: usize, count: usize, what: &str) -> String {
    let plural = if count == 1 { "" } else { "s" };
    format!("{}{ELISION_PREFIX} [{count} {what}{plural} elided]", "  ".repeat(depth))
}

fn count(entries: &[Entry<'_>]) -> usize {
    entries.iter().map(|e| 1 + count(&e.children)).sum()
}

/// `level` 0 renders everything; 1 collapses methods; 2 collapses every
/// member of a file.
fn render_level(files: &[Entry<'_>], level: usize) -> Vec<String> {
    let mut out = Vec::new();
    for file in files {
        out.push(line(0, file.node));
        if level >= 2 {
            if !file.children.is_empty() {
                out.push(marker(1, count(&file.children), "unit"));
            }
            continue;
        }
        for member in &file.children {
            out.push(line(1, member.node));
            if member.children.is_empty() {
                continue;
            }
            if level >= 1 {
                out.push(marker(2, member.children.len(), "method"));
            } else {
                out.extend(member.children.iter().map(|m| line(2, m.node)));
            }
        }
    }
    out
}

fn fits(lines: &[String], budget: usize) -> bool {
    approx_tokens(&lines.join("\n")) <= budget
}

/// Indented `unit_id | summary` listing of the index (or of `scope` and
/// its ancestors). When the full listing exceeds `token_budget`, methods
/// are elided first, then all file members, then trailing files.
pub fn render_outline(index: &SummaryIndex, scope: Option<&BTreeSet<String>>, token_budget: usize) -> String {
    let in_scope = |node: &SummaryNode| -> bool {
        match scope {
            None => true,
            Some(s) => {
                s.contains(&node.unit.id)
                    || index.nodes().any(|n| s.contains(&n.unit.id) && is_ancestor(index, &node.unit.id, n))
            }
        }
    };
    let build = |ids: &[String]| -> Vec<Entry<'_>> {
        let mut nodes: Vec<&SummaryNode> = ids.iter().filter_map(|id| index.lookup_unit(id).ok()).collect();
        nodes.sort_by_key(|n| (n.unit.span.start_line, n.unit.id.clone()));
        nodes.into_iter().filter(|n| in_scope(n)).map(|n| Entry { node: n, children: Vec::new() }).collect()
    };
    let files: Vec<Entry<'_>> = index
        .files()
        .into_iter()
        .filter_map(|id| index.lookup_unit(id).ok())
        .filter(|n| in_scope(n))
        .map(|file| {
            let mut members = build(&file.children);
            for m in &mut members {
                if m.node.unit.kind == UnitKind::Class {
                    m.children = build(&m.node.children);
                }
            }
            Entry { node: file, children: members }
        })
        .collect();

    for level in 0..=2 {
        let lines = render_level(&files, level);
        if fits(&lines, token_budget) {
            return lines.join("\n");
        }
    }
    let mut lines: Vec<String> = Vec::new();
    for (i, file) in files.iter().enumerate() {
        let mut candidate = lines.clone();
        candidate.push(line(0, file.node));
        let rest = files.len() - i - 1;
        if rest > 0 {
            candidate.push(marker(0, rest, "file"));
        }
        if !fits(&candidate, token_budget) {
            lines.push(marker(0, files.len() - i, "file"));
            break;
        }
        lines.push(line(0, file.node));
    }
    lines.join("\n")
}

fn is_ancestor(index: &SummaryIndex, ancestor_id: &str, node: &SummaryNode) -> bool {
    let mut cur = node.unit.parent_id.as_deref();
    while let Some(pid) = cur {
        if pid == ancestor_id {
            return true;
        }
        cur = index.lookup_unit(pid).ok().and_then(|n| n.unit.parent_id.as_deref());
    }
    false
}

/// Unit ids mentioned in an outline, in order of appearance.
pub fn outline_unit_ids(outline: &str) -> Vec<String> {
    outline
        .lines()
        .map(str::trim_start)
        .filter(|l| !l.is_empty() && !l.starts_with(ELISION_PREFIX))
        .filter_map(|l| l.split_once(SEPARATOR).map(|(id, _)| id.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::index::{CodeUnit, Span};

    fn node(kind: UnitKind, qname: &str, span: (usize, usize), parent: Option<&str>, summary: &str) -> SummaryNode {
        SummaryNode {
            unit: CodeUnit::new(kind, "charts.py", qname, Span::new(span.0, span.1), parent.map(String::from)),
            summary: summary.into(),
            children: vec![],
        }
    }

    fn fixture() -> SummaryIndex {
        let mut file = node(UnitKind::File, "charts", (1, 9), None, "Chart helpers for the dashboard.");
        let mut class = node(UnitKind::Class, "Chart", (1, 9), Some("charts.py::charts::file"), "Wraps one chart.");
        let m1 = node(UnitKind::Method, "Chart.render", (2, 4), Some("charts.py::Chart::class"), "Renders the chart.");
        let m2 = node(UnitKind::Method, "Chart.title", (6, 9), Some("charts.py::Chart::class"), "Returns the title.");
        class.children = vec![m1.unit.id.clone(), m2.unit.id.clone()];
        file.children = vec![class.unit.id.clone()];
        let nodes: BTreeMap<_, _> = [file, class, m1, m2].into_iter().map(|n| (n.unit.id.clone(), n)).collect();
        SummaryIndex::from_parts(1, nodes, [("charts.py".to_string(), "h".to_string())].into())
    }

    #[test]
    fn empty_index_renders_empty() {
        let idx = SummaryIndex::from_parts(1, BTreeMap::new(), BTreeMap::new());
        assert_eq!(render_outline(&idx, None, 100), "");
    }

    #[test]
    fn generous_budget_renders_all_four() {
        let out = render_outline(&fixture(), None, 10_000);
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "charts.py::charts::file | Chart helpers for the dashboard.");
        assert_eq!(lines[1], "  charts.py::Chart::class | Wraps one chart.");
        assert_eq!(lines[2], "    charts.py::Chart.render::method | Renders the chart.");
        assert_eq!(lines[3], "    charts.py::Chart.title::method | Returns the title.");
    }

    #[test]
    fn tight_budget_elides_methods_first() {
        let idx = fixture();
        let full = render_outline(&idx, None, 10_000);
        let out = render_outline(&idx, None, approx_tokens(&full) - 1);
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "    ... [2 methods elided]");
        for id in outline_unit_ids(&out) {
            assert!(idx.lookup_unit(&id).is_ok());
        }
        assert!(approx_tokens(&out) < approx_tokens(&full));
    }

    #[test]
    fn tiny_budget_still_yields_valid_ids() {
        let idx = fixture();
        for budget in 1..60 {
            let out = render_outline(&idx, None, budget);
            for id in outline_unit_ids(&out) {
                assert!(idx.contains(&id), "{id}");
            }
        }
    }

    #[test]
    fn scope_keeps_ancestors() {
        let idx = fixture();
        let scope: BTreeSet<String> = ["charts.py::Chart.title::method".to_string()].into();
        let ids = outline_unit_ids(&render_outline(&idx, Some(&scope), 10_000));
        assert_eq!(ids, ["charts.py::charts::file", "charts.py::Chart::class", "charts.py::Chart.title::method"]);
    }
}
