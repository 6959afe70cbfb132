//! Pluggable structural parsing and code-unit extraction.

use std::collections::HashMap;

use super::python::PythonParser;
use super::{CodeUnit, Span, UnitKind};

/// Extensions treated as source code. Files with other extensions are not
/// indexed at all; source files without a structural parser are indexed as
/// a single file-level unit.
const SOURCE_EXTENSIONS: &[&str] = &[
    "py", "pyi", "rs", "js", "jsx", "mjs", "ts", "tsx", "go", "java", "kt", "scala", "c", "h", "cc", "cpp", "hpp",
    "cs", "rb", "php", "swift", "sh",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError { line, message: message.into() }
    }
}

/// A unit as found by a parser, before ids are assigned. `parent` indexes
/// into the same list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawUnit {
    pub kind: UnitKind,
    pub name: String,
    pub start_line: usize,
    pub end_line: usize,
    pub parent: Option<usize>,
}

pub trait StructuralParser: Send + Sync {
    fn language(&self) -> &'static str;
    fn extensions(&self) -> &'static [&'static str];
    /// Returns functions, classes and methods (never the file unit).
    fn parse(&self, text: &str) -> Result<Vec<RawUnit>, ParseError>;
}

pub struct ParserRegistry {
    by_extension: HashMap<&'static str, usize>,
    parsers: Vec<Box<dyn StructuralParser>>,
}

impl Default for ParserRegistry {
    fn default() -> Self {
        let mut registry = ParserRegistry::empty();
        registry.register(Box::new(PythonParser));
        registry
    }
}

impl ParserRegistry {
    pub fn empty() -> Self {
        ParserRegistry { by_extension: HashMap::new(), parsers: Vec::new() }
    }

    pub fn register(&mut self, parser: Box<dyn StructuralParser>) {
        let idx = self.parsers.len();
        for ext in parser.extensions() {
            self.by_extension.insert(ext, idx);
        }
        self.parsers.push(parser);
    }

    pub fn parser_for(&self, path: &str) -> Option<&dyn StructuralParser> {
        let ext = extension(path)?;
        self.by_extension.get(ext).map(|&i| self.parsers[i].as_ref())
    }

    pub fn is_source(&self, path: &str) -> bool {
        extension(path).is_some_and(|e| SOURCE_EXTENSIONS.contains(&e) || self.by_extension.contains_key(e))
    }
}

fn extension(path: &str) -> Option<&str> {
    let name = path.rsplit('/').next()?;
    let (stem, ext) = name.rsplit_once('.')?;
    (!stem.is_empty()).then_some(ext)
}

/// Result of extracting one file. `warnings` is non-empty when the file
/// fell back to a single file-level unit because it could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub units: Vec<CodeUnit>,
    pub warnings: Vec<String>,
}

fn module_name(path: &str) -> String {
    let name = path.rsplit('/').next().unwrap_or(path);
    match name.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem.to_string(),
        _ => name.to_string(),
    }
}

/// Id of the file-level unit for `path`.
pub fn file_unit_id(path: &str) -> String {
    format!("{path}::{}::{}", module_name(path), UnitKind::File)
}

/// Extracts the file unit plus its functions, classes and methods.
/// Duplicate qualified names get an ordinal suffix (`name#2`).
pub fn extract_units(path: &str, text: &str, registry: &ParserRegistry) -> Extraction {
    let line_count = text.lines().count().max(1);
    let file_unit = CodeUnit::new(UnitKind::File, path, &module_name(path), Span::new(1, line_count), None);
    let file_id = file_unit.id.clone();
    let mut units = vec![file_unit];
    let mut warnings = Vec::new();

    let Some(parser) = registry.parser_for(path) else {
        return Extraction { units, warnings };
    };
    let raw = match parser.parse(text) {
        Ok(raw) => raw,
        Err(e) => {
            warnings.push(format!("{path}: {} parse failed ({e}); indexed as a single file unit", parser.language()));
            return Extraction { units, warnings };
        }
    };

    let mut seen: HashMap<(String, UnitKind), usize> = HashMap::new();
    let mut ids: Vec<String> = Vec::with_capacity(raw.len());
    let mut qnames: Vec<String> = Vec::with_capacity(raw.len());
    for unit in &raw {
        let base = match unit.parent {
            Some(p) => format!("{}.{}", qnames[p], unit.name),
            None => unit.name.clone(),
        };
        let n = seen.entry((base.clone(), unit.kind)).or_insert(0);
        *n += 1;
        let qname = if *n == 1 { base } else { format!("{base}#{n}") };
        let parent_id = match unit.parent {
            Some(p) => ids[p].clone(),
            None => file_id.clone(),
        };
        let cu = CodeUnit::new(unit.kind, path, &qname, Span::new(unit.start_line, unit.end_line), Some(parent_id));
        ids.push(cu.id.clone());
        qnames.push(qname);
        units.push(cu);
    }
    Extraction { units, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_single_unit() {
        let ex = extract_units("empty.py", "", &ParserRegistry::default());
        assert_eq!(ex.units.len(), 1);
        assert_eq!(ex.units[0].kind, UnitKind::File);
        assert_eq!(ex.units[0].span, Span::new(1, 1));
        assert_eq!(ex.units[0].id, "empty.py::empty::file");
        assert!(ex.warnings.is_empty());
    }

    #[test]
    fn class_with_two_methods_gives_four_units() {
        let src = "class Chart:\n    def render(self):\n        return 1\n\n    def title(self):\n        return 't'\n";
        let ex = extract_units("charts.py", src, &ParserRegistry::default());
        let got: Vec<_> = ex.units.iter().map(|u| (u.id.as_str(), u.parent_id.as_deref())).collect();
        assert_eq!(
            got,
            vec![
                ("charts.py::charts::file", None),
                ("charts.py::Chart::class", Some("charts.py::charts::file")),
                ("charts.py::Chart.render::method", Some("charts.py::Chart::class")),
                ("charts.py::Chart.title::method", Some("charts.py::Chart::class")),
            ]
        );
    }

    #[test]
    fn two_functions_give_three_units() {
        let src = "def load():\n    pass\n\n\ndef save():\n    pass\n";
        let ex = extract_units("io/store.py", src, &ParserRegistry::default());
        let got: Vec<_> = ex.units.iter().map(|u| (u.id.as_str(), u.kind, u.span, u.parent_id.as_deref())).collect();
        assert_eq!(
            got,
            vec![
                ("io/store.py::store::file", UnitKind::File, Span::new(1, 6), None),
                ("io/store.py::load::function", UnitKind::Function, Span::new(1, 2), Some("io/store.py::store::file")),
                ("io/store.py::save::function", UnitKind::Function, Span::new(5, 6), Some("io/store.py::store::file")),
            ]
        );
    }

    #[test]
    fn duplicate_names_get_ordinals() {
        let src = "def f():\n    pass\ndef f():\n    pass\nclass A:\n    @property\n    def x(self):\n        return 1\n    @x.setter\n    def x(self, v):\n        pass\n";
        let ex = extract_units("d.py", src, &ParserRegistry::default());
        let ids: Vec<_> = ex.units.iter().map(|u| u.id.as_str()).collect();
        assert_eq!(ids, ["d.py::d::file", "d.py::f::function", "d.py::f#2::function", "d.py::A::class", "d.py::A.x::method", "d.py::A.x#2::method"]);
    }

    #[test]
    fn unsupported_and_unparseable_degrade() {
        let reg = ParserRegistry::default();
        let ex = extract_units("main.go", "package main\nfunc main() {}\n", &reg);
        assert_eq!(ex.units.len(), 1);
        assert!(ex.warnings.is_empty());
        let ex = extract_units("bad.py", "def f(:\n", &reg);
        assert_eq!(ex.units.len(), 1);
        assert_eq!(ex.units[0].kind, UnitKind::File);
        assert_eq!(ex.warnings.len(), 1);
    }

    #[test]
    fn source_detection() {
        let reg = ParserRegistry::default();
        assert!(reg.is_source("a/b.py"));
        assert!(reg.is_source("x.rs"));
        assert!(!reg.is_source("README.md"));
        assert!(!reg.is_source(".py"));
        assert!(!reg.is_source("Makefile"));
    }
}
