//! Structural scanner for Python: top-level functions and classes, and
//! methods defined directly in a class body.
//!
//! This is not a full parser. It tracks strings, brackets and line
//! continuations well enough to find logical lines and their indentation,
//! which is all the unit hierarchy needs.

use super::parser::{ParseError, RawUnit, StructuralParser};
use super::UnitKind;

pub struct PythonParser;

#[derive(Debug)]
struct LogicalLine {
    first: usize,
    last: usize,
    indent: usize,
    text: String,
    last_code_char: Option<char>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Quote {
    Single(char),
    Triple(char),
}

fn indent_width(line: &str) -> usize {
    let mut width = 0;
    for c in line.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width = (width / 8 + 1) * 8,
            '\x0c' => width = 0,
            _ => break,
        }
    }
    width
}

fn logical_lines(lines: &[&str]) -> Result<Vec<LogicalLine>, ParseError> {
    let mut out: Vec<LogicalLine> = Vec::new();
    let mut quote: Option<Quote> = None;
    let mut depth: i64 = 0;
    let mut continuation = false;
    let mut current: Option<LogicalLine> = None;

    for (idx, raw) in lines.iter().enumerate() {
        let fresh = quote.is_none() && depth == 0 && !continuation;
        if fresh {
            let stripped = raw.trim();
            if stripped.is_empty() || stripped.starts_with('#') {
                continue;
            }
            current = Some(LogicalLine {
                first: idx,
                last: idx,
                indent: indent_width(raw),
                text: stripped.to_string(),
                last_code_char: None,
            });
        }
        let cur = current.as_mut().expect("inside a logical line");
        cur.last = idx;
        continuation = false;

        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match quote {
                Some(q) => {
                    if c == '\\' {
                        i += 2;
                        continue;
                    }
                    match q {
                        Quote::Single(d) if c == d => {
                            quote = None;
                            cur.last_code_char = Some(c);
                        }
                        Quote::Triple(d) if c == d && chars.get(i + 1) == Some(&d) && chars.get(i + 2) == Some(&d) => {
                            quote = None;
                            cur.last_code_char = Some(c);
                            i += 2;
                        }
                        _ => {}
                    }
                }
                None => match c {
                    '#' => break,
                    '\'' | '"' => {
                        if chars.get(i + 1) == Some(&c) && chars.get(i + 2) == Some(&c) {
                            quote = Some(Quote::Triple(c));
                            i += 2;
                        } else {
                            quote = Some(Quote::Single(c));
                        }
                    }
                    '(' | '[' | '{' => {
                        depth += 1;
                        cur.last_code_char = Some(c);
                    }
                    ')' | ']' | '}' => {
                        depth -= 1;
                        if depth < 0 {
                            return Err(ParseError::new(idx + 1, "unbalanced closing bracket"));
                        }
                        cur.last_code_char = Some(c);
                    }
                    '\\' if i + 1 == chars.len() => continuation = true,
                    c if !c.is_whitespace() => cur.last_code_char = Some(c),
                    _ => {}
                },
            }
            i += 1;
        }
        if let Some(Quote::Single(_)) = quote {
            // A backslash at end of line continues a single-quoted string.
            if raw.ends_with('\\') {
                continuation = true;
            } else {
                return Err(ParseError::new(idx + 1, "unterminated string literal"));
            }
        }
        if quote.is_none() && depth == 0 && !continuation {
            out.push(current.take().expect("logical line open"));
        }
    }
    if quote.is_some() {
        return Err(ParseError::new(lines.len(), "unterminated triple-quoted string"));
    }
    if depth != 0 || continuation {
        return Err(ParseError::new(lines.len(), "unexpected end of file inside a statement"));
    }
    Ok(out)
}

/// Checks indentation the way the tokenizer does: indents only after a
/// block opener, dedents must land on an enclosing level.
fn check_indentation(logical: &[LogicalLine]) -> Result<(), ParseError> {
    let mut stack = vec![0usize];
    let mut prev_opens_block = false;
    for line in logical {
        let top = *stack.last().expect("stack never empty");
        if line.indent > top {
            if !prev_opens_block {
                return Err(ParseError::new(line.first + 1, "unexpected indent"));
            }
            stack.push(line.indent);
        } else {
            if prev_opens_block && !line.text.starts_with('#') {
                return Err(ParseError::new(line.first + 1, "expected an indented block"));
            }
            while line.indent < *stack.last().expect("stack never empty") {
                stack.pop();
            }
            if line.indent != *stack.last().expect("stack never empty") {
                return Err(ParseError::new(line.first + 1, "unindent does not match any outer indentation level"));
            }
        }
        prev_opens_block = line.last_code_char == Some(':');
    }
    if prev_opens_block {
        return Err(ParseError::new(logical.last().map_or(1, |l| l.last + 1), "expected an indented block"));
    }
    Ok(())
}

fn definition(text: &str) -> Option<(UnitKind, String)> {
    let rest = text.strip_prefix("async ").map(str::trim_start).unwrap_or(text);
    let (kind, rest) = if let Some(r) = rest.strip_prefix("def ") {
        (UnitKind::Function, r)
    } else {
        let r = rest.strip_prefix("class ").filter(|_| !text.starts_with("async "))?;
        (UnitKind::Class, r)
    };
    let name: String = rest.trim_start().chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    (!name.is_empty()).then_some((kind, name))
}

/// Last physical line of a block that runs from `logical[start]` until the
/// next logical line at indent <= `indent`.
fn block_end(logical: &[LogicalLine], start: usize, indent: usize) -> usize {
    let mut end = logical[start].last;
    for line in &logical[start + 1..] {
        if line.indent <= indent {
            break;
        }
        end = line.last;
    }
    end
}

impl StructuralParser for PythonParser {
    fn language(&self) -> &'static str {
        "python"
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["py", "pyi"]
    }

    fn parse(&self, text: &str) -> Result<Vec<RawUnit>, ParseError> {
        let lines: Vec<&str> = text.lines().collect();
        let logical = logical_lines(&lines)?;
        check_indentation(&logical)?;

        let mut units = Vec::new();
        let mut decorator_start: Option<usize> = None;
        let mut i = 0;
        while i < logical.len() {
            let line = &logical[i];
            if line.indent != 0 {
                i += 1;
                continue;
            }
            if line.text.starts_with('@') {
                decorator_start.get_or_insert(line.first);
                i += 1;
                continue;
            }
            let Some((kind, name)) = definition(&line.text) else {
                decorator_start = None;
                i += 1;
                continue;
            };
            let start = decorator_start.take().unwrap_or(line.first);
            let end = block_end(&logical, i, 0);
            let parent_idx = units.len();
            units.push(RawUnit { kind, name, start_line: start + 1, end_line: end + 1, parent: None });

            // Walk the block body for methods.
            let mut j = i + 1;
            let body_indent = logical.get(j).filter(|l| l.indent > 0).map(|l| l.indent);
            let mut method_decorator: Option<usize> = None;
            while j < logical.len() && logical[j].indent > 0 {
                let inner = &logical[j];
                if kind == UnitKind::Class && Some(inner.indent) == body_indent {
                    if inner.text.starts_with('@') {
                        method_decorator.get_or_insert(inner.first);
                    } else if let Some((UnitKind::Function, mname)) = definition(&inner.text) {
                        let mstart = method_decorator.take().unwrap_or(inner.first);
                        let mend = block_end(&logical, j, inner.indent);
                        units.push(RawUnit {
                            kind: UnitKind::Method,
                            name: mname,
                            start_line: mstart + 1,
                            end_line: mend + 1,
                            parent: Some(parent_idx),
                        });
                    } else {
                        method_decorator = None;
                    }
                }
                j += 1;
            }
            i = j;
        }
        Ok(units)
    }
}
