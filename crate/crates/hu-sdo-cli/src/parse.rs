//! Readers for Matrix Market symmetric coordinate files and weighted edge
//! lists.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use hu_sdo::linalg::SparseSymmetric;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    MatrixMarket,
    EdgeList,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unsupported header: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}: index {index} out of range 1..={dim}")]
    OutOfRange { line: usize, index: usize, dim: usize },
    #[error("line {line}: duplicate entry ({row}, {col}), first given on line {first}")]
    Duplicate {
        line: usize,
        first: usize,
        row: usize,
        col: usize,
    },
    #[error("expected {expected} entries, found {found}")]
    EntryCount { expected: usize, found: usize },
    #[error("no entries")]
    Empty,
    #[error(transparent)]
    Matrix(#[from] hu_sdo::Error),
}

pub fn parse_matrix(path: &Path, format: Format) -> Result<SparseSymmetric, ParseError> {
    let text = fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        Format::MatrixMarket => parse_matrix_market(&text),
        Format::EdgeList => parse_edge_list(&text),
    }
}

/// Keeps each unordered pair once and remembers where it came from.
struct Entries {
    seen: HashMap<(usize, usize), usize>,
    list: Vec<(usize, usize, f64)>,
}

impl Entries {
    fn new() -> Self {
        Self {
            seen: HashMap::new(),
            list: Vec::new(),
        }
    }

    fn push(&mut self, line: usize, i: usize, j: usize, v: f64) -> Result<(), ParseError> {
        let key = (i.min(j), i.max(j));
        if let Some(&first) = self.seen.get(&key) {
            return Err(ParseError::Duplicate {
                line,
                first,
                row: i + 1,
                col: j + 1,
            });
        }
        self.seen.insert(key, line);
        if v != 0.0 {
            self.list.push((key.0, key.1, v));
        }
        Ok(())
    }
}

fn parse_index(tok: Option<&str>, line: usize, what: &str) -> Result<usize, ParseError> {
    let tok = tok.ok_or_else(|| ParseError::Malformed {
        line,
        msg: format!("missing {what}"),
    })?;
    let idx: usize = tok.parse().map_err(|_| ParseError::Malformed {
        line,
        msg: format!("bad {what} `{tok}`"),
    })?;
    if idx == 0 {
        return Err(ParseError::Malformed {
            line,
            msg: format!("{what} must be 1-indexed"),
        });
    }
    Ok(idx)
}

fn parse_value(tok: &str, line: usize) -> Result<f64, ParseError> {
    let v: f64 = tok.parse().map_err(|_| ParseError::Malformed {
        line,
        msg: format!("bad value `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(ParseError::Malformed {
            line,
            msg: format!("non-finite value `{tok}`"),
        });
    }
    Ok(v)
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

pub fn parse_matrix_market(text: &str) -> Result<SparseSymmetric, ParseError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));

    let (hline, header) = lines.next().ok_or(ParseError::Empty)?;
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    let bad_header = |msg: &str| ParseError::Header {
        line: hline,
        msg: msg.to_string(),
    };
    if words.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(bad_header("first line must start with %%MatrixMarket"));
    }
    if words.len() != 5 || words[1] != "matrix" || words[2] != "coordinate" {
        return Err(bad_header("expected `%%MatrixMarket matrix coordinate <field> symmetric`"));
    }
    let field = match words[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(bad_header(&format!("field `{other}` is not supported"))),
    };
    match words[4].as_str() {
        "symmetric" => {}
        "general" => return Err(bad_header("general (asymmetric) matrices are not accepted; use symmetric storage")),
        other => return Err(bad_header(&format!("symmetry `{other}` is not supported"))),
    }

    let mut content = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = content.next().ok_or(ParseError::Empty)?;
    let mut toks = size.split_whitespace();
    let rows = parse_index(toks.next(), sline, "row count")?;
    let cols = parse_index(toks.next(), sline, "column count")?;
    let nnz: usize = toks
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| ParseError::Malformed {
            line: sline,
            msg: "bad entry count".into(),
        })?;
    if toks.next().is_some() {
        return Err(ParseError::Malformed {
            line: sline,
            msg: "size line has extra fields".into(),
        });
    }
    if rows != cols {
        return Err(ParseError::Malformed {
            line: sline,
            msg: format!("symmetric matrix must be square, got {rows}x{cols}"),
        });
    }
    let n = rows;

    let mut entries = Entries::new();
    let mut found = 0;
    for (line, text) in content {
        let mut toks = text.split_whitespace();
        let i = parse_index(toks.next(), line, "row index")?;
        let j = parse_index(toks.next(), line, "column index")?;
        for idx in [i, j] {
            if idx > n {
                return Err(ParseError::OutOfRange { line, index: idx, dim: n });
            }
        }
        let v = match field {
            Field::Pattern => 1.0,
            Field::Real | Field::Integer => {
                let tok = toks.next().ok_or_else(|| ParseError::Malformed {
                    line,
                    msg: "missing value".into(),
                })?;
                if field == Field::Integer && tok.parse::<i64>().is_err() {
                    return Err(ParseError::Malformed {
                        line,
                        msg: format!("bad integer `{tok}`"),
                    });
                }
                parse_value(tok, line)?
            }
        };
        if toks.next().is_some() {
            return Err(ParseError::Malformed {
                line,
                msg: "entry has extra fields".into(),
            });
        }
        entries.push(line, i - 1, j - 1, v)?;
        found += 1;
    }
    if found != nnz {
        return Err(ParseError::EntryCount { expected: nnz, found });
    }
    Ok(SparseSymmetric::new(n, entries.list)?)
}

/// Lines `i j [w]`, 1-indexed and undirected, weight 1 when omitted; `#`
/// starts a comment. The dimension is the largest index seen.
pub fn parse_edge_list(text: &str) -> Result<SparseSymmetric, ParseError> {
    let mut entries = Entries::new();
    let mut n = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() < 2 || toks.len() > 3 {
            return Err(ParseError::Malformed {
                line,
                msg: format!("expected `i j [w]`, got {} fields", toks.len()),
            });
        }
        let i = parse_index(Some(toks[0]), line, "first endpoint")?;
        let j = parse_index(Some(toks[1]), line, "second endpoint")?;
        let w = match toks.get(2) {
            Some(t) => parse_value(t, line)?,
            None => 1.0,
        };
        n = n.max(i).max(j);
        entries.push(line, i - 1, j - 1, w)?;
    }
    if n == 0 {
        return Err(ParseError::Empty);
    }
    Ok(SparseSymmetric::new(n, entries.list)?)
}
