use std::io::Write;

use hu_sdo_cli::parse::{parse_edge_list, parse_matrix, parse_matrix_market, Format, ParseError};

const HEADER: &str = "%%MatrixMarket matrix coordinate real symmetric\n";

#[test]
fn edge_list_pair() {
    let m = parse_edge_list("1 2 1.0\n").unwrap();
    assert_eq!(m.dim(), 2);
    assert_eq!(m.entries(), [(0, 1, 1.0)]);
    assert_eq!(m.row_sparsity(), 1);
}

#[test]
fn edge_list_comments_defaults_and_zeros() {
    let m = parse_edge_list("# header\n\n3 1   # unit weight\n2 3 -0.5\n1 1 0\n").unwrap();
    assert_eq!(m.dim(), 3);
    assert_eq!(m.nnz(), 2);
    let d = m.to_dense();
    assert_eq!(d.get(0, 2), 1.0);
    assert_eq!(d.get(2, 1), -0.5);
}

#[test]
fn edge_list_errors() {
    assert!(matches!(parse_edge_list("1 2 1.0\n2 1 1.0\n"), Err(ParseError::Duplicate { line: 2, first: 1, .. })));
    assert!(matches!(parse_edge_list("1\n"), Err(ParseError::Malformed { line: 1, .. })));
    assert!(matches!(parse_edge_list("1 2 3 4\n"), Err(ParseError::Malformed { line: 1, .. })));
    assert!(matches!(parse_edge_list("1 2\n0 1\n"), Err(ParseError::Malformed { line: 2, .. })));
    assert!(matches!(parse_edge_list("1 x 1\n"), Err(ParseError::Malformed { .. })));
    assert!(matches!(parse_edge_list("1 2 nan\n"), Err(ParseError::Malformed { .. })));
    assert!(matches!(parse_edge_list("# nothing\n"), Err(ParseError::Empty)));
}

#[test]
fn matrix_market_dimension_from_size_line() {
    let text = format!("{HEADER}% comment\n3 3 2\n2 1 0.5\n3 3 -1\n");
    let m = parse_matrix_market(&text).unwrap();
    assert_eq!(m.dim(), 3);
    assert_eq!(m.nnz(), 2);
    assert_eq!(m.to_dense().get(0, 1), 0.5);
}

#[test]
fn matrix_market_fields() {
    let int = parse_matrix_market("%%MatrixMarket matrix coordinate integer symmetric\n2 2 1\n2 1 3\n").unwrap();
    assert_eq!(int.entries(), [(0, 1, 3.0)]);
    assert!(parse_matrix_market("%%MatrixMarket matrix coordinate integer symmetric\n2 2 1\n2 1 3.5\n").is_err());
    let pat = parse_matrix_market("%%MatrixMarket matrix coordinate pattern symmetric\n3 3 2\n2 1\n3 2\n").unwrap();
    assert_eq!(pat.nnz(), 2);
    let upper = parse_matrix_market(&format!("{HEADER}2 2 1\n1 2 2.0\n")).unwrap();
    assert_eq!(upper.entries(), [(0, 1, 2.0)]);
}

#[test]
fn matrix_market_rejections() {
    let general = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 1\n";
    assert!(matches!(parse_matrix_market(general), Err(ParseError::Header { line: 1, .. })));
    assert!(matches!(parse_matrix_market("%%MatrixMarket matrix array real symmetric\n"), Err(ParseError::Header { .. })));
    assert!(matches!(parse_matrix_market("2 2 1\n1 2 1\n"), Err(ParseError::Header { .. })));
    assert!(matches!(
        parse_matrix_market(&format!("{HEADER}2 3 1\n1 2 1\n")),
        Err(ParseError::Malformed { line: 2, .. })
    ));
    assert!(matches!(
        parse_matrix_market(&format!("{HEADER}2 2 1\n3 1 1\n")),
        Err(ParseError::OutOfRange { line: 3, index: 3, dim: 2 })
    ));
    assert!(matches!(
        parse_matrix_market(&format!("{HEADER}2 2 2\n1 2 1\n2 1 1\n")),
        Err(ParseError::Duplicate { line: 4, first: 3, .. })
    ));
    assert!(matches!(
        parse_matrix_market(&format!("{HEADER}2 2 2\n1 2 1\n")),
        Err(ParseError::EntryCount { expected: 2, found: 1 })
    ));
    assert!(matches!(parse_matrix_market(&format!("{HEADER}2 2 1\n1 2\n")), Err(ParseError::Malformed { .. })));
    assert!(matches!(parse_matrix_market(""), Err(ParseError::Empty)));
}

#[test]
fn files_on_disk() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "{HEADER}2 2 1\n2 1 1.0\n").unwrap();
    assert_eq!(parse_matrix(f.path(), Format::MatrixMarket).unwrap().nnz(), 1);
    assert!(parse_matrix(f.path(), Format::EdgeList).is_err());
    let missing = f.path().with_extension("missing");
    assert!(matches!(parse_matrix(&missing, Format::MatrixMarket), Err(ParseError::Io { .. })));
}

#[test]
fn shipped_instances() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let pair = parse_matrix(&dir.join("pair.edges"), Format::EdgeList).unwrap();
    assert_eq!(pair.entries(), [(0, 1, 1.0)]);
    for (name, w) in [("k4pos.mtx", 1.0), ("k4neg.mtx", -1.0)] {
        let m = parse_matrix(&dir.join(name), Format::MatrixMarket).unwrap();
        assert_eq!(m.dim(), 4);
        assert_eq!(m.nnz(), 6);
        assert!(m.entries().iter().all(|e| e.0 != e.1 && e.2 == w));
    }
}
