//! Matrix Market reader (coordinate and array, real/integer, general/symmetric/skew-symmetric)
//! and a dense array writer.

use std::fmt::Write as _;
use std::path::Path;

use super::{DenseMatrix, LinalgError, SparseMatrix};

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn perr(line: usize, msg: impl Into<String>) -> LinalgError {
    LinalgError::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix, LinalgError> {
    let text = std::fs::read_to_string(path)?;
    read_matrix_market_str(&text)
}

pub fn read_matrix_market_str(text: &str) -> Result<SparseMatrix, LinalgError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let toks: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(perr(hline, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    let layout = match toks[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(perr(hline, format!("unsupported format '{other}'"))),
    };
    match toks[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(perr(hline, format!("unsupported field '{other}'"))),
    }
    let symmetry = match toks[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(perr(hline, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = body.next().ok_or_else(|| perr(hline + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| perr(sline, format!("bad integer '{t}'"))))
        .collect::<Result<_, _>>()?;
    let expected_dims = if layout == Layout::Coordinate { 3 } else { 2 };
    if dims.len() != expected_dims {
        return Err(perr(sline, format!("size line needs {expected_dims} integers")));
    }
    let (nrows, ncols) = (dims[0], dims[1]);
    if symmetry != Symmetry::General && nrows != ncols {
        return Err(perr(sline, "symmetric storage requires a square matrix"));
    }

    let mut triplets = Vec::new();
    let mut push = |i: usize, j: usize, v: f64| {
        triplets.push((i, j, v));
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => triplets.push((j, i, v)),
                Symmetry::SkewSymmetric => triplets.push((j, i, -v)),
            }
        }
    };
    let parse_f = |line: usize, t: &str| -> Result<f64, LinalgError> {
        t.parse::<f64>().map_err(|_| perr(line, format!("bad value '{t}'")))
    };

    match layout {
        Layout::Coordinate => {
            let nnz = dims[2];
            let mut count = 0;
            for (ln, l) in body.by_ref() {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(perr(ln, "coordinate entry needs 'row col value'"));
                }
                let i: usize = t[0].parse().map_err(|_| perr(ln, format!("bad row '{}'", t[0])))?;
                let j: usize = t[1].parse().map_err(|_| perr(ln, format!("bad column '{}'", t[1])))?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(perr(ln, format!("index ({i},{j}) outside {nrows}x{ncols}")));
                }
                if symmetry != Symmetry::General && j > i {
                    return Err(perr(ln, "symmetric storage expects lower-triangle entries"));
                }
                push(i - 1, j - 1, parse_f(ln, t[2])?);
                count += 1;
                if count > nnz {
                    return Err(perr(ln, format!("more than the declared {nnz} entries")));
                }
            }
            if count != nnz {
                return Err(perr(sline, format!("declared {nnz} entries, found {count}")));
            }
        }
        Layout::Array => {
            // column-major; symmetric variants list the lower triangle only
            let mut positions = Vec::new();
            for j in 0..ncols {
                let start = match symmetry {
                    Symmetry::General => 0,
                    Symmetry::Symmetric => j,
                    Symmetry::SkewSymmetric => j + 1,
                };
                for i in start..nrows {
                    positions.push((i, j));
                }
            }
            let mut it = positions.into_iter();
            let mut last_line = sline;
            for (ln, l) in body.by_ref() {
                last_line = ln;
                for t in l.split_whitespace() {
                    let (i, j) = it.next().ok_or_else(|| perr(ln, "more values than the declared size"))?;
                    let v = parse_f(ln, t)?;
                    if v != 0.0 {
                        push(i, j, v);
                    }
                }
            }
            if it.next().is_some() {
                return Err(perr(last_line, "fewer values than the declared size"));
            }
        }
    }
    SparseMatrix::from_triplets(nrows, ncols, &triplets)
}

/// Dense array-format text, one column per vector.
pub fn write_array(m: &DenseMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let _ = writeln!(s, "{:.17e}", m[(i, j)]);
        }
    }
    s
}
