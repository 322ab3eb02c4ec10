//! Matrix Market coordinate-format reader (the sole input format), plus the
//! companion `.rhs` convention: one value per line, same stem as the matrix.

use lapsolve_core::{Error, Result, SparseSymmetricMatrix};
use std::io::BufRead;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct MatrixMarket {
    pub matrix: SparseSymmetricMatrix,
    pub warnings: Vec<String>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Read a symmetric sparse matrix in Matrix Market coordinate format.
/// Accepts `symmetric` banners, and `general` banners whose entries are
/// symmetric. Duplicate entries are summed (with a warning); explicit zeros
/// are dropped. Indices are 1-based per the format.
pub fn read_matrix_market(path: &Path) -> Result<MatrixMarket> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (banner_no, banner) = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (no + 1, line);
                }
            }
            None => return Err(parse_err(1, "empty file")),
        }
    };
    let tokens: Vec<String> = banner.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" {
        return Err(parse_err(banner_no, "expected banner %%MatrixMarket matrix coordinate real <symmetric|general>"));
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(parse_err(banner_no, format!("unsupported format {} {}", tokens[1], tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(banner_no, format!("unsupported field type {}", tokens[3])));
    }
    let symmetric_banner = match tokens[4].as_str() {
        "symmetric" => true,
        "general" => false,
        other => return Err(parse_err(banner_no, format!("unsupported symmetry {other}"))),
    };

    // size line (skipping comments)
    let (size_no, size_line) = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                break (no + 1, line);
            }
            None => return Err(parse_err(banner_no + 1, "missing size line")),
        }
    };
    let dims: Vec<&str> = size_line.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(parse_err(size_no, "size line must be: rows cols nnz"));
    }
    let rows: usize = dims[0].parse().map_err(|_| parse_err(size_no, "bad row count"))?;
    let cols: usize = dims[1].parse().map_err(|_| parse_err(size_no, "bad column count"))?;
    let nnz: usize = dims[2].parse().map_err(|_| parse_err(size_no, "bad nnz count"))?;
    if rows != cols {
        return Err(parse_err(size_no, format!("matrix must be square, got {rows}x{cols}")));
    }

    let mut warnings = Vec::new();
    let mut seen = std::collections::HashMap::new();
    // oriented entries, duplicates summed per oriented pair
    let mut oriented: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
    let mut count = 0usize;
    for (no, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let lineno = no + 1;
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(lineno, "entry must be: i j value"));
        }
        let i: usize = parts[0].parse().map_err(|_| parse_err(lineno, "bad row index"))?;
        let j: usize = parts[1].parse().map_err(|_| parse_err(lineno, "bad column index"))?;
        let v: f64 = parts[2].parse().map_err(|_| parse_err(lineno, "bad value"))?;
        if i < 1 || i > rows || j < 1 || j > cols {
            return Err(parse_err(lineno, format!("index ({i},{j}) out of bounds for n = {rows}")));
        }
        if symmetric_banner && j > i {
            return Err(parse_err(lineno, "symmetric banner requires lower-triangle entries (i >= j)"));
        }
        count += 1;
        if v == 0.0 {
            continue; // explicit zeros dropped
        }
        if let Some(prev_line) = seen.insert((i, j), lineno) {
            warnings.push(format!(
                "duplicate entry ({i},{j}) at line {lineno} (first at line {prev_line}); values summed"
            ));
        }
        *oriented.entry((i - 1, j - 1)).or_insert(0.0) += v;
    }
    if count != nnz {
        warnings.push(format!("header declared {nnz} entries, file has {count}"));
    }

    let matrix = if symmetric_banner {
        let triplets: Vec<(usize, usize, f64)> = oriented
            .into_iter()
            .map(|((i, j), v)| (i.min(j), i.max(j), v))
            .collect();
        SparseSymmetricMatrix::from_upper_triplets(rows, &triplets)?
    } else {
        // general banner: both halves must be present and agree
        for (&(i, j), _) in &oriented {
            if i != j && !oriented.contains_key(&(j, i)) {
                return Err(Error::Asymmetric { i: i + 1, j: j + 1 });
            }
        }
        let triplets: Vec<(usize, usize, f64)> =
            oriented.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        SparseSymmetricMatrix::from_triplets(rows, &triplets)?
    };
    Ok(MatrixMarket { matrix, warnings })
}

/// Companion rhs path for a matrix path: same stem, `.rhs` extension.
pub fn rhs_path_for(matrix_path: &Path) -> PathBuf {
    matrix_path.with_extension("rhs")
}

/// One value per line; blank lines and `%` or `#` comments skipped.
pub fn read_rhs(path: &Path, n: usize) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut values = Vec::with_capacity(n);
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| parse_err(no + 1, format!("bad rhs value {t:?}")))?;
        values.push(v);
    }
    if values.len() != n {
        return Err(parse_err(
            values.len() + 1,
            format!("rhs has {} values, matrix dimension is {n}", values.len()),
        ));
    }
    Ok(values)
}
