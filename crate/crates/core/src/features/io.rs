//! `MICREC-FEAT v1` text format: header `MICREC-FEAT v1 <modality> <count> <dim>`
//! then one `<id> <f1> ... <fdim>` line per entity.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{FeatureMatrix, Modality};
use crate::error::{Error, Result};

const MAGIC: &str = "MICREC-FEAT";
const VERSION: &str = "v1";

pub fn load_features(path: &Path, expected_count: usize) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_features(BufReader::new(file), &path.display().to_string(), expected_count)
}

pub fn parse_features<R: BufRead>(reader: R, source: &str, expected_count: usize) -> Result<FeatureMatrix> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad(1, "empty feature file".into()))?
        .map_err(|e| bad(1, e.to_string()))?;
    let h: Vec<&str> = header.split(' ').collect();
    if h.len() != 5 || h[0] != MAGIC {
        return Err(bad(1, format!("expected `{MAGIC} {VERSION} <modality> <count> <dim>`")));
    }
    if h[1] != VERSION {
        return Err(Error::Version(format!("{source}: feature format {:?}", h[1])));
    }
    let modality: Modality = h[2].parse().map_err(|_| bad(1, format!("bad modality {:?}", h[2])))?;
    let count: usize = h[3].parse().map_err(|_| bad(1, format!("bad count {:?}", h[3])))?;
    let dim: usize = h[4].parse().map_err(|_| bad(1, format!("bad dim {:?}", h[4])))?;
    if dim == 0 {
        return Err(bad(1, "dim must be positive".into()));
    }

    let mut data = vec![0.0; expected_count * dim];
    let mut present = vec![false; expected_count];
    let mut rows = 0usize;
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(|e| bad(line_no, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let id_text = fields.next().unwrap_or_default();
        let id: usize = id_text.parse().map_err(|_| bad(line_no, format!("bad id {id_text:?}")))?;
        if id >= expected_count {
            return Err(bad(line_no, format!("id {id} outside domain of {expected_count} entities")));
        }
        if present[id] {
            return Err(bad(line_no, format!("duplicate id {id}")));
        }
        let row = &mut data[id * dim..(id + 1) * dim];
        let mut k = 0;
        for f in fields {
            if k == dim {
                return Err(bad(line_no, format!("more than {dim} values")));
            }
            let v: f64 = f.parse().map_err(|_| bad(line_no, format!("bad value {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::InvalidFeature {
                    path: source.to_string(),
                    id,
                });
            }
            row[k] = v;
            k += 1;
        }
        if k != dim {
            return Err(bad(line_no, format!("expected {dim} values, got {k}")));
        }
        present[id] = true;
        rows += 1;
    }
    if rows != count {
        return Err(bad(1, format!("header declares {count} rows, file has {rows}")));
    }
    let missing: Vec<usize> = (0..expected_count).filter(|&i| !present[i]).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteFeatures {
            path: source.to_string(),
            missing,
        });
    }
    FeatureMatrix::new(modality, dim, data)
}

pub fn write_features<W: Write>(mut w: W, m: &FeatureMatrix) -> Result<()> {
    let io = |e| Error::io("<feature file>", e);
    writeln!(w, "{MAGIC} {VERSION} {} {} {}", m.modality(), m.n_rows(), m.dim()).map_err(io)?;
    for id in 0..m.n_rows() {
        write!(w, "{id}").map_err(io)?;
        for v in m.row(id) {
            write!(w, " {v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(dim: usize, ids: &[usize], count: usize) -> String {
        let mut s = format!("MICREC-FEAT v1 text {count} {dim}\n");
        for &id in ids {
            s.push_str(&id.to_string());
            for k in 0..dim {
                s.push_str(&format!(" {}", (id * 10 + k) as f64 * 0.5));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn complete_file_loads() {
        let m = parse_features(file(3, &[0, 1, 2, 3, 4], 5).as_bytes(), "f", 5).unwrap();
        assert_eq!(m.n_rows(), 5);
        assert_eq!(m.row(2), &[10.0, 10.5, 11.0]);
    }

    #[test]
    fn missing_id_is_incomplete() {
        let err = parse_features(file(2, &[0, 1, 2, 4], 4).as_bytes(), "f", 5).unwrap_err();
        match err {
            Error::IncompleteFeatures { missing, .. } => assert_eq!(missing, vec![3]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn short_row_is_parse_error() {
        let mut s = String::from("MICREC-FEAT v1 text 1 384\n0");
        for _ in 0..383 {
            s.push_str(" 0.1");
        }
        s.push('\n');
        assert!(matches!(parse_features(s.as_bytes(), "f", 1), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn nan_is_invalid_feature() {
        let s = "MICREC-FEAT v1 visual 1 2\n0 1.0 NaN\n";
        assert!(matches!(parse_features(s.as_bytes(), "f", 1), Err(Error::InvalidFeature { id: 0, .. })));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let s = "MICREC-FEAT v2 text 1 1\n0 1\n";
        assert!(matches!(parse_features(s.as_bytes(), "f", 1), Err(Error::Version(_))));
    }

    #[test]
    fn write_then_parse_is_lossless() {
        let m = FeatureMatrix::new(Modality::Visual, 2, vec![0.1, -1e-300, 3.0f64.sqrt(), 7.0]).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &m).unwrap();
        assert_eq!(parse_features(buf.as_slice(), "f", 2).unwrap(), m);
    }
}
