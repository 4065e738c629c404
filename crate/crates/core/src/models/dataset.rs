//! Sample storage plus the on-disk binary and CSV formats.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic  b"RSDS"
//!      4     2  version (u16) = 1
//!      6     1  family tag: 0 classification, 1 robust-regression, 2 gmm2
//!      7     1  response kind: 0 none, 1 binary, 2 real
//!      8     8  n (u64)
//!     16     8  d (u64)
//!     24   ...  n rows of f64: x_1..x_d, then y when a response is present
//! ```
//!
//! CSV: a header `x1,...,xd[,y]` followed by one row per sample, response in
//! the last column.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RSDS";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Classification,
    RobustRegression,
    Gmm2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    None,
    Binary,
    Real,
}

impl Family {
    pub fn tag(self) -> u8 {
        match self {
            Family::Classification => 0,
            Family::RobustRegression => 1,
            Family::Gmm2 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Family::Classification),
            1 => Ok(Family::RobustRegression),
            2 => Ok(Family::Gmm2),
            t => Err(Error::Format(format!("unknown family tag {t}"))),
        }
    }

    pub fn response_kind(self) -> ResponseKind {
        match self {
            Family::Classification => ResponseKind::Binary,
            Family::RobustRegression => ResponseKind::Real,
            Family::Gmm2 => ResponseKind::None,
        }
    }

    /// Parameter dimension for feature dimension `d`.
    pub fn param_dim(self, d: usize) -> usize {
        match self {
            Family::Gmm2 => 2 * d,
            _ => d,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Classification => "classification",
            Family::RobustRegression => "robust-regression",
            Family::Gmm2 => "gmm2",
        }
    }
}

impl ResponseKind {
    fn tag(self) -> u8 {
        match self {
            ResponseKind::None => 0,
            ResponseKind::Binary => 1,
            ResponseKind::Real => 2,
        }
    }
}

/// `n` samples of `d` features, with responses unless the family is `gmm2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    family: Family,
    features: DMatrix<f64>,
    responses: Option<DVector<f64>>,
}

impl Dataset {
    pub fn new(family: Family, features: DMatrix<f64>, responses: Option<DVector<f64>>) -> Result<Self> {
        let n = features.nrows();
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features contain non-finite values"));
        }
        match (family.response_kind(), &responses) {
            (ResponseKind::None, Some(_)) => {
                return Err(Error::invalid("gmm2 datasets carry no responses"));
            }
            (ResponseKind::None, None) => {}
            (_, None) => {
                return Err(Error::invalid(format!("{} requires responses", family.name())));
            }
            (kind, Some(y)) => {
                if y.len() != n {
                    return Err(Error::invalid(format!("{} responses for {n} samples", y.len())));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("responses contain non-finite values"));
                }
                if kind == ResponseKind::Binary && y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::invalid("classification labels must be 0 or 1"));
                }
            }
        }
        Ok(Dataset {
            family,
            features,
            responses,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn responses(&self) -> Option<&DVector<f64>> {
        self.responses.as_ref()
    }

    /// Responses, or an error for families without them.
    pub(crate) fn y(&self) -> Result<&DVector<f64>> {
        self.responses
            .as_ref()
            .ok_or_else(|| Error::invalid("dataset has no responses"))
    }

    pub fn param_dim(&self) -> usize {
        self.family.param_dim(self.d())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(&MAGIC);
        header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        header.push(self.family.tag());
        header.push(self.family.response_kind().tag());
        header.extend_from_slice(&(self.n() as u64).to_le_bytes());
        header.extend_from_slice(&(self.d() as u64).to_le_bytes());
        w.write_all(&header)?;
        let mut row = Vec::with_capacity(8 * (self.d() + 1));
        for i in 0..self.n() {
            row.clear();
            for j in 0..self.d() {
                row.extend_from_slice(&self.features[(i, j)].to_le_bytes());
            }
            if let Some(y) = &self.responses {
                row.extend_from_slice(&y[i].to_le_bytes());
            }
            w.write_all(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if header[0..4] != MAGIC {
            return Err(Error::Format("bad magic; not a dataset file".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let family = Family::from_tag(header[6])?;
        if header[7] != family.response_kind().tag() {
            return Err(Error::Format(format!(
                "response kind {} does not match family {}",
                header[7],
                family.name()
            )));
        }
        let n = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
        let d = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes")) as usize;
        let has_y = family.response_kind() != ResponseKind::None;
        let width = d + usize::from(has_y);
        let mut features = DMatrix::zeros(n, d);
        let mut y = DVector::zeros(if has_y { n } else { 0 });
        let mut buf = vec![0u8; 8 * width];
        for i in 0..n {
            r.read_exact(&mut buf)?;
            let mut vals = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
            for j in 0..d {
                features[(i, j)] = vals.next().expect("row width");
            }
            if has_y {
                y[i] = vals.next().expect("row width");
            }
        }
        Dataset::new(family, features, has_y.then_some(y))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut cols: Vec<String> = (1..=self.d()).map(|j| format!("x{j}")).collect();
        if self.responses.is_some() {
            cols.push("y".into());
        }
        writeln!(w, "{}", cols.join(","))?;
        for i in 0..self.n() {
            let mut fields: Vec<String> = (0..self.d()).map(|j| format!("{:?}", self.features[(i, j)])).collect();
            if let Some(y) = &self.responses {
                fields.push(format!("{:?}", y[i]));
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads CSV written by [`Dataset::write_csv`]. The header decides whether
    /// the last column is a response.
    pub fn read_csv<R: Read>(family: Family, r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty CSV".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let has_y = cols.last() == Some(&"y");
        let d = cols.len() - usize::from(has_y);
        let mut rows: Vec<f64> = Vec::new();
        let mut y = Vec::new();
        let mut n = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != cols.len() {
                return Err(Error::Format(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 2,
                    vals.len(),
                    cols.len()
                )));
            }
            rows.extend_from_slice(&vals[..d]);
            if has_y {
                y.push(vals[d]);
            }
            n += 1;
        }
        let features = DMatrix::from_row_slice(n, d, &rows);
        Dataset::new(family, features, has_y.then(|| DVector::from_vec(y)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        if is_csv(path) {
            self.write_csv(file)
        } else {
            self.write_binary(file)
        }
    }

    /// Loads by extension: `.csv` needs the family, binary files carry it.
    pub fn load(path: &Path, family: Option<Family>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        if is_csv(path) {
            let family = family.ok_or_else(|| Error::invalid("CSV datasets need an explicit family"))?;
            Dataset::read_csv(family, file)
        } else {
            Dataset::read_binary(file)
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(family: Family) -> Dataset {
        let x = DMatrix::from_row_slice(3, 2, &[0.5, -1.25, 2.0, 0.0, -3.5, 1e-300]);
        let y = match family {
            Family::Classification => Some(DVector::from_vec(vec![1.0, 0.0, 1.0])),
            Family::RobustRegression => Some(DVector::from_vec(vec![0.1, -7.0, 3.3])),
            Family::Gmm2 => None,
        };
        Dataset::new(family, x, y).unwrap()
    }

    #[test]
    fn binary_header_layout() {
        let mut buf = Vec::new();
        sample(Family::RobustRegression).write_binary(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"RSDS");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(buf[6], 1);
        assert_eq!(buf[7], 2);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 24 + 3 * 3 * 8);
        // first row: x11, x12, y1
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 0.5);
        assert_eq!(f64::from_le_bytes(buf[40..48].try_into().unwrap()), 0.1);
    }

    #[test]
    fn gmm_rows_have_no_response() {
        let mut buf = Vec::new();
        sample(Family::Gmm2).write_binary(&mut buf).unwrap();
        assert_eq!(buf[7], 0);
        assert_eq!(buf.len(), 24 + 3 * 2 * 8);
        assert_eq!(Dataset::read_binary(&buf[..]).unwrap(), sample(Family::Gmm2));
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut buf = Vec::new();
        sample(Family::Classification).write_binary(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::read_binary(&bad[..]), Err(Error::Format(_))));
        let truncated = &buf[..buf.len() - 4];
        assert!(Dataset::read_binary(truncated).is_err());
        let mut wrong_kind = buf.clone();
        wrong_kind[7] = 2;
        assert!(Dataset::read_binary(&wrong_kind[..]).is_err());
    }

    #[test]
    fn validation() {
        let x = DMatrix::zeros(2, 1);
        assert!(Dataset::new(Family::Classification, x.clone(), Some(DVector::from_vec(vec![0.5, 1.0]))).is_err());
        assert!(Dataset::new(Family::Classification, x.clone(), None).is_err());
        assert!(Dataset::new(Family::Gmm2, x.clone(), Some(DVector::zeros(2))).is_err());
        assert!(Dataset::new(Family::RobustRegression, x, Some(DVector::zeros(3))).is_err());
        let nan = DMatrix::from_element(1, 1, f64::NAN);
        assert!(Dataset::new(Family::Gmm2, nan, None).is_err());
    }

    #[test]
    fn csv_has_response_last() {
        let mut buf = Vec::new();
        sample(Family::Classification).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,y\n0.5,-1.25,1.0\n"));
        assert_eq!(Dataset::read_csv(Family::Classification, &buf[..]).unwrap(), sample(Family::Classification));
    }

    proptest! {
        #[test]
        fn formats_round_trip(
            n in 0usize..6, d in 1usize..4, seed in any::<u64>(),
        ) {
            let mut rng = crate::math::StreamRng::new(seed, 0);
            let x = DMatrix::from_fn(n, d, |_, _| rng.normal() * 1e3);
            let y = DVector::from_fn(n, |_, _| rng.normal());
            let data = Dataset::new(Family::RobustRegression, x, Some(y)).unwrap();
            let mut bin = Vec::new();
            data.write_binary(&mut bin).unwrap();
            prop_assert_eq!(&Dataset::read_binary(&bin[..]).unwrap(), &data);
            let mut csv = Vec::new();
            data.write_csv(&mut csv).unwrap();
            prop_assert_eq!(&Dataset::read_csv(Family::RobustRegression, &csv[..]).unwrap(), &data);
        }
    }
}
