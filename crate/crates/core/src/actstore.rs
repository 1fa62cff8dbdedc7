//! Token-level activation dumps (`SAEF` files) and the earnings table.
//!
//! # SAEF layout
//!
//! All integers little-endian.
//!
//! ```text
//! "SAEF"  version:u16 (=1)  n_features:u32  doc_count:u32
//! per document:
//!     id_len:u16  id:[u8; id_len] (UTF-8)
//!     date:i32 (days since 1970-01-01)
//!     n_tokens:u32
//!     per token: nnz:u32  nnz x (index:u32, value:f32)
//! ```
//!
//! [`SaefReader`] yields one document at a time, so memory use is bounded by
//! the largest document rather than the file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, WriteBytesExt};
use chrono::NaiveDate;

use crate::binio::{self, OffsetReader};
use crate::error::{Error, Result};

pub const SAEF_MAGIC: &[u8; 4] = b"SAEF";
pub const SAEF_VERSION: u16 = 1;

/// One token's SAE latent vector in sorted sparse form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    indices: Vec<u32>,
    values: Vec<f32>,
}

impl SparseRow {
    pub fn new(indices: Vec<u32>, values: Vec<f32>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Input(format!(
                "activation values must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self { indices, values })
    }

    /// Builds a row from `(index, value)` pairs in any order.
    pub fn from_pairs(mut pairs: Vec<(u32, f32)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let (indices, values) = pairs.into_iter().unzip();
        Self::new(indices, values)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn to_dense(&self, m: usize) -> Vec<f32> {
        let mut out = vec![0.0; m];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }

    pub(crate) fn max_index(&self) -> Option<u32> {
        self.indices.last().copied()
    }
}

/// Token-level SAE activations for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStream {
    pub doc_id: String,
    pub date: NaiveDate,
    n_features: u32,
    rows: Vec<SparseRow>,
}

impl ActivationStream {
    pub fn new(
        doc_id: impl Into<String>,
        date: NaiveDate,
        n_features: u32,
        rows: Vec<SparseRow>,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Shape("n_features must be at least 1".into()));
        }
        for (t, row) in rows.iter().enumerate() {
            if let Some(max) = row.max_index() {
                if max >= n_features {
                    return Err(Error::Shape(format!(
                        "token {t}: feature index {max} >= n_features {n_features}"
                    )));
                }
            }
        }
        Ok(Self {
            doc_id: doc_id.into(),
            date,
            n_features,
            rows,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features as usize
    }

    pub fn n_tokens(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<SparseRow> {
        self.rows
    }
}

/// Analyst estimates and the reported figure for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct EarningsRecord {
    pub doc_id: String,
    pub date: NaiveDate,
    pub reported_eps: f64,
    pub analyst_estimates: Vec<f64>,
}

/// Dense per-document vector (residual-stream input or a probe vector).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVectorRecord {
    pub doc_id: String,
    pub date: NaiveDate,
    values: Vec<f64>,
}

impl DenseVectorRecord {
    pub fn new(doc_id: impl Into<String>, date: NaiveDate, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("value {i} is not finite")));
        }
        Ok(Self {
            doc_id: doc_id.into(),
            date,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Writes streams to any sink in SAEF layout.
pub fn write_activations<W: Write>(streams: &[ActivationStream], mut w: W) -> Result<()> {
    let first = streams
        .first()
        .ok_or_else(|| Error::Format("cannot write an empty stream list".into()))?;
    let m = first.n_features;
    if let Some(bad) = streams.iter().find(|s| s.n_features != m) {
        return Err(Error::Format(format!(
            "document {} has {} features, expected {m}",
            bad.doc_id, bad.n_features
        )));
    }
    let doc_count = u32::try_from(streams.len())
        .map_err(|_| Error::Format("too many documents for one file".into()))?;
    let io = |e| Error::io("<activation sink>", e);

    w.write_all(SAEF_MAGIC).map_err(io)?;
    w.write_u16::<LittleEndian>(SAEF_VERSION).map_err(io)?;
    w.write_u32::<LittleEndian>(m).map_err(io)?;
    w.write_u32::<LittleEndian>(doc_count).map_err(io)?;
    for s in streams {
        binio::write_short_string(&mut w, &s.doc_id).map_err(io)?;
        binio::write_date(&mut w, s.date).map_err(io)?;
        w.write_u32::<LittleEndian>(s.rows.len() as u32)
            .map_err(io)?;
        for row in &s.rows {
            w.write_u32::<LittleEndian>(row.nnz() as u32).map_err(io)?;
            for (i, v) in row.iter() {
                w.write_u32::<LittleEndian>(i).map_err(io)?;
                w.write_f32::<LittleEndian>(v).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn write_activation_file(streams: &[ActivationStream], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    // validate before touching the filesystem
    if streams.is_empty() {
        return Err(Error::Format("cannot write an empty stream list".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_activations(streams, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Streaming SAEF reader; yields one document per `next()`.
pub struct SaefReader<R> {
    src: OffsetReader<R>,
    n_features: u32,
    doc_count: u32,
    read: u32,
    failed: bool,
}

impl SaefReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path: PathBuf = path.as_ref().into();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Self::new(BufReader::new(file)).map_err(|e| e.in_file(&path))
    }
}

impl<R: Read> SaefReader<R> {
    pub fn new(inner: R) -> Result<Self> {
        let mut src = OffsetReader::new(inner);
        src.magic(SAEF_MAGIC)?;
        let version = src.u16("version")?;
        if version != SAEF_VERSION {
            return Err(Error::Format(format!(
                "unsupported SAEF version {version} (expected {SAEF_VERSION})"
            )));
        }
        let n_features = src.u32("n_features")?;
        if n_features == 0 {
            return Err(Error::Format("n_features is zero".into()));
        }
        let doc_count = src.u32("doc_count")?;
        Ok(Self {
            src,
            n_features,
            doc_count,
            read: 0,
            failed: false,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features as usize
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count as usize
    }

    fn read_doc(&mut self) -> Result<ActivationStream> {
        let src = &mut self.src;
        let doc_id = src.short_string("document id")?;
        let date = src.date("document date")?;
        let n_tokens = src.u32("token count")?;
        let mut rows = Vec::new();
        for _ in 0..n_tokens {
            let row_start = src.offset();
            let nnz = src.u32("row nnz")?;
            if nnz > self.n_features {
                return Err(Error::Corruption {
                    offset: row_start,
                    reason: format!("row nnz {nnz} exceeds n_features {}", self.n_features),
                });
            }
            let mut indices = Vec::with_capacity(nnz as usize);
            let mut values = Vec::with_capacity(nnz as usize);
            for _ in 0..nnz {
                let at = src.offset();
                let i = src.u32("feature index")?;
                let v = src.f32("activation value")?;
                if i >= self.n_features || indices.last().is_some_and(|&p| p >= i) {
                    return Err(Error::Corruption {
                        offset: at,
                        reason: format!("feature index {i} out of order or out of range"),
                    });
                }
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Corruption {
                        offset: at + 4,
                        reason: format!("activation value {v} is negative or not finite"),
                    });
                }
                indices.push(i);
                values.push(v);
            }
            rows.push(SparseRow { indices, values });
        }
        Ok(ActivationStream {
            doc_id,
            date,
            n_features: self.n_features,
            rows,
        })
    }
}

impl<R: Read> Iterator for SaefReader<R> {
    type Item = Result<ActivationStream>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.read == self.doc_count {
            self.failed = true;
            return match self.src.at_eof() {
                Ok(_) => None,
                Err(e) => Some(Err(e)),
            };
        }
        let out = self.read_doc();
        match out {
            Ok(_) => self.read += 1,
            Err(_) => self.failed = true,
        }
        Some(out)
    }
}

pub fn read_activation_file(path: impl AsRef<Path>) -> Result<Vec<ActivationStream>> {
    let path = path.as_ref();
    SaefReader::open(path)?
        .collect::<Result<_>>()
        .map_err(|e| e.in_file(path))
}

/// Column names of the earnings CSV, in order.
pub const EARNINGS_COLUMNS: [&str; 4] = ["doc_id", "date", "reported_eps", "analyst_estimates"];

pub fn read_earnings<R: Read>(src: R) -> Result<Vec<EarningsRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(src);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("earnings header: {e}")))?
        .clone();
    let mut pos = [0usize; 4];
    for (slot, name) in pos.iter_mut().zip(EARNINGS_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.into(),
                line: Some(1),
            })?;
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| -> Result<&str> {
            match rec.get(pos[k]) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::Schema {
                    column: EARNINGS_COLUMNS[k].into(),
                    line: Some(line),
                }),
            }
        };
        let doc_id = field(0)?.to_string();
        let date = NaiveDate::parse_from_str(field(1)?, "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            message: format!("date {:?}: {e}", field(1).unwrap_or_default()),
        })?;
        let reported_eps = parse_real(field(2)?, line, "reported_eps")?;
        let analyst_estimates = field(3)?
            .split(';')
            .map(|s| parse_real(s.trim(), line, "analyst_estimates"))
            .collect::<Result<Vec<_>>>()?;
        out.push(EarningsRecord {
            doc_id,
            date,
            reported_eps,
            analyst_estimates,
        });
    }
    Ok(out)
}

fn parse_real(s: &str, line: u64, column: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("{column}: {s:?} is not a finite number"),
        }),
    }
}

pub fn read_earnings_table(path: impl AsRef<Path>) -> Result<Vec<EarningsRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_earnings(BufReader::new(file)).map_err(|e| e.in_file(path))
}

pub fn write_earnings<W: Write>(records: &[EarningsRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Format(format!("earnings CSV: {e}"));
    wtr.write_record(EARNINGS_COLUMNS).map_err(err)?;
    for r in records {
        let estimates = r
            .analyst_estimates
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        wtr.write_record([
            r.doc_id.as_str(),
            &r.date.format("%Y-%m-%d").to_string(),
            &r.reported_eps.to_string(),
            &estimates,
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::io("<earnings sink>", e))
}

pub fn write_earnings_table(records: &[EarningsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_earnings(records, BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn sample() -> ActivationStream {
        ActivationStream::new(
            "D1",
            date(2014, 3, 31),
            4,
            vec![
                SparseRow::new(vec![0], vec![1.0]).unwrap(),
                SparseRow::new(vec![3], vec![2.0]).unwrap(),
            ],
        )
        .unwrap()
    }

    fn to_bytes(streams: &[ActivationStream]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_activations(streams, &mut buf).unwrap();
        buf
    }

    #[test]
    fn roundtrip_single_doc() {
        let s = vec![sample()];
        let bytes = to_bytes(&s);
        let back: Vec<_> = SaefReader::new(&bytes[..])
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&[sample()]);
        assert_eq!(&bytes[..4], b"SAEF");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 1);
        // header 14 + id 2+2 + date 4 + n_tokens 4 + 2 rows of (4 + 8)
        assert_eq!(bytes.len(), 14 + 4 + 4 + 4 + 2 * 12);
    }

    #[test]
    fn empty_list_rejected() {
        assert!(matches!(
            write_activations(&[], Vec::new()),
            Err(Error::Format(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.saef");
        assert!(matches!(
            write_activation_file(&[], &p),
            Err(Error::Format(_))
        ));
        assert!(!p.exists());
    }

    #[test]
    fn mixed_widths_rejected() {
        let a = sample();
        let b = ActivationStream::new("D2", date(2014, 1, 1), 5, vec![]).unwrap();
        assert!(matches!(
            write_activations(&[a, b], Vec::new()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = to_bytes(&[sample()]);
        bytes[0] = b'X';
        assert!(matches!(SaefReader::new(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = to_bytes(&[sample()]);
        bytes[4] = 2;
        assert!(matches!(SaefReader::new(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_mid_row() {
        let bytes = to_bytes(&[sample()]);
        let cut = &bytes[..bytes.len() - 3];
        let res: Result<Vec<_>> = SaefReader::new(cut).unwrap().collect();
        match res {
            Err(Error::Corruption { offset, .. }) => {
                // the value of the last token starts 4 bytes from the end
                assert_eq!(offset as usize, bytes.len() - 4);
            }
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_is_corruption() {
        let mut bytes = to_bytes(&[sample()]);
        bytes.push(0);
        let res: Result<Vec<_>> = SaefReader::new(&bytes[..]).unwrap().collect();
        assert!(matches!(res, Err(Error::Corruption { .. })));
    }

    #[test]
    fn stream_invariants() {
        assert!(SparseRow::new(vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseRow::new(vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseRow::new(vec![1], vec![-1.0]).is_err());
        assert!(SparseRow::new(vec![1], vec![f32::NAN]).is_err());
        let row = SparseRow::new(vec![4], vec![1.0]).unwrap();
        assert!(ActivationStream::new("x", date(2014, 1, 1), 4, vec![row]).is_err());
    }

    #[test]
    fn earnings_line_parses() {
        let csv =
            "doc_id,date,reported_eps,analyst_estimates\nD1,2014-03-31,1.20,\"1.00;0.90;1.10\"\n";
        let recs = read_earnings(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].doc_id, "D1");
        assert_eq!(recs[0].date, date(2014, 3, 31));
        assert_eq!(recs[0].reported_eps, 1.2);
        assert_eq!(recs[0].analyst_estimates, vec![1.0, 0.9, 1.1]);
    }

    #[test]
    fn earnings_missing_date_is_schema_error() {
        let csv = "doc_id,date,reported_eps,analyst_estimates\nD1,,1.20,\"1.0;0.9\"\n";
        match read_earnings(csv.as_bytes()) {
            Err(Error::Schema { column, line }) => {
                assert_eq!(column, "date");
                assert_eq!(line, Some(2));
            }
            other => panic!("{other:?}"),
        }
        let csv = "doc_id,reported_eps,analyst_estimates\nD1,1.20,\"1.0;0.9\"\n";
        match read_earnings(csv.as_bytes()) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "date"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn earnings_bad_eps_reports_line() {
        let csv = "doc_id,date,reported_eps,analyst_estimates\nD1,2014-03-31,1.0,\"1;2\"\nD2,2014-03-31,abc,\"1;2\"\n";
        match read_earnings(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn earnings_roundtrip() {
        let recs = vec![EarningsRecord {
            doc_id: "D9".into(),
            date: date(2013, 7, 1),
            reported_eps: 0.1 + 0.2,
            analyst_estimates: vec![0.3, 1.0 / 3.0],
        }];
        let mut buf = Vec::new();
        write_earnings(&recs, &mut buf).unwrap();
        assert_eq!(read_earnings(&buf[..]).unwrap(), recs);
    }
}
