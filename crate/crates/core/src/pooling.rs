//! Sum-pooling of token activations into one signature per document, and the
//! `SAEP2` pooled-corpus file.
//!
//! # SAEP2 layout
//!
//! ```text
//! "SAEP2"  m:u32  doc_count:u32
//! per document:
//!     id_len:u16  id:[u8]  date:i32 (days since 1970-01-01)
//!     m x f64 values   label:u8 (0, 1, or 255 for unset)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use chrono::NaiveDate;

use crate::actstore::{ActivationStream, SaefReader};
use crate::binio::{self, OffsetReader};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;

pub const DEFAULT_TOKEN_CAP: usize = 20_000;
pub const POOLED_MAGIC: &[u8; 5] = b"SAEP2";
const LABEL_UNSET: u8 = 255;

/// Pooled signature of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVector {
    pub doc_id: String,
    pub date: NaiveDate,
    pub values: Vec<f64>,
    pub label: Option<u8>,
}

impl DocumentVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sums the first `min(n_tokens, token_cap)` token rows.
pub fn sum_pool(stream: &ActivationStream, token_cap: usize) -> Result<DocumentVector> {
    if token_cap == 0 {
        return Err(Error::Config("token_cap must be at least 1".into()));
    }
    let mut values = vec![0.0f64; stream.n_features()];
    for row in stream.rows().iter().take(token_cap) {
        for (j, v) in row.iter() {
            values[j as usize] += v as f64;
        }
    }
    Ok(DocumentVector {
        doc_id: stream.doc_id.clone(),
        date: stream.date,
        values,
        label: None,
    })
}

/// Order-preserving `sum_pool` over a corpus sharing one feature width.
pub fn pool_corpus(streams: &[ActivationStream], token_cap: usize) -> Result<Vec<DocumentVector>> {
    if let Some(first) = streams.first() {
        let m = first.n_features();
        if let Some(bad) = streams.iter().find(|s| s.n_features() != m) {
            return Err(Error::Shape(format!(
                "document {} has {} features, expected {m}",
                bad.doc_id,
                bad.n_features()
            )));
        }
    }
    par::map_slice(streams, |s| sum_pool(s, token_cap))
        .into_iter()
        .collect()
}

/// Summary statistics gathered while pooling from files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoolSummary {
    pub doc_count: usize,
    pub n_features: usize,
    pub total_tokens: u64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub truncated_docs: usize,
}

impl PoolSummary {
    pub fn mean_tokens(&self) -> f64 {
        if self.doc_count == 0 {
            0.0
        } else {
            self.total_tokens as f64 / self.doc_count as f64
        }
    }

    pub fn to_kv(&self) -> String {
        format!(
            "doc_count={}\nn_features={}\ntotal_tokens={}\nmean_tokens={:.3}\nmin_tokens={}\nmax_tokens={}\ntruncated_docs={}\n",
            self.doc_count,
            self.n_features,
            self.total_tokens,
            self.mean_tokens(),
            self.min_tokens,
            self.max_tokens,
            self.truncated_docs
        )
    }
}

/// Pools one or more SAEF files document by document, holding at most one
/// document's token rows in memory at a time.
pub fn pool_files<P: AsRef<Path>>(
    paths: &[P],
    token_cap: usize,
) -> Result<(Vec<DocumentVector>, PoolSummary)> {
    if token_cap == 0 {
        return Err(Error::Config("token_cap must be at least 1".into()));
    }
    let mut docs = Vec::new();
    let mut summary = PoolSummary {
        min_tokens: usize::MAX,
        ..Default::default()
    };
    let mut width: Option<usize> = None;
    for path in paths {
        let path = path.as_ref();
        let reader = SaefReader::open(path)?;
        match width {
            None => width = Some(reader.n_features()),
            Some(m) if m != reader.n_features() => {
                return Err(Error::Shape(format!(
                    "{} has {} features, earlier files have {m}",
                    path.display(),
                    reader.n_features()
                )))
            }
            _ => {}
        }
        for stream in reader {
            let stream = stream.map_err(|e| e.in_file(path))?;
            let n = stream.n_tokens();
            summary.total_tokens += n as u64;
            summary.min_tokens = summary.min_tokens.min(n);
            summary.max_tokens = summary.max_tokens.max(n);
            if n > token_cap {
                summary.truncated_docs += 1;
            }
            docs.push(sum_pool(&stream, token_cap)?);
        }
    }
    summary.doc_count = docs.len();
    summary.n_features = width.unwrap_or(0);
    if docs.is_empty() {
        summary.min_tokens = 0;
    }
    Ok((docs, summary))
}

/// Stacks document values into a row-major matrix.
pub fn to_matrix(docs: &[DocumentVector]) -> Result<Matrix> {
    let m = docs.first().map(|d| d.len()).unwrap_or(0);
    Matrix::from_rows(m, docs.iter().map(|d| d.values.as_slice()))
}

/// Labels of labeled documents; errors if any is unset.
pub fn labels(docs: &[DocumentVector]) -> Result<Vec<u8>> {
    docs.iter()
        .map(|d| {
            d.label
                .ok_or_else(|| Error::Input(format!("document {} has no label", d.doc_id)))
        })
        .collect()
}

pub fn write_pooled<W: Write>(docs: &[DocumentVector], mut w: W) -> Result<()> {
    let m = docs.first().map(|d| d.len()).unwrap_or(0);
    if let Some(bad) = docs.iter().find(|d| d.len() != m) {
        return Err(Error::Shape(format!(
            "document {} has {} values, expected {m}",
            bad.doc_id,
            bad.len()
        )));
    }
    let io = |e| Error::io("<pooled sink>", e);
    w.write_all(POOLED_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(m as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(docs.len() as u32).map_err(io)?;
    for d in docs {
        binio::write_short_string(&mut w, &d.doc_id).map_err(io)?;
        binio::write_date(&mut w, d.date).map_err(io)?;
        for &v in &d.values {
            w.write_f64::<LittleEndian>(v).map_err(io)?;
        }
        let label = match d.label {
            None => LABEL_UNSET,
            Some(l @ (0 | 1)) => l,
            Some(other) => return Err(Error::Input(format!("label {other} is not 0/1"))),
        };
        w.write_u8(label).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_pooled<R: Read>(src: R) -> Result<Vec<DocumentVector>> {
    let mut r = OffsetReader::new(src);
    r.magic(POOLED_MAGIC)?;
    let m = r.u32("m")? as usize;
    let count = r.u32("doc_count")?;
    let mut docs = Vec::new();
    for _ in 0..count {
        let doc_id = r.short_string("document id")?;
        let date = r.date("document date")?;
        let values = (0..m)
            .map(|_| r.f64("pooled value"))
            .collect::<Result<Vec<_>>>()?;
        let at = r.offset();
        let label = match r.u8("label")? {
            LABEL_UNSET => None,
            l @ (0 | 1) => Some(l),
            other => {
                return Err(Error::Corruption {
                    offset: at,
                    reason: format!("label byte {other}"),
                })
            }
        };
        docs.push(DocumentVector {
            doc_id,
            date,
            values,
            label,
        });
    }
    r.at_eof()?;
    Ok(docs)
}

pub fn write_pooled_file(docs: &[DocumentVector], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pooled(docs, BufWriter::new(f))
}

pub fn read_pooled_file(path: impl AsRef<Path>) -> Result<Vec<DocumentVector>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pooled(BufReader::new(f)).map_err(|e| e.in_file(path))
}
