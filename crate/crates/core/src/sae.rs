//! Sparse autoencoder forward pass: `h(z) = act(z W_enc + b_enc)` and
//! `SAE(z) = h(z) W_dec + b_dec`.
//!
//! # Parameter file (`SAEP`)
//!
//! ```text
//! "SAEP"  version:u16 (=1)  d:u32  m:u32  tag:u8 (0=Relu, 1=TopK, 2=JumpRelu)
//! tag payload: TopK -> k_act:u32; JumpRelu -> m x f32 thresholds; Relu -> none
//! W_enc: d x m f32 (row-major)   b_enc: m f32
//! W_dec: m x d f32 (row-major)   b_dec: d f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use chrono::NaiveDate;

use crate::actstore::{ActivationStream, SparseRow};
use crate::binio::OffsetReader;
use crate::error::{Error, Result};

pub const SAEP_MAGIC: &[u8; 4] = b"SAEP";
pub const SAEP_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Relu,
    /// ReLU, then keep only the `k` largest survivors. Ties at the cut go to
    /// the lower feature index.
    TopKRelu {
        k: usize,
    },
    /// Pass `x` through only where `x > threshold[j]`.
    JumpRelu {
        thresholds: Vec<f32>,
    },
}

#[derive(Debug, Clone)]
pub struct SaeParams {
    d: usize,
    m: usize,
    w_enc: Vec<f32>,
    b_enc: Vec<f32>,
    w_dec: Vec<f32>,
    b_dec: Vec<f32>,
    activation: Activation,
}

impl SaeParams {
    pub fn new(
        d: usize,
        m: usize,
        w_enc: Vec<f32>,
        b_enc: Vec<f32>,
        w_dec: Vec<f32>,
        b_dec: Vec<f32>,
        activation: Activation,
    ) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::Shape(format!("d={d} and m={m} must both be >= 1")));
        }
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Shape(format!(
                    "{name} has {got} entries, expected {want}"
                )))
            }
        };
        check("W_enc", w_enc.len(), d * m)?;
        check("b_enc", b_enc.len(), m)?;
        check("W_dec", w_dec.len(), m * d)?;
        check("b_dec", b_dec.len(), d)?;
        match &activation {
            Activation::Relu => {}
            Activation::TopKRelu { k } => {
                if *k == 0 || *k > m {
                    return Err(Error::Shape(format!("TopK k_act={k} must be in 1..={m}")));
                }
            }
            Activation::JumpRelu { thresholds } => {
                check("JumpReLU thresholds", thresholds.len(), m)?;
                if thresholds.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                    return Err(Error::Input(
                        "JumpReLU thresholds must be finite and >= 0".into(),
                    ));
                }
            }
        }
        Ok(Self {
            d,
            m,
            w_enc,
            b_enc,
            w_dec,
            b_dec,
            activation,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    /// `z W_enc + b_enc`, accumulated in f64.
    pub fn pre_activation(&self, z: &[f32]) -> Result<Vec<f64>> {
        if z.len() != self.d {
            return Err(Error::Shape(format!(
                "input has length {}, expected d={}",
                z.len(),
                self.d
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(
                "input vector contains non-finite values".into(),
            ));
        }
        let mut pre: Vec<f64> = self.b_enc.iter().map(|&b| b as f64).collect();
        for (i, &zi) in z.iter().enumerate() {
            if zi == 0.0 {
                continue;
            }
            let row = &self.w_enc[i * self.m..(i + 1) * self.m];
            for (p, &w) in pre.iter_mut().zip(row) {
                *p += zi as f64 * w as f64;
            }
        }
        Ok(pre)
    }

    pub fn encode(&self, z: &[f32]) -> Result<SparseRow> {
        let pre = self.pre_activation(z)?;
        Ok(apply_activation(&self.activation, &pre))
    }

    pub fn decode(&self, h: &SparseRow) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = self.b_dec.iter().map(|&b| b as f64).collect();
        for (j, v) in h.iter() {
            let j = j as usize;
            if j >= self.m {
                return Err(Error::Shape(format!("latent index {j} >= m={}", self.m)));
            }
            let row = &self.w_dec[j * self.d..(j + 1) * self.d];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += v as f64 * w as f64;
            }
        }
        Ok(out)
    }

    /// Full autoencoder pass `decode(encode(z))`.
    pub fn reconstruct(&self, z: &[f32]) -> Result<Vec<f64>> {
        self.decode(&self.encode(z)?)
    }

    /// Euclidean norm of `z - SAE(z)`.
    pub fn reconstruction_error(&self, z: &[f32]) -> Result<f64> {
        let recon = self.reconstruct(z)?;
        Ok(z.iter()
            .zip(&recon)
            .map(|(&a, &b)| (a as f64 - b).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    /// Encodes every token of a document. The caller truncates to the token cap.
    pub fn encode_document<T: AsRef<[f32]>>(
        &self,
        doc_id: impl Into<String>,
        date: NaiveDate,
        tokens: &[T],
    ) -> Result<ActivationStream> {
        let rows = tokens
            .iter()
            .enumerate()
            .map(|(t, z)| {
                let z = z.as_ref();
                if z.len() != self.d {
                    return Err(Error::Shape(format!(
                        "token {t} has length {}, expected d={}",
                        z.len(),
                        self.d
                    )));
                }
                self.encode(z)
            })
            .collect::<Result<Vec<_>>>()?;
        ActivationStream::new(doc_id, date, self.m as u32, rows)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SAEP_MAGIC)?;
        w.write_u16::<LittleEndian>(SAEP_VERSION)?;
        w.write_u32::<LittleEndian>(self.d as u32)?;
        w.write_u32::<LittleEndian>(self.m as u32)?;
        match &self.activation {
            Activation::Relu => w.write_u8(0)?,
            Activation::TopKRelu { k } => {
                w.write_u8(1)?;
                w.write_u32::<LittleEndian>(*k as u32)?;
            }
            Activation::JumpRelu { thresholds } => {
                w.write_u8(2)?;
                for &t in thresholds {
                    w.write_f32::<LittleEndian>(t)?;
                }
            }
        }
        for block in [&self.w_enc, &self.b_enc, &self.w_dec, &self.b_dec] {
            for &v in block.iter() {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.flush()
    }

    pub fn read<R: Read>(src: R) -> Result<Self> {
        let mut r = OffsetReader::new(src);
        r.magic(SAEP_MAGIC)?;
        let version = r.u16("version")?;
        if version != SAEP_VERSION {
            return Err(Error::Format(format!("unsupported SAEP version {version}")));
        }
        let d = r.u32("d")? as usize;
        let m = r.u32("m")? as usize;
        let activation = match r.u8("activation tag")? {
            0 => Activation::Relu,
            1 => Activation::TopKRelu {
                k: r.u32("k_act")? as usize,
            },
            2 => Activation::JumpRelu {
                thresholds: read_f32s(&mut r, m, "thresholds")?,
            },
            t => return Err(Error::Format(format!("unknown activation tag {t}"))),
        };
        let w_enc = read_f32s(&mut r, d * m, "W_enc")?;
        let b_enc = read_f32s(&mut r, m, "b_enc")?;
        let w_dec = read_f32s(&mut r, m * d, "W_dec")?;
        let b_dec = read_f32s(&mut r, d, "b_dec")?;
        r.at_eof()?;
        Self::new(d, m, w_enc, b_enc, w_dec, b_dec, activation)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f)).map_err(|e| e.in_file(path))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

fn read_f32s<R: Read>(r: &mut OffsetReader<R>, n: usize, what: &str) -> Result<Vec<f32>> {
    (0..n).map(|_| r.f32(what)).collect()
}

/// Applies a sparsity activation to dense pre-activations and returns the
/// strictly positive survivors in index order.
pub fn apply_activation(activation: &Activation, pre: &[f64]) -> SparseRow {
    let mut kept: Vec<(u32, f32)> = match activation {
        Activation::Relu => positive(pre).collect(),
        Activation::TopKRelu { k } => {
            let mut cand: Vec<(u32, f32)> = positive(pre).collect();
            if cand.len() > *k {
                // descending by value, then ascending by index
                cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                cand.truncate(*k);
                cand.sort_by_key(|p| p.0);
            }
            cand
        }
        Activation::JumpRelu { thresholds } => pre
            .iter()
            .zip(thresholds)
            .enumerate()
            .filter(|(_, (&x, &t))| x > t as f64)
            .map(|(j, (&x, _))| (j as u32, x as f32))
            .filter(|p| p.1 > 0.0)
            .collect(),
    };
    kept.retain(|p| p.1.is_finite());
    let (indices, values) = kept.into_iter().unzip();
    SparseRow::new(indices, values).expect("activation output is sorted and non-negative")
}

fn positive(pre: &[f64]) -> impl Iterator<Item = (u32, f32)> + '_ {
    pre.iter()
        .enumerate()
        .map(|(j, &x)| (j as u32, x as f32))
        .filter(|p| p.1 > 0.0)
}
