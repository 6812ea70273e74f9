//! On-disk formats: DTEN tensor files, synthetic-data descriptors and CP
//! model bundles.
//!
//! DTEN layout (all integers and floats little-endian):
//!
//! ```text
//! b"DTEN"  u8 version = 1  u8 kind (0 real f64, 1 complex f64 pairs)  u8 d
//! d × u64 extents
//! payload, colexicographic: f64 per entry (kind 0) or (re, im) per entry (kind 1)
//! ```
//!
//! Tensors whose imaginary parts are all `+0.0` are written as kind 0, so a
//! read/write cycle reproduces the file byte for byte.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::cpfit::{SynthKind, SynthSpec};
use crate::diagnostics::CpModel;
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix, C64};

pub const MAGIC: &[u8; 4] = b"DTEN";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ScalarKind {
    Real = 0,
    Complex = 1,
}

pub fn write_tensor<W: Write>(mut w: W, x: &DenseTensor) -> Result<()> {
    let d = u8::try_from(x.order())
        .map_err(|_| Error::InvalidShape(format!("{} modes exceed the DTEN limit", x.order())))?;
    let kind = if x.is_real() {
        ScalarKind::Real
    } else {
        ScalarKind::Complex
    };
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, kind as u8, d])?;
    for &n in x.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(x.len() * if kind == ScalarKind::Real { 8 } else { 16 });
    for v in x.data() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        if kind == ScalarKind::Complex {
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn encode(x: &DenseTensor) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_tensor(&mut out, x)?;
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format(format!(
            "truncated DTEN file while reading {what}"
        )));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

pub fn decode(mut bytes: &[u8]) -> Result<DenseTensor> {
    let b = &mut bytes;
    if take(b, 4, "magic")? != MAGIC {
        return Err(Error::Format("not a DTEN file (bad magic)".into()));
    }
    let header = take(b, 3, "header")?;
    if header[0] != VERSION {
        return Err(Error::Format(format!(
            "unsupported DTEN version {}",
            header[0]
        )));
    }
    let kind = match header[1] {
        0 => ScalarKind::Real,
        1 => ScalarKind::Complex,
        k => return Err(Error::Format(format!("unknown scalar kind {k}"))),
    };
    let d = header[2] as usize;
    if d == 0 {
        return Err(Error::Format("DTEN file with zero modes".into()));
    }
    let mut shape = Vec::with_capacity(d);
    for _ in 0..d {
        let raw = u64::from_le_bytes(take(b, 8, "extent")?.try_into().expect("8 bytes"));
        shape.push(usize::try_from(raw).map_err(|_| Error::Format("extent too large".into()))?);
    }
    if shape.contains(&0) {
        return Err(Error::Format("DTEN file with a zero extent".into()));
    }
    let len = shape
        .iter()
        .try_fold(1usize, |a, &n| a.checked_mul(n))
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let width = if kind == ScalarKind::Real { 8 } else { 16 };
    let expected = len
        .checked_mul(width)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if b.len() != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {expected}",
            b.len()
        )));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
    let data = b
        .chunks_exact(width)
        .map(|c| match kind {
            ScalarKind::Real => C64::new(f(c), 0.0),
            ScalarKind::Complex => C64::new(f(&c[..8]), f(&c[8..])),
        })
        .collect();
    DenseTensor::new(shape, data)
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save_tensor(path: &Path, x: &DenseTensor) -> Result<()> {
    fs::write(path, encode(x)?)?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<DenseTensor> {
    decode(&fs::read(path)?)
}

/// Text descriptor of a synthetic data specification (`key value` lines).
pub fn synth_descriptor(spec: &SynthSpec) -> String {
    let shape: Vec<String> = spec.shape.iter().map(ToString::to_string).collect();
    let (kind, sigma) = match spec.kind {
        SynthKind::Gaussian => ("gaussian", "none".to_string()),
        SynthKind::Coherent { sigma } => ("coherent", sigma.to_string()),
    };
    format!(
        "cpmodel 1\nshape {}\nrank {}\nkind {kind}\nsigma {sigma}\nseed {}\n",
        shape.join(","),
        spec.rank,
        spec.seed
    )
}

pub fn parse_synth_descriptor(text: &str) -> Result<SynthSpec> {
    let mut fields = std::collections::HashMap::new();
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| Error::Format(format!("descriptor line `{line}`")))?;
        fields.insert(k, v.trim());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::Format(format!("descriptor is missing `{k}`")))
    };
    if get("cpmodel")? != "1" {
        return Err(Error::Format("unsupported model descriptor version".into()));
    }
    let bad = |k: &str| Error::Format(format!("bad `{k}` in descriptor"));
    let shape = get("shape")?
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<Vec<usize>, _>>()
        .map_err(|_| bad("shape"))?;
    let rank = get("rank")?.parse().map_err(|_| bad("rank"))?;
    let seed = get("seed")?.parse().map_err(|_| bad("seed"))?;
    let kind = match get("kind")? {
        "gaussian" => SynthKind::Gaussian,
        "coherent" => SynthKind::Coherent {
            sigma: get("sigma")?.parse().map_err(|_| bad("sigma"))?,
        },
        _ => return Err(bad("kind")),
    };
    Ok(SynthSpec {
        shape,
        rank,
        kind,
        seed,
    })
}

fn matrix_as_tensor(m: &Matrix) -> Result<DenseTensor> {
    DenseTensor::new(vec![m.rows(), m.cols()], m.transpose().data().to_vec())
}

fn tensor_as_matrix(t: &DenseTensor) -> Result<Matrix> {
    if t.order() != 2 {
        return Err(Error::Format(format!(
            "expected a 2-mode factor, found {} modes",
            t.order()
        )));
    }
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    Matrix::from_fn(rows, cols, |i, k| t.data()[i + rows * k])
}

/// Paths of a model bundle: `<prefix>.weights.dten` and
/// `<prefix>.factor<ℓ>.dten` for every mode.
pub fn model_paths(prefix: &Path, order: usize) -> (PathBuf, Vec<PathBuf>) {
    let with = |suffix: String| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (
        with(".weights.dten".into()),
        (0..order)
            .map(|l| with(format!(".factor{l}.dten")))
            .collect(),
    )
}

pub fn save_model(prefix: &Path, model: &CpModel) -> Result<()> {
    let (weights, factors) = model_paths(prefix, model.order());
    save_tensor(
        &weights,
        &DenseTensor::new(vec![model.rank()], model.weights().to_vec())?,
    )?;
    for (path, f) in factors.iter().zip(model.factors()) {
        save_tensor(path, &matrix_as_tensor(f)?)?;
    }
    Ok(())
}

pub fn load_model(prefix: &Path, order: usize) -> Result<CpModel> {
    let (weights, factors) = model_paths(prefix, order);
    let w = load_tensor(&weights)?.into_data();
    let f = factors
        .iter()
        .map(|p| tensor_as_matrix(&load_tensor(p)?))
        .collect::<Result<Vec<_>>>()?;
    CpModel::new(w, f)
}
