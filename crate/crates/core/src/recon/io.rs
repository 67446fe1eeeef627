//! MRVM model files.
//!
//! Layout: magic "MRVM"; little-endian u32 version; u32 k; u32 param_dim;
//! u32 signal_dim; u32 n_pruned; u32 n_iters; f64 final_loglik; n_pruned
//! u32 pruned indices; u32 tags_length and that many bytes of UTF-8
//! key=value lines; f64 signal_mean then signal_std (signal_dim each);
//! then per component: weight, mu, gamma (row-major), A (row-major), b,
//! psi, all f64.

use super::gllim::{Component, RegressionModel, PARAM_DIM};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MRVM";
const VERSION: u32 = 1;

fn write_f64s<W: Write>(w: &mut W, vals: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_model(model: &RegressionModel, path: &Path) -> Result<()> {
    let d = model.signal_length();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    for v in [
        VERSION,
        model.k() as u32,
        PARAM_DIM as u32,
        d as u32,
        model.pruned.len() as u32,
        model.n_iters,
    ] {
        f.write_all(&v.to_le_bytes())?;
    }
    f.write_all(&model.final_loglik.to_le_bytes())?;
    for &p in &model.pruned {
        f.write_all(&(p as u32).to_le_bytes())?;
    }
    let mut tags = String::new();
    for (k, v) in &model.tags {
        tags.push_str(&format!("{k}={v}\n"));
    }
    f.write_all(&(tags.len() as u32).to_le_bytes())?;
    f.write_all(tags.as_bytes())?;
    write_f64s(&mut f, model.signal_mean.iter().copied())?;
    write_f64s(&mut f, model.signal_std.iter().copied())?;
    for c in &model.components {
        f.write_all(&c.weight.to_le_bytes())?;
        write_f64s(&mut f, c.mu.iter().copied())?;
        write_f64s(&mut f, c.gamma.transpose().iter().copied())?;
        write_f64s(&mut f, c.a.transpose().iter().copied())?;
        write_f64s(&mut f, c.b.iter().copied())?;
        write_f64s(&mut f, c.psi.iter().copied())?;
    }
    f.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::FormatError(format!("truncated before {what}")))?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::FormatError(format!("truncated before {what}")))?;
        Ok(f64::from_le_bytes(b))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(what)).collect()
    }
}

pub fn load_model(path: &Path) -> Result<RegressionModel> {
    let mut r = Reader {
        inner: std::io::BufReader::new(std::fs::File::open(path)?),
    };
    let mut magic = [0u8; 4];
    r.inner
        .read_exact(&mut magic)
        .map_err(|_| Error::FormatError("file shorter than header".into()))?;
    if &magic != MAGIC {
        return Err(Error::FormatError(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionError {
            found: version,
            supported: VERSION,
        });
    }
    let k = r.u32("k")? as usize;
    let pd = r.u32("param_dim")? as usize;
    if pd != PARAM_DIM {
        return Err(Error::FormatError(format!(
            "param_dim {pd}, expected {PARAM_DIM}"
        )));
    }
    let d = r.u32("signal_dim")? as usize;
    let n_pruned = r.u32("n_pruned")? as usize;
    let n_iters = r.u32("n_iters")?;
    let final_loglik = r.f64("final_loglik")?;
    if k == 0 || d == 0 {
        return Err(Error::FormatError(format!("degenerate model: k={k}, d={d}")));
    }
    let pruned = (0..n_pruned)
        .map(|_| r.u32("pruned index").map(|v| v as usize))
        .collect::<Result<_>>()?;
    let tags_len = r.u32("tags_length")? as usize;
    let mut tag_bytes = vec![0u8; tags_len];
    r.inner
        .read_exact(&mut tag_bytes)
        .map_err(|_| Error::FormatError("truncated tags block".into()))?;
    let tag_text = String::from_utf8(tag_bytes)
        .map_err(|_| Error::FormatError("tags block is not UTF-8".into()))?;
    let mut tags = std::collections::BTreeMap::new();
    for line in tag_text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::FormatError(format!("tag line without '=': {line:?}")))?;
        tags.insert(k.to_string(), v.to_string());
    }
    let signal_mean = DVector::from_vec(r.f64s(d, "signal_mean")?);
    let signal_std = DVector::from_vec(r.f64s(d, "signal_std")?);
    let mut components = Vec::with_capacity(k);
    for _ in 0..k {
        let weight = r.f64("weight")?;
        let mu = DVector::from_vec(r.f64s(PARAM_DIM, "mu")?);
        let gamma = DMatrix::from_row_slice(
            PARAM_DIM,
            PARAM_DIM,
            &r.f64s(PARAM_DIM * PARAM_DIM, "gamma")?,
        );
        let a = DMatrix::from_row_slice(d, PARAM_DIM, &r.f64s(d * PARAM_DIM, "A")?);
        let b = DVector::from_vec(r.f64s(d, "b")?);
        let psi = DVector::from_vec(r.f64s(d, "psi")?);
        components.push(Component {
            weight,
            mu,
            gamma,
            a,
            b,
            psi,
        });
    }
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra)? != 0 {
        return Err(Error::FormatError("trailing bytes after components".into()));
    }
    Ok(RegressionModel {
        components,
        signal_mean,
        signal_std,
        pruned,
        final_loglik,
        n_iters,
        tags,
    })
}
