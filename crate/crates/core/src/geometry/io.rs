//! VXM1 binary mask files and the VXF1 float-volume variant.
//!
//! VXM1: magic "VXM1"; little-endian u32 nx, ny, nz; little-endian f32
//! spacing per axis (µm); then nx*ny*nz payload bytes (0 or 1), x-fastest.
//! VXF1 shares the header layout with an f32 payload.

use super::Lattice3D;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MASK_MAGIC: &[u8; 4] = b"VXM1";
const FLOAT_MAGIC: &[u8; 4] = b"VXF1";

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], dims: [usize; 3], spacing: [f64; 3]) -> Result<()> {
    w.write_all(magic)?;
    for d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for s in spacing {
        w.write_all(&(s as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<([usize; 3], [f64; 3])> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)
        .map_err(|_| Error::FormatError("file shorter than header".into()))?;
    if &m != magic {
        return Err(Error::FormatError(format!(
            "bad magic {:?}, expected {:?}",
            m, magic
        )));
    }
    let mut buf4 = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        r.read_exact(&mut buf4)
            .map_err(|_| Error::FormatError("truncated header".into()))?;
        *d = u32::from_le_bytes(buf4) as usize;
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::DimensionError(format!("zero dimension in {dims:?}")));
    }
    let mut spacing = [0f64; 3];
    for s in spacing.iter_mut() {
        r.read_exact(&mut buf4)
            .map_err(|_| Error::FormatError("truncated header".into()))?;
        *s = f32::from_le_bytes(buf4) as f64;
    }
    Ok((dims, spacing))
}

pub fn write_mask(lattice: &Lattice3D, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut f, MASK_MAGIC, lattice.dims(), lattice.spacing())?;
    f.write_all(lattice.mask())?;
    f.flush()?;
    Ok(())
}

pub fn ingest_mask(path: &Path) -> Result<Lattice3D> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let (dims, spacing) = read_header(&mut f, MASK_MAGIC)?;
    let n = dims[0] * dims[1] * dims[2];
    let mut mask = vec![0u8; n];
    f.read_exact(&mut mask)
        .map_err(|_| Error::FormatError(format!("payload shorter than {n} bytes")))?;
    let mut extra = [0u8; 1];
    if f.read(&mut extra)? != 0 {
        return Err(Error::FormatError("trailing bytes after payload".into()));
    }
    Lattice3D::new(dims, spacing, mask)
}

pub fn write_float_volume(
    dims: [usize; 3],
    spacing: [f64; 3],
    values: &[f32],
    path: &Path,
) -> Result<()> {
    let n = dims[0] * dims[1] * dims[2];
    if values.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: values.len(),
        });
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_header(&mut f, FLOAT_MAGIC, dims, spacing)?;
    for v in values {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_float_volume(path: &Path) -> Result<([usize; 3], [f64; 3], Vec<f32>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let (dims, spacing) = read_header(&mut f, FLOAT_MAGIC)?;
    let n = dims[0] * dims[1] * dims[2];
    let mut values = Vec::with_capacity(n);
    let mut buf = [0u8; 4];
    for _ in 0..n {
        f.read_exact(&mut buf)
            .map_err(|_| Error::FormatError(format!("payload shorter than {n} floats")))?;
        values.push(f32::from_le_bytes(buf));
    }
    Ok((dims, spacing, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vxm");
        let mut l = Lattice3D::empty([5, 4, 3], [1.94, 1.94, 2.0]).unwrap();
        l.mask_mut()[7] = 1;
        l.mask_mut()[33] = 1;
        write_mask(&l, &path).unwrap();
        let back = ingest_mask(&path).unwrap();
        assert_eq!(back.dims(), l.dims());
        assert_eq!(back.mask(), l.mask());
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vxm");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(b"NOPE").unwrap();
        f.write_all(&[0u8; 64]).unwrap();
        assert!(matches!(ingest_mask(&path), Err(Error::FormatError(_))));
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.vxm");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(b"VXM1").unwrap();
        for d in [4u32, 4, 4] {
            f.write_all(&d.to_le_bytes()).unwrap();
        }
        for s in [1.0f32, 1.0, 1.0] {
            f.write_all(&s.to_le_bytes()).unwrap();
        }
        f.write_all(&vec![0u8; 63]).unwrap(); // one byte short
        assert!(matches!(ingest_mask(&path), Err(Error::FormatError(_))));
    }

    #[test]
    fn zero_dims_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.vxm");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(b"VXM1").unwrap();
        for d in [0u32, 4, 4] {
            f.write_all(&d.to_le_bytes()).unwrap();
        }
        for s in [1.0f32, 1.0, 1.0] {
            f.write_all(&s.to_le_bytes()).unwrap();
        }
        assert!(matches!(ingest_mask(&path), Err(Error::DimensionError(_))));
    }

    #[test]
    fn float_volume_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.vxf");
        let vals: Vec<f32> = (0..24).map(|i| i as f32 * 0.5).collect();
        write_float_volume([4, 3, 2], [2.0; 3], &vals, &path).unwrap();
        let (dims, _, back) = read_float_volume(&path).unwrap();
        assert_eq!(dims, [4, 3, 2]);
        assert_eq!(back, vals);
    }
}
