//! MRVD dictionary files.
//!
//! Layout: magic "MRVD"; little-endian u32 version; u64 n_entries; u32
//! signal_length; u32 meta_length; meta_length bytes of UTF-8 key=value
//! lines; n_entries×4 f64 parameter rows (bvf, r, so2, t2); then
//! n_entries×signal_length f32 signals, row-major.

use super::{Dictionary, DictionaryMeta, VascularParams};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MRVD";
const VERSION: u32 = 1;

pub fn save_dictionary(dict: &Dictionary, path: &Path) -> Result<()> {
    dict.validate()?;
    let meta = dict.meta.to_lines();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(dict.n_entries() as u64).to_le_bytes())?;
    f.write_all(&(dict.signal_length as u32).to_le_bytes())?;
    f.write_all(&(meta.len() as u32).to_le_bytes())?;
    f.write_all(meta.as_bytes())?;
    for p in &dict.params {
        for v in p.as_array() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    for s in &dict.signals {
        f.write_all(&s.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::FormatError(format!("truncated before {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_dictionary(path: &Path) -> Result<Dictionary> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)
        .map_err(|_| Error::FormatError("file shorter than header".into()))?;
    if &magic != MAGIC {
        return Err(Error::FormatError(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = read_u32(&mut f, "version")?;
    if version != VERSION {
        return Err(Error::VersionError {
            found: version,
            supported: VERSION,
        });
    }
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b8)
        .map_err(|_| Error::FormatError("truncated before n_entries".into()))?;
    let n_entries = u64::from_le_bytes(b8) as usize;
    let signal_length = read_u32(&mut f, "signal_length")? as usize;
    let meta_length = read_u32(&mut f, "meta_length")? as usize;
    if n_entries == 0 || signal_length == 0 {
        return Err(Error::FormatError(format!(
            "empty dictionary ({n_entries} entries, signal length {signal_length})"
        )));
    }

    let mut meta_bytes = vec![0u8; meta_length];
    f.read_exact(&mut meta_bytes)
        .map_err(|_| Error::FormatError("truncated meta block".into()))?;
    let meta_text = String::from_utf8(meta_bytes)
        .map_err(|_| Error::FormatError("meta block is not UTF-8".into()))?;
    let meta = DictionaryMeta::from_lines(&meta_text)?;

    let mut params = Vec::with_capacity(n_entries);
    let mut bufp = [0u8; 32];
    for _ in 0..n_entries {
        f.read_exact(&mut bufp)
            .map_err(|_| Error::FormatError("truncated parameter table".into()))?;
        let mut a = [0f64; 4];
        for (j, v) in a.iter_mut().enumerate() {
            *v = f64::from_le_bytes(bufp[j * 8..j * 8 + 8].try_into().unwrap());
        }
        params.push(VascularParams::from_array(a));
    }

    let n_signals = n_entries * signal_length;
    let mut raw = vec![0u8; n_signals * 4];
    f.read_exact(&mut raw)
        .map_err(|_| Error::FormatError("truncated signal matrix".into()))?;
    let signals: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut extra = [0u8; 1];
    if f.read(&mut extra)? != 0 {
        return Err(Error::FormatError("trailing bytes after signals".into()));
    }

    Ok(Dictionary {
        params,
        signals,
        signal_length,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{PhysicsParams, SequenceSpec};
    use std::collections::BTreeMap;

    fn synthetic_dict(n: usize, len: usize) -> Dictionary {
        let params = (0..n)
            .map(|i| VascularParams {
                bvf: 0.01 + i as f64 * 1e-3,
                r: 3.0 + i as f64 * 0.1,
                so2: 0.4 + (i as f64 * 0.37).fract() * 0.5,
                t2: 50.0 + i as f64,
            })
            .collect();
        let mut signals = Vec::with_capacity(n * len);
        for i in 0..n {
            let row: Vec<f64> = (0..len).map(|j| ((i * len + j) as f64 * 0.13).sin() + 2.0).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            signals.extend(row.iter().map(|v| (v / norm) as f32));
        }
        Dictionary {
            params,
            signals,
            signal_length: len,
            meta: DictionaryMeta {
                physics: PhysicsParams::default(),
                sequence: SequenceSpec::default(),
                seed: 77,
                provenance: "disks2d".to_string(),
                extra: BTreeMap::new(),
            },
        }
    }

    #[test]
    fn round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.mrvd");
        let mut d = synthetic_dict(512, 64);
        d.meta
            .extra
            .insert("config_hash".to_string(), "deadbeef".to_string());
        save_dictionary(&d, &path).unwrap();
        let back = load_dictionary(&path).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.mrvd");
        let d = synthetic_dict(4, 8);
        save_dictionary(&d, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            load_dictionary(&path),
            Err(Error::FormatError(_))
        ));
    }

    #[test]
    fn future_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mrvd");
        let d = synthetic_dict(2, 8);
        save_dictionary(&d, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_dictionary(&path),
            Err(Error::VersionError {
                found: 9,
                supported: 1
            })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.mrvd");
        let d = synthetic_dict(2, 8);
        save_dictionary(&d, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_dictionary(&path),
            Err(Error::FormatError(_))
        ));
    }
}
