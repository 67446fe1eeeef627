//! Flat key=value pipeline configuration with dotted section prefixes
//! (physics.b0=4.7). Unknown keys are rejected; the canonical serialization
//! is hashed so downstream artifacts can refuse mixed provenance.

use crate::error::{Error, Result};
use crate::eval::GeometryFamily;
use crate::physics::{PhysicsParams, SequenceSpec};
use crate::recon::{ClipRules, Method};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryModel {
    Disks2D { dims: [usize; 2] },
    Cylinders3D { dims: [usize; 3] },
    Masks { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub model: GeometryModel,
    pub spacing: f64,
    pub bvf_range: (f64, f64),
    pub r_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub so2_range: (f64, f64),
    pub t2_range: (f64, f64),
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    pub method: Method,
    /// mixture size for DBL; 0 = scale with dictionary size
    pub k: usize,
    pub clips: ClipRules,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub snr: f64,
    pub n: usize,
    pub families: Vec<GeometryFamily>,
    pub dict_entries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub physics: PhysicsParams,
    pub sequence: SequenceSpec,
    pub geometry: GeometryConfig,
    pub sampling: SamplingConfig,
    pub recon: ReconConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            physics: PhysicsParams::default(),
            sequence: SequenceSpec::default(),
            geometry: GeometryConfig {
                model: GeometryModel::Cylinders3D {
                    dims: [64, 64, 64],
                },
                spacing: 2.0,
                bvf_range: (0.01, 0.08),
                r_range: (3.0, 8.0),
            },
            sampling: SamplingConfig {
                so2_range: (0.35, 0.90),
                t2_range: (45.0, 110.0),
                n: 64,
                seed: 0,
            },
            recon: ReconConfig {
                method: Method::Dbm,
                k: 0,
                clips: ClipRules::default(),
            },
            eval: EvalConfig {
                snr: 40.0,
                n: 50,
                families: vec![GeometryFamily::Cylinders3D, GeometryFamily::Disks2D],
                dict_entries: 128,
            },
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: bad float {v:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: bad integer {v:?}")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: bad integer {v:?}")))
}

/// "lo:hi"
fn parse_range(key: &str, v: &str) -> Result<(f64, f64)> {
    let (lo, hi) = v
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("{key}: expected lo:hi, got {v:?}")))?;
    Ok((parse_f64(key, lo)?, parse_f64(key, hi)?))
}

/// "lo:hi" or "lo:" for an open upper bound
fn parse_clip(key: &str, v: &str) -> Result<(f64, Option<f64>)> {
    let (lo, hi) = v
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("{key}: expected lo:hi or lo:, got {v:?}")))?;
    let hi = if hi.is_empty() {
        None
    } else {
        Some(parse_f64(key, hi)?)
    };
    Ok((parse_f64(key, lo)?, hi))
}

fn parse_dims(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse_usize(key, s.trim())).collect()
}

impl PipelineConfig {
    /// Parses config text, starting from the defaults; every key must be
    /// known. Lines may be blank or start with '#'.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut model_name: Option<String> = None;
        let mut dims: Option<Vec<usize>> = None;
        let mut mask_dir: Option<PathBuf> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: missing '=' in {line:?}", ln + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "physics.b0" => cfg.physics.b0 = parse_f64(k, v)?,
                "physics.gamma" => cfg.physics.gamma = parse_f64(k, v)?,
                "physics.hct" => cfg.physics.hct = parse_f64(k, v)?,
                "physics.dchi_deoxy" => cfg.physics.dchi_deoxy = parse_f64(k, v)?,
                "physics.dchi_uspio" => cfg.physics.dchi_uspio = parse_f64(k, v)?,
                "physics.diffusion" => cfg.physics.diffusion = parse_f64(k, v)?,
                "physics.dt" => cfg.physics.dt = parse_f64(k, v)?,
                "sequence.tr" => cfg.sequence.tr = parse_f64(k, v)?,
                "sequence.n_echoes" => cfg.sequence.n_echoes = parse_usize(k, v)?,
                "sequence.delta_te" => cfg.sequence.delta_te = parse_f64(k, v)?,
                "sequence.se_time" => cfg.sequence.se_time = parse_f64(k, v)?,
                "geometry.model" => model_name = Some(v.to_string()),
                "geometry.dims" => dims = Some(parse_dims(k, v)?),
                "geometry.mask_dir" => mask_dir = Some(PathBuf::from(v)),
                "geometry.spacing" => cfg.geometry.spacing = parse_f64(k, v)?,
                "geometry.bvf" => cfg.geometry.bvf_range = parse_range(k, v)?,
                "geometry.r" => cfg.geometry.r_range = parse_range(k, v)?,
                "sampling.so2" => cfg.sampling.so2_range = parse_range(k, v)?,
                "sampling.t2" => cfg.sampling.t2_range = parse_range(k, v)?,
                "sampling.n" => cfg.sampling.n = parse_usize(k, v)?,
                "sampling.seed" => cfg.sampling.seed = parse_u64(k, v)?,
                "recon.method" => cfg.recon.method = Method::parse(v)?,
                "recon.k" => cfg.recon.k = parse_usize(k, v)?,
                "recon.clips.bvf" => cfg.recon.clips.bvf = parse_clip(k, v)?,
                "recon.clips.r" => cfg.recon.clips.r = parse_clip(k, v)?,
                "recon.clips.so2" => cfg.recon.clips.so2 = parse_clip(k, v)?,
                "recon.clips.t2" => cfg.recon.clips.t2 = parse_clip(k, v)?,
                "eval.snr" => {
                    cfg.eval.snr = if v == "inf" {
                        f64::INFINITY
                    } else {
                        parse_f64(k, v)?
                    }
                }
                "eval.n" => cfg.eval.n = parse_usize(k, v)?,
                "eval.dict_entries" => cfg.eval.dict_entries = parse_usize(k, v)?,
                "eval.families" => {
                    cfg.eval.families = v
                        .split(',')
                        .map(|s| GeometryFamily::parse(s.trim()))
                        .collect::<Result<_>>()?
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        if let Some(name) = model_name {
            cfg.geometry.model = match name.as_str() {
                "disks2d" => {
                    let d = dims.clone().unwrap_or_else(|| vec![64, 64]);
                    if d.len() != 2 {
                        return Err(Error::Config(format!(
                            "geometry.dims: disks2d needs 2 dims, got {}",
                            d.len()
                        )));
                    }
                    GeometryModel::Disks2D { dims: [d[0], d[1]] }
                }
                "cylinders3d" => {
                    let d = dims.clone().unwrap_or_else(|| vec![64, 64, 64]);
                    if d.len() != 3 {
                        return Err(Error::Config(format!(
                            "geometry.dims: cylinders3d needs 3 dims, got {}",
                            d.len()
                        )));
                    }
                    GeometryModel::Cylinders3D {
                        dims: [d[0], d[1], d[2]],
                    }
                }
                "masks" => {
                    let dir = mask_dir
                        .clone()
                        .ok_or_else(|| Error::Config("masks model needs geometry.mask_dir".into()))?;
                    GeometryModel::Masks { dir }
                }
                other => {
                    return Err(Error::Config(format!("geometry.model: unknown {other:?}")))
                }
            };
        } else if let Some(d) = dims {
            // dims without a model line reshape the default model
            cfg.geometry.model = match d.len() {
                2 => GeometryModel::Disks2D { dims: [d[0], d[1]] },
                3 => GeometryModel::Cylinders3D {
                    dims: [d[0], d[1], d[2]],
                },
                n => {
                    return Err(Error::Config(format!(
                        "geometry.dims: expected 2 or 3 dims, got {n}"
                    )))
                }
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.physics
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.sequence
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.recon
            .clips
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        for (name, (lo, hi)) in [
            ("geometry.bvf", self.geometry.bvf_range),
            ("geometry.r", self.geometry.r_range),
            ("sampling.so2", self.sampling.so2_range),
            ("sampling.t2", self.sampling.t2_range),
        ] {
            if !(lo < hi) {
                return Err(Error::Config(format!("{name}: lo {lo} must be < hi {hi}")));
            }
        }
        if !(self.geometry.spacing > 0.0) {
            return Err(Error::Config("geometry.spacing must be > 0".into()));
        }
        if self.sampling.n == 0 {
            return Err(Error::Config("sampling.n must be >= 1".into()));
        }
        if !(self.eval.snr > 0.0) {
            return Err(Error::Config("eval.snr must be > 0".into()));
        }
        if self.eval.families.is_empty() {
            return Err(Error::Config("eval.families must be non-empty".into()));
        }
        if let GeometryModel::Masks { dir } = &self.geometry.model {
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "geometry.mask_dir {} is not a directory",
                    dir.display()
                )));
            }
        }
        Ok(())
    }

    /// Deterministic serialization covering every field; the basis for the
    /// config hash.
    pub fn canonical(&self) -> String {
        let p = &self.physics;
        let s = &self.sequence;
        let g = &self.geometry;
        let sa = &self.sampling;
        let r = &self.recon;
        let e = &self.eval;
        let clip = |(lo, hi): (f64, Option<f64>)| match hi {
            Some(h) => format!("{lo}:{h}"),
            None => format!("{lo}:"),
        };
        let mut out = String::new();
        out.push_str(&format!("physics.b0={}\n", p.b0));
        out.push_str(&format!("physics.gamma={}\n", p.gamma));
        out.push_str(&format!("physics.hct={}\n", p.hct));
        out.push_str(&format!("physics.dchi_deoxy={}\n", p.dchi_deoxy));
        out.push_str(&format!("physics.dchi_uspio={}\n", p.dchi_uspio));
        out.push_str(&format!("physics.diffusion={}\n", p.diffusion));
        out.push_str(&format!("physics.dt={}\n", p.dt));
        out.push_str(&format!("sequence.tr={}\n", s.tr));
        out.push_str(&format!("sequence.n_echoes={}\n", s.n_echoes));
        out.push_str(&format!("sequence.delta_te={}\n", s.delta_te));
        out.push_str(&format!("sequence.se_time={}\n", s.se_time));
        match &g.model {
            GeometryModel::Disks2D { dims } => {
                out.push_str("geometry.model=disks2d\n");
                out.push_str(&format!("geometry.dims={},{}\n", dims[0], dims[1]));
            }
            GeometryModel::Cylinders3D { dims } => {
                out.push_str("geometry.model=cylinders3d\n");
                out.push_str(&format!(
                    "geometry.dims={},{},{}\n",
                    dims[0], dims[1], dims[2]
                ));
            }
            GeometryModel::Masks { dir } => {
                out.push_str("geometry.model=masks\n");
                out.push_str(&format!("geometry.mask_dir={}\n", dir.display()));
            }
        }
        out.push_str(&format!("geometry.spacing={}\n", g.spacing));
        out.push_str(&format!(
            "geometry.bvf={}:{}\n",
            g.bvf_range.0, g.bvf_range.1
        ));
        out.push_str(&format!("geometry.r={}:{}\n", g.r_range.0, g.r_range.1));
        out.push_str(&format!(
            "sampling.so2={}:{}\n",
            sa.so2_range.0, sa.so2_range.1
        ));
        out.push_str(&format!(
            "sampling.t2={}:{}\n",
            sa.t2_range.0, sa.t2_range.1
        ));
        out.push_str(&format!("sampling.n={}\n", sa.n));
        out.push_str(&format!("sampling.seed={}\n", sa.seed));
        out.push_str(&format!("recon.method={}\n", r.method.as_str()));
        out.push_str(&format!("recon.k={}\n", r.k));
        out.push_str(&format!("recon.clips.bvf={}\n", clip(r.clips.bvf)));
        out.push_str(&format!("recon.clips.r={}\n", clip(r.clips.r)));
        out.push_str(&format!("recon.clips.so2={}\n", clip(r.clips.so2)));
        out.push_str(&format!("recon.clips.t2={}\n", clip(r.clips.t2)));
        out.push_str(&format!("eval.snr={}\n", e.snr));
        out.push_str(&format!("eval.n={}\n", e.n));
        out.push_str(&format!("eval.dict_entries={}\n", e.dict_entries));
        let fams: Vec<&str> = e.families.iter().map(|f| f.as_str()).collect();
        out.push_str(&format!("eval.families={}\n", fams.join(",")));
        out
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        hex::encode(h.finalize())
    }
}
