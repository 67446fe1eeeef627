//! Parameter estimation from fingerprints: exhaustive dot-product matching
//! (DBM) and Bayesian locally-affine inverse regression (DBL), plus
//! voxelwise map assembly.

mod gllim;
mod io;

pub use gllim::{default_k, predict_dbl, train_dbl, Component, Predictor, RegressionModel};
pub use io::{load_model, save_model};

use crate::dictionary::{Dictionary, VascularParams};
use crate::error::{Error, Result};
use crate::physics::Fingerprint;
use rayon::prelude::*;

/// Per-parameter clip bounds applied to DBL estimates; `hi = None` leaves
/// the upper side open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipRules {
    pub bvf: (f64, Option<f64>),
    pub r: (f64, Option<f64>),
    pub so2: (f64, Option<f64>),
    pub t2: (f64, Option<f64>),
}

impl Default for ClipRules {
    fn default() -> Self {
        Self {
            bvf: (0.0, Some(1.0)),
            r: (0.0, Some(250.0)),
            so2: (0.0, Some(1.0)),
            t2: (0.0, None),
        }
    }
}

fn clip_one(v: f64, (lo, hi): (f64, Option<f64>)) -> f64 {
    let v = v.max(lo);
    match hi {
        Some(h) => v.min(h),
        None => v,
    }
}

impl ClipRules {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("bvf", self.bvf),
            ("r", self.r),
            ("so2", self.so2),
            ("t2", self.t2),
        ] {
            if let Some(h) = hi {
                if !(lo < h) {
                    return Err(Error::InvalidParameter(format!(
                        "clip {name}: lo {lo} must be < hi {h}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, p: VascularParams) -> VascularParams {
        VascularParams {
            bvf: clip_one(p.bvf, self.bvf),
            r: clip_one(p.r, self.r),
            so2: clip_one(p.so2, self.so2),
            t2: clip_one(p.t2, self.t2),
        }
    }

    pub fn satisfied_by(&self, p: &VascularParams) -> bool {
        let ok = |v: f64, (lo, hi): (f64, Option<f64>)| v >= lo && hi.map_or(true, |h| v <= h);
        ok(p.bvf, self.bvf) && ok(p.r, self.r) && ok(p.so2, self.so2) && ok(p.t2, self.t2)
    }
}

/// Returns the parameters of the dictionary entry maximizing the inner
/// product with the input; ties break to the lowest entry index.
pub fn match_dbm(fp: &Fingerprint, dict: &Dictionary) -> Result<VascularParams> {
    match_dbm_index(fp, dict).map(|i| dict.params[i])
}

/// Like [`match_dbm`] but returns the winning entry index.
pub fn match_dbm_index(fp: &Fingerprint, dict: &Dictionary) -> Result<usize> {
    if fp.len() != dict.signal_length {
        return Err(Error::LengthMismatch {
            expected: dict.signal_length,
            got: fp.len(),
        });
    }
    let mut best = 0usize;
    let mut best_dot = f64::NEG_INFINITY;
    for i in 0..dict.n_entries() {
        let dot: f64 = dict
            .signal_row(i)
            .iter()
            .zip(&fp.values)
            .map(|(&s, &v)| s as f64 * v)
            .sum();
        if dot > best_dot {
            best_dot = dot;
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dbm,
    Dbl,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dbm => "dbm",
            Method::Dbl => "dbl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dbm" => Ok(Method::Dbm),
            "dbl" => Ok(Method::Dbl),
            other => Err(Error::InvalidParameter(format!(
                "unknown method {other:?} (expected dbm or dbl)"
            ))),
        }
    }
}

/// A dense grid of fingerprints, one per voxel, x-fastest like the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintVolume {
    pub dims: [usize; 3],
    pub signal_length: usize,
    /// voxel-major: voxel v occupies [v*signal_length, (v+1)*signal_length)
    pub data: Vec<f64>,
}

impl FingerprintVolume {
    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn voxel(&self, v: usize) -> &[f64] {
        &self.data[v * self.signal_length..(v + 1) * self.signal_length]
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.n_voxels() * self.signal_length;
        if self.data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: self.data.len(),
            });
        }
        Ok(())
    }
}

/// Four scalar maps over the fingerprint volume's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMaps {
    pub dims: [usize; 3],
    pub bvf: Vec<f64>,
    pub r: Vec<f64>,
    pub so2: Vec<f64>,
    pub t2: Vec<f64>,
    pub method: Method,
}

impl ParamMaps {
    pub fn voxel(&self, v: usize) -> VascularParams {
        VascularParams {
            bvf: self.bvf[v],
            r: self.r[v],
            so2: self.so2[v],
            t2: self.t2[v],
        }
    }
}

pub enum EstimatorResource<'a> {
    Dbm(&'a Dictionary),
    Dbl(&'a RegressionModel),
}

/// Applies the chosen estimator voxelwise. DBM outputs are grid-restricted
/// to the dictionary's parameter table; DBL outputs get the clip rules.
pub fn reconstruct_map(
    volume: &FingerprintVolume,
    resource: &EstimatorResource,
    clips: &ClipRules,
) -> Result<ParamMaps> {
    volume.validate()?;
    clips.validate()?;
    let n = volume.n_voxels();
    let [nx, ny, _] = volume.dims;

    let voxel_err = |v: usize, e: Error| {
        let x = v % nx;
        let y = (v / nx) % ny;
        let z = v / (nx * ny);
        e.at_voxel(x, y, z)
    };

    let (method, results): (Method, Vec<VascularParams>) = match resource {
        EstimatorResource::Dbm(dict) => {
            let res: Vec<VascularParams> = (0..n)
                .into_par_iter()
                .map(|v| {
                    let fp = Fingerprint::from_values(volume.voxel(v).to_vec())
                        .map_err(|e| voxel_err(v, e))?;
                    match_dbm(&fp, dict).map_err(|e| voxel_err(v, e))
                })
                .collect::<Result<_>>()?;
            (Method::Dbm, res)
        }
        EstimatorResource::Dbl(model) => {
            let predictor = Predictor::new(model)?;
            let res: Vec<VascularParams> = (0..n)
                .into_par_iter()
                .map(|v| {
                    let fp = Fingerprint::from_values(volume.voxel(v).to_vec())
                        .map_err(|e| voxel_err(v, e))?;
                    predictor
                        .predict(&fp, clips)
                        .map_err(|e| voxel_err(v, e))
                })
                .collect::<Result<_>>()?;
            (Method::Dbl, res)
        }
    };

    let mut maps = ParamMaps {
        dims: volume.dims,
        bvf: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
        so2: Vec::with_capacity(n),
        t2: Vec::with_capacity(n),
        method,
    };
    for p in results {
        maps.bvf.push(p.bvf);
        maps.r.push(p.r);
        maps.so2.push(p.so2);
        maps.t2.push(p.t2);
    }
    Ok(maps)
}
