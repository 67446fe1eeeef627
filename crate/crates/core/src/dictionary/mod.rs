//! Dictionary construction: scrambled-Sobol parameter sampling, batched
//! GESFIDSE simulation over geometry collections, MRVD persistence, and
//! coverage reporting.

mod io;
mod sobol;

pub use io::{load_dictionary, save_dictionary};
pub use sobol::sobol_scrambled;

use crate::error::{Error, Result};
use crate::geometry::VoxelGeometry;
use crate::physics::{simulate_fingerprint, PhysicsParams, SequenceSpec};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// One dictionary row: blood volume fraction, mean vessel radius (µm),
/// oxygen saturation, and T2 (ms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VascularParams {
    pub bvf: f64,
    pub r: f64,
    pub so2: f64,
    pub t2: f64,
}

impl VascularParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bvf) {
            return Err(Error::InvalidParameter(format!(
                "bvf {} not in [0,1]",
                self.bvf
            )));
        }
        if !(self.r >= 0.0) {
            return Err(Error::InvalidParameter(format!("r {} < 0", self.r)));
        }
        if !(0.0..=1.0).contains(&self.so2) {
            return Err(Error::InvalidParameter(format!(
                "so2 {} not in [0,1]",
                self.so2
            )));
        }
        if !(self.t2 > 0.0) {
            return Err(Error::InvalidParameter(format!("t2 {} <= 0", self.t2)));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.bvf, self.r, self.so2, self.t2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            bvf: a[0],
            r: a[1],
            so2: a[2],
            t2: a[3],
        }
    }
}

/// Everything needed to regenerate the dictionary, persisted as UTF-8
/// key=value lines in the MRVD header. `extra` carries caller tags such as
/// the pipeline config hash.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryMeta {
    pub physics: PhysicsParams,
    pub sequence: SequenceSpec,
    pub seed: u64,
    pub provenance: String,
    pub extra: BTreeMap<String, String>,
}

impl DictionaryMeta {
    pub fn to_lines(&self) -> String {
        let p = &self.physics;
        let s = &self.sequence;
        let mut out = String::new();
        for (k, v) in [
            ("physics.b0", p.b0),
            ("physics.gamma", p.gamma),
            ("physics.hct", p.hct),
            ("physics.dchi_deoxy", p.dchi_deoxy),
            ("physics.dchi_uspio", p.dchi_uspio),
            ("physics.diffusion", p.diffusion),
            ("physics.dt", p.dt),
            ("sequence.tr", s.tr),
            ("sequence.delta_te", s.delta_te),
            ("sequence.se_time", s.se_time),
        ] {
            out.push_str(&format!("{k}={v}\n"));
        }
        out.push_str(&format!("sequence.n_echoes={}\n", s.n_echoes));
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("provenance={}\n", self.provenance));
        for (k, v) in &self.extra {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut physics = PhysicsParams::default();
        let mut sequence = SequenceSpec::default();
        let mut seed = 0u64;
        let mut provenance = String::new();
        let mut extra = BTreeMap::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::FormatError(format!("meta line without '=': {line:?}")))?;
            let fval = || {
                v.parse::<f64>()
                    .map_err(|_| Error::FormatError(format!("meta {k}: bad float {v:?}")))
            };
            match k {
                "physics.b0" => physics.b0 = fval()?,
                "physics.gamma" => physics.gamma = fval()?,
                "physics.hct" => physics.hct = fval()?,
                "physics.dchi_deoxy" => physics.dchi_deoxy = fval()?,
                "physics.dchi_uspio" => physics.dchi_uspio = fval()?,
                "physics.diffusion" => physics.diffusion = fval()?,
                "physics.dt" => physics.dt = fval()?,
                "sequence.tr" => sequence.tr = fval()?,
                "sequence.delta_te" => sequence.delta_te = fval()?,
                "sequence.se_time" => sequence.se_time = fval()?,
                "sequence.n_echoes" => {
                    sequence.n_echoes = v
                        .parse()
                        .map_err(|_| Error::FormatError(format!("meta n_echoes: {v:?}")))?
                }
                "seed" => {
                    seed = v
                        .parse()
                        .map_err(|_| Error::FormatError(format!("meta seed: {v:?}")))?
                }
                "provenance" => provenance = v.to_string(),
                _ => {
                    extra.insert(k.to_string(), v.to_string());
                }
            }
        }
        Ok(Self {
            physics,
            sequence,
            seed,
            provenance,
            extra,
        })
    }
}

/// Parameter table plus the row-major n × signal_length fingerprint matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub params: Vec<VascularParams>,
    pub signals: Vec<f32>,
    pub signal_length: usize,
    pub meta: DictionaryMeta,
}

impl Dictionary {
    pub fn n_entries(&self) -> usize {
        self.params.len()
    }

    pub fn signal_row(&self, i: usize) -> &[f32] {
        &self.signals[i * self.signal_length..(i + 1) * self.signal_length]
    }

    pub fn validate(&self) -> Result<()> {
        if self.signals.len() != self.params.len() * self.signal_length {
            return Err(Error::LengthMismatch {
                expected: self.params.len() * self.signal_length,
                got: self.signals.len(),
            });
        }
        for (i, row) in self.signals.chunks(self.signal_length).enumerate() {
            let norm: f64 = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "signal row {i} has norm {norm}"
                )));
            }
        }
        Ok(())
    }
}

/// Simulates one entry per geometry, assigning entry i the i-th scrambled
/// Sobol (so2, t2) pair. Entry parameters are the geometry's measured
/// (bvf, mean_radius) with the sampled (so2, t2). A failed entry aborts the
/// whole build, annotated with its index.
pub fn build_dictionary(
    geoms: &[VoxelGeometry],
    so2_range: (f64, f64),
    t2_range: (f64, f64),
    p: &PhysicsParams,
    seq: &SequenceSpec,
    seed: u64,
) -> Result<Dictionary> {
    if geoms.is_empty() {
        return Err(Error::InvalidParameter("empty geometry list".into()));
    }
    p.validate()?;
    seq.validate()?;
    let draws = sobol_scrambled(geoms.len(), &[so2_range, t2_range], seed)?;

    let rows: Vec<(VascularParams, Vec<f64>)> = geoms
        .par_iter()
        .zip(draws.par_iter())
        .enumerate()
        .map(|(i, (g, d))| {
            let (so2, t2) = (d[0], d[1]);
            let fp = simulate_fingerprint(g, so2, t2, p, seq).map_err(|e| e.at_entry(i))?;
            let params = VascularParams {
                bvf: g.bvf,
                r: g.mean_radius,
                so2,
                t2,
            };
            Ok((params, fp.values))
        })
        .collect::<Result<_>>()?;

    let signal_length = rows[0].1.len();
    let mut params = Vec::with_capacity(rows.len());
    let mut signals = Vec::with_capacity(rows.len() * signal_length);
    for (i, (pr, sig)) in rows.into_iter().enumerate() {
        if sig.len() != signal_length {
            return Err(Error::LengthMismatch {
                expected: signal_length,
                got: sig.len(),
            }
            .at_entry(i));
        }
        params.push(pr);
        signals.extend(sig.iter().map(|&v| v as f32));
    }

    let provenance = geoms[0].provenance.as_str().to_string();
    Ok(Dictionary {
        params,
        signals,
        signal_length,
        meta: DictionaryMeta {
            physics: *p,
            sequence: *seq,
            seed,
            provenance,
            extra: BTreeMap::new(),
        },
    })
}

/// Per-parameter occupancy over `n_bins` equal-width bins spanning the
/// observed range, plus a 2-D (bvf, r) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub n_bins: usize,
    /// (lo, hi) per parameter in (bvf, r, so2, t2) order.
    pub ranges: [(f64, f64); 4],
    pub histograms: [Vec<usize>; 4],
    /// bvf (rows) × r (cols) occupancy, row-major.
    pub grid_bvf_r: Vec<usize>,
}

fn bin_of(v: f64, lo: f64, hi: f64, n_bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * n_bins as f64) as usize).min(n_bins - 1)
}

pub fn coverage_report(dict: &Dictionary, n_bins: usize) -> Result<CoverageReport> {
    if dict.params.is_empty() {
        return Err(Error::InvalidParameter("empty dictionary".into()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be >= 1".into()));
    }
    let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 4];
    for p in &dict.params {
        for (r, v) in ranges.iter_mut().zip(p.as_array()) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    let mut histograms: [Vec<usize>; 4] = std::array::from_fn(|_| vec![0; n_bins]);
    let mut grid = vec![0usize; n_bins * n_bins];
    for p in &dict.params {
        let a = p.as_array();
        let mut bins = [0usize; 4];
        for j in 0..4 {
            bins[j] = bin_of(a[j], ranges[j].0, ranges[j].1, n_bins);
            histograms[j][bins[j]] += 1;
        }
        grid[bins[0] * n_bins + bins[1]] += 1;
    }
    Ok(CoverageReport {
        n_bins,
        ranges,
        histograms,
        grid_bvf_r: grid,
    })
}
