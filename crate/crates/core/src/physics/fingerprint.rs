//! Pre/post-contrast fingerprint assembly.

use super::field::{solve_field, SusceptibilityMap};
use super::sim::{simulate_gesfidse, SignalTrace};
use super::{PhysicsParams, SequenceSpec};
use crate::error::{Error, Result};
use crate::geometry::VoxelGeometry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerprintMeta {
    pub so2: f64,
    pub t2: f64,
    pub geometry_id: u64,
}

/// Concatenated pre/post-contrast echo magnitudes, unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub values: Vec<f64>,
    pub meta: Option<FingerprintMeta>,
}

impl Fingerprint {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroSignal);
        }
        Ok(Fingerprint {
            values: values.into_iter().map(|v| v / norm).collect(),
            meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Concatenates pre then post magnitudes and normalizes to unit L2 norm.
pub fn make_fingerprint(pre: &SignalTrace, post: &SignalTrace) -> Result<Fingerprint> {
    if pre.times.len() != post.times.len() {
        return Err(Error::LengthMismatch {
            expected: pre.times.len(),
            got: post.times.len(),
        });
    }
    if pre
        .times
        .iter()
        .zip(&post.times)
        .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::InvalidParameter(
            "pre and post traces sampled on different echo grids".into(),
        ));
    }
    let mut values = Vec::with_capacity(2 * pre.magnitudes.len());
    values.extend_from_slice(&pre.magnitudes);
    values.extend_from_slice(&post.magnitudes);
    Fingerprint::from_values(values)
}

/// Simulates the pre- and post-contrast GESFIDSE traces for one voxel at a
/// given (SO2, T2) and assembles the fingerprint. The magnetostatic problem
/// is solved once for a unit intravascular susceptibility and scaled per
/// arm (the solver is linear).
pub fn simulate_fingerprint(
    geom: &VoxelGeometry,
    so2: f64,
    t2: f64,
    p: &PhysicsParams,
    seq: &SequenceSpec,
) -> Result<Fingerprint> {
    if !(0.0..=1.0).contains(&so2) {
        return Err(Error::InvalidParameter(format!("so2 {so2} not in [0,1]")));
    }
    let unit_chi = SusceptibilityMap {
        dims: geom.lattice.dims(),
        spacing: geom.lattice.spacing(),
        values: geom
            .lattice
            .mask()
            .iter()
            .map(|&m| if m == 1 { 1.0 } else { 0.0 })
            .collect(),
    };
    let unit_field = solve_field(&unit_chi, p.b0);

    let dchi_pre = p.dchi_deoxy * p.hct * (1.0 - so2);
    let dchi_post = dchi_pre + p.dchi_uspio;
    let run = |dchi: f64| -> Result<SignalTrace> {
        let field = super::field::FieldMap {
            dims: unit_field.dims,
            spacing: unit_field.spacing,
            values: unit_field.values.iter().map(|v| v * dchi).collect(),
        };
        simulate_gesfidse(&field, t2, p, seq)
    };
    let pre = run(dchi_pre)?;
    let post = run(dchi_post)?;
    let mut fp = make_fingerprint(&pre, &post)?;
    fp.meta = Some(FingerprintMeta {
        so2,
        t2,
        geometry_id: geom.seed,
    });
    Ok(fp)
}
