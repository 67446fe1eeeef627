//! GESFIDSE signal simulation over voxel geometries: susceptibility maps,
//! Fourier magnetostatic field solver, diffusion-relaxation-dephasing time
//! stepping, and pre/post-contrast fingerprint assembly.

pub mod fft;
mod field;
mod fingerprint;
mod sim;

pub use field::{solve_field, susceptibility_from_geometry, FieldMap, SusceptibilityMap};
pub use fingerprint::{make_fingerprint, simulate_fingerprint, Fingerprint, FingerprintMeta};
pub use sim::{simulate_gesfidse, SignalTrace};

use crate::error::{Error, Result};

/// Magnetostatic and diffusion constants that, with a sequence, fully
/// determine one simulation. Susceptibilities are SI (dimensionless);
/// `dchi_deoxy` refers to fully deoxygenated blood at Hct = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    /// Main field, Tesla.
    pub b0: f64,
    /// Gyromagnetic ratio, rad s^-1 T^-1.
    pub gamma: f64,
    /// Hematocrit fraction.
    pub hct: f64,
    /// Susceptibility of fully deoxygenated blood at Hct = 1.
    pub dchi_deoxy: f64,
    /// Intravascular susceptibility increment from the contrast agent.
    pub dchi_uspio: f64,
    /// Water diffusion coefficient, µm²/s.
    pub diffusion: f64,
    /// Time step, ms.
    pub dt: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            b0: 4.7,
            gamma: 2.675e8,
            hct: 0.42,
            dchi_deoxy: 3.318e-6,
            dchi_uspio: 1.0e-6,
            diffusion: 1000.0,
            dt: 0.2,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0) {
            return Err(Error::InvalidParameter("b0 must be > 0".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter("gamma must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.hct) {
            return Err(Error::InvalidParameter("hct must be in [0,1]".into()));
        }
        if !(self.diffusion >= 0.0) {
            return Err(Error::InvalidParameter("diffusion must be >= 0".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::InvalidParameter("dt must be in (0,1] ms".into()));
        }
        Ok(())
    }
}

/// GESFIDSE timing: gradient echoes sampled across the free decay and the
/// refocused spin echo. All times in ms; the 180° pulse sits at se_time/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceSpec {
    pub tr: f64,
    pub n_echoes: usize,
    pub delta_te: f64,
    pub se_time: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            tr: 4000.0,
            n_echoes: 32,
            delta_te: 3.3,
            se_time: 60.0,
        }
    }
}

impl SequenceSpec {
    pub fn refocus_time(&self) -> f64 {
        self.se_time / 2.0
    }

    /// Echo centers at i*ΔTE for i = 1..=n_echoes.
    pub fn echo_times(&self) -> Vec<f64> {
        (1..=self.n_echoes)
            .map(|i| i as f64 * self.delta_te)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_echoes < 1 {
            return Err(Error::InvalidParameter("n_echoes must be >= 1".into()));
        }
        if !(self.delta_te > 0.0) {
            return Err(Error::InvalidParameter("delta_te must be > 0".into()));
        }
        if !(self.se_time > 0.0) {
            return Err(Error::InvalidParameter("se_time must be > 0".into()));
        }
        if !(self.tr > 0.0) {
            return Err(Error::InvalidParameter("tr must be > 0".into()));
        }
        let refocus = self.refocus_time();
        for t in self.echo_times() {
            if (t - refocus).abs() < 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "echo at {t} ms coincides with the refocusing pulse"
                )));
            }
        }
        Ok(())
    }
}
