//! Susceptibility maps and the Fourier magnetostatic field solver.

use super::fft::{angular_freq, Fft3};
use super::PhysicsParams;
use crate::error::{Error, Result};
use crate::geometry::VoxelGeometry;
use rustfft::num_complex::Complex;

/// Dimensionless susceptibility offset per cell (SI).
#[derive(Debug, Clone)]
pub struct SusceptibilityMap {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

/// Field offset ΔB per cell, Tesla, with zero spatial mean (k = 0 convention).
#[derive(Debug, Clone)]
pub struct FieldMap {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

impl FieldMap {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Vessel cells get Δχ = dchi_deoxy·hct·(1 − so2), plus dchi_uspio when the
/// contrast agent is present; extravascular cells are 0.
pub fn susceptibility_from_geometry(
    geom: &VoxelGeometry,
    so2: f64,
    with_contrast: bool,
    p: &PhysicsParams,
) -> Result<SusceptibilityMap> {
    if !(0.0..=1.0).contains(&so2) {
        return Err(Error::InvalidParameter(format!("so2 {so2} not in [0,1]")));
    }
    let dchi = p.dchi_deoxy * p.hct * (1.0 - so2)
        + if with_contrast { p.dchi_uspio } else { 0.0 };
    let values = geom
        .lattice
        .mask()
        .iter()
        .map(|&m| if m == 1 { dchi } else { 0.0 })
        .collect();
    Ok(SusceptibilityMap {
        dims: geom.lattice.dims(),
        spacing: geom.lattice.spacing(),
        values,
    })
}

/// ΔB = B0 · invFT[ FT[χ] · (1/3 − k_z²/|k|²) ] with the k = 0 coefficient
/// zeroed; z is the B0 axis and boundaries are periodic.
pub fn solve_field(chi: &SusceptibilityMap, b0: f64) -> FieldMap {
    let [nx, ny, nz] = chi.dims;
    let fft = Fft3::new(chi.dims);
    let mut data: Vec<Complex<f64>> = chi
        .values
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    fft.forward(&mut data);

    let kx: Vec<f64> = (0..nx).map(|i| angular_freq(i, nx, chi.spacing[0])).collect();
    let ky: Vec<f64> = (0..ny).map(|i| angular_freq(i, ny, chi.spacing[1])).collect();
    let kz: Vec<f64> = (0..nz).map(|i| angular_freq(i, nz, chi.spacing[2])).collect();
    let scale = b0 / (nx * ny * nz) as f64;

    let mut idx = 0;
    for z in 0..nz {
        let kz2 = kz[z] * kz[z];
        for y in 0..ny {
            let ky2 = ky[y] * ky[y];
            for x in 0..nx {
                let k2 = kx[x] * kx[x] + ky2 + kz2;
                let kernel = if k2 == 0.0 {
                    0.0
                } else {
                    1.0 / 3.0 - kz2 / k2
                };
                data[idx] *= kernel * scale;
                idx += 1;
            }
        }
    }

    fft.inverse(&mut data);
    FieldMap {
        dims: chi.dims,
        spacing: chi.spacing,
        values: data.iter().map(|c| c.re).collect(),
    }
}
