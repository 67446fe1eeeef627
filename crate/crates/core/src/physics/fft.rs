//! Cached 3D complex FFT over x-fastest volumes, line-parallel.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

struct SendPtr(*mut Complex<f64>);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

pub struct Fft3 {
    dims: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [
            planner.plan_fft_forward(dims[0]),
            planner.plan_fft_forward(dims[1]),
            planner.plan_fft_forward(dims[2]),
        ];
        let inv = [
            planner.plan_fft_inverse(dims[0]),
            planner.plan_fft_inverse(dims[1]),
            planner.plan_fft_inverse(dims[2]),
        ];
        Self { dims, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    fn pass(&self, data: &mut [Complex<f64>], axis: usize, inverse: bool) {
        let [nx, ny, nz] = self.dims;
        let n = self.dims[axis];
        if n == 1 {
            return;
        }
        let plan = if inverse {
            &self.inv[axis]
        } else {
            &self.fwd[axis]
        };
        match axis {
            0 => {
                data.par_chunks_mut(nx).for_each_init(
                    || vec![Complex::default(); plan.get_inplace_scratch_len()],
                    |scratch, line| plan.process_with_scratch(line, scratch),
                );
            }
            _ => {
                // strided lines: gather, transform, scatter
                let stride = if axis == 1 { nx } else { nx * ny };
                let lines: Vec<usize> = match axis {
                    1 => (0..nz)
                        .flat_map(|z| (0..nx).map(move |x| x + nx * ny * z))
                        .collect(),
                    _ => (0..ny)
                        .flat_map(|y| (0..nx).map(move |x| x + nx * y))
                        .collect(),
                };
                let ptr = SendPtr(data.as_mut_ptr());
                let ptr = &ptr;
                lines.par_iter().for_each_init(
                    || {
                        (
                            vec![Complex::default(); n],
                            vec![Complex::default(); plan.get_inplace_scratch_len()],
                        )
                    },
                    |(buf, scratch), &base| {
                        // each line owns a disjoint strided index set
                        let p = ptr.0;
                        unsafe {
                            for i in 0..n {
                                buf[i] = *p.add(base + i * stride);
                            }
                            plan.process_with_scratch(buf, scratch);
                            for i in 0..n {
                                *p.add(base + i * stride) = buf[i];
                            }
                        }
                    },
                );
            }
        }
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex<f64>]) {
        debug_assert_eq!(data.len(), self.len());
        for axis in 0..3 {
            self.pass(data, axis, false);
        }
    }

    /// Unnormalized inverse transform; callers fold 1/N into their spectral
    /// multipliers.
    pub fn inverse(&self, data: &mut [Complex<f64>]) {
        debug_assert_eq!(data.len(), self.len());
        for axis in 0..3 {
            self.pass(data, axis, true);
        }
    }
}

/// Angular frequency (rad/µm) for index `i` of `n` samples at spacing `h`.
pub fn angular_freq(i: usize, n: usize, h: f64) -> f64 {
    let j = if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    };
    2.0 * std::f64::consts::PI * j as f64 / (n as f64 * h)
}
