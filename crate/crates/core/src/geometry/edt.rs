//! Exact Euclidean distance transform (Felzenszwalb-Huttenlocher, separable
//! parabola method) with anisotropic spacing, and the distance-based mean
//! vessel radius estimator.

use super::Lattice3D;
use crate::error::{Error, Result};

const INF: f64 = 1e30;

/// 1D squared-distance transform over samples at positions i*h.
fn dt1d(f: &[f64], h: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -INF;
    z[1] = INF;
    let sq = |i: usize| (i as f64 * h) * (i as f64 * h);
    for q in 1..n {
        loop {
            let p = v[k];
            let s = (f[q] + sq(q) - f[p] - sq(p)) / (2.0 * h * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = INF;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        let x = q as f64 * h;
        while z[k + 1] < x {
            k += 1;
        }
        let p = v[k];
        let d = x - p as f64 * h;
        out[q] = d * d + f[p];
    }
}

/// Euclidean distance (µm, cell-center to cell-center) from each cell to the
/// nearest non-vessel cell. The domain border counts as background: the
/// volume is padded by one empty shell, so a fully occupied lattice still
/// has finite distances. Background cells map to 0.
///
/// Axes of size 1 are treated as translation-invariant (no border there), so
/// a single-slice disk lattice measures in-plane distances.
pub fn distance_transform(lattice: &Lattice3D) -> Vec<f64> {
    let [nx, ny, nz] = lattice.dims();
    let [hx, hy, hz] = lattice.spacing();
    let (bx, by, bz) = (
        (nx > 1) as usize,
        (ny > 1) as usize,
        (nz > 1) as usize,
    );
    let (px, py, pz) = (nx + 2 * bx, ny + 2 * by, nz + 2 * bz);
    let mut d = vec![0.0f64; px * py * pz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if lattice.get(x, y, z) == 1 {
                    d[(x + bx) + px * ((y + by) + py * (z + bz))] = INF;
                }
            }
        }
    }

    let nmax = px.max(py).max(pz);
    let mut f = vec![0.0f64; nmax];
    let mut out = vec![0.0f64; nmax];
    let mut v = vec![0usize; nmax];
    let mut zb = vec![0.0f64; nmax + 1];

    if px > 1 {
        for z in 0..pz {
            for y in 0..py {
                let base = px * (y + py * z);
                f[..px].copy_from_slice(&d[base..base + px]);
                dt1d(&f[..px], hx, &mut out[..px], &mut v, &mut zb);
                d[base..base + px].copy_from_slice(&out[..px]);
            }
        }
    }
    if py > 1 {
        for z in 0..pz {
            for x in 0..px {
                for y in 0..py {
                    f[y] = d[x + px * (y + py * z)];
                }
                dt1d(&f[..py], hy, &mut out[..py], &mut v, &mut zb);
                for y in 0..py {
                    d[x + px * (y + py * z)] = out[y];
                }
            }
        }
    }
    if pz > 1 {
        for y in 0..py {
            for x in 0..px {
                for z in 0..pz {
                    f[z] = d[x + px * (y + py * z)];
                }
                dt1d(&f[..pz], hz, &mut out[..pz], &mut v, &mut zb);
                for z in 0..pz {
                    d[x + px * (y + py * z)] = out[z];
                }
            }
        }
    }

    let fallback = 0.5 * hx.min(hy).min(hz);
    let mut res = vec![0.0f64; nx * ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let val = d[(x + bx) + px * ((y + by) + py * (z + bz))];
                res[x + nx * (y + ny * z)] = if val >= INF {
                    fallback // 1x1x1 degenerate lattice
                } else {
                    val.sqrt()
                };
            }
        }
    }
    res
}

/// Mean vessel radius (µm): the distance transform averaged over medial-axis
/// cells, where a medial cell is a 26-neighborhood local maximum of the
/// transform (no neighbor strictly larger). Ridges sloping toward thinner
/// structure are excluded by construction; plateau tops survive.
pub fn compute_mean_radius(lattice: &Lattice3D) -> Result<f64> {
    let [nx, ny, nz] = lattice.dims();
    let dt = distance_transform(lattice);
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let c = dt[x + nx * (y + ny * z)];
                if c <= 0.0 {
                    continue;
                }
                let mut is_max = true;
                'nb: for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if dx == 0 && dy == 0 && dz == 0 {
                                continue;
                            }
                            let (qx, qy, qz) =
                                (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if qx < 0
                                || qy < 0
                                || qz < 0
                                || qx >= nx as i64
                                || qy >= ny as i64
                                || qz >= nz as i64
                            {
                                continue;
                            }
                            let q = dt[qx as usize + nx * (qy as usize + ny * qz as usize)];
                            if q > c + 1e-9 {
                                is_max = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_max {
                    sum += c;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}
