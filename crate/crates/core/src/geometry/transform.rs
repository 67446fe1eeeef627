//! Lattice transforms: chopping large volumes into MRI-sized voxels,
//! nearest-neighbor rescaling, and 6-connected morphological erosion.

use super::Lattice3D;
use crate::error::{Error, Result};

/// Splits a volume into the non-overlapping grid of sub-lattices of the
/// requested physical size (µm). Border remainders are discarded. Sub-voxel
/// edge lengths are rounded to whole cells of the source spacing.
pub fn chop(volume: &Lattice3D, voxel_dims_um: [f64; 3]) -> Result<Vec<Lattice3D>> {
    let dims = volume.dims();
    let spacing = volume.spacing();
    let extent = volume.extent();
    let mut cells = [0usize; 3];
    for i in 0..3 {
        if voxel_dims_um[i] > extent[i] + 1e-9 {
            return Err(Error::DimensionError(format!(
                "voxel dimension {} µm exceeds volume extent {} µm on axis {}",
                voxel_dims_um[i], extent[i], i
            )));
        }
        let c = (voxel_dims_um[i] / spacing[i]).round() as usize;
        if c == 0 {
            return Err(Error::DimensionError(format!(
                "voxel dimension {} µm is below one cell on axis {}",
                voxel_dims_um[i], i
            )));
        }
        cells[i] = c;
    }
    let counts = [
        dims[0] / cells[0],
        dims[1] / cells[1],
        dims[2] / cells[2],
    ];

    let mut out = Vec::with_capacity(counts[0] * counts[1] * counts[2]);
    for cz in 0..counts[2] {
        for cy in 0..counts[1] {
            for cx in 0..counts[0] {
                let mut mask = Vec::with_capacity(cells[0] * cells[1] * cells[2]);
                for z in 0..cells[2] {
                    for y in 0..cells[1] {
                        for x in 0..cells[0] {
                            mask.push(volume.get(
                                cx * cells[0] + x,
                                cy * cells[1] + y,
                                cz * cells[2] + z,
                            ));
                        }
                    }
                }
                out.push(Lattice3D::new(cells, spacing, mask)?);
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbor resampling onto a new cell spacing, preserving the
/// physical extent. Output dims are round(extent/new_spacing), at least 1.
pub fn rescale(lattice: &Lattice3D, new_spacing: [f64; 3]) -> Result<Lattice3D> {
    if new_spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::DimensionError(format!(
            "non-positive spacing in {new_spacing:?}"
        )));
    }
    let dims = lattice.dims();
    let spacing = lattice.spacing();
    let extent = lattice.extent();
    let mut ndims = [0usize; 3];
    for i in 0..3 {
        ndims[i] = ((extent[i] / new_spacing[i]).round() as usize).max(1);
    }
    let mut mask = Vec::with_capacity(ndims[0] * ndims[1] * ndims[2]);
    let src = |i: usize, axis: usize| -> usize {
        let pos = (i as f64 + 0.5) * new_spacing[axis] / spacing[axis];
        (pos.floor() as usize).min(dims[axis] - 1)
    };
    for z in 0..ndims[2] {
        let sz = src(z, 2);
        for y in 0..ndims[1] {
            let sy = src(y, 1);
            for x in 0..ndims[0] {
                mask.push(lattice.get(src(x, 0), sy, sz));
            }
        }
    }
    Lattice3D::new(ndims, new_spacing, mask)
}

/// 6-connected morphological erosion, `iterations` times. Out-of-domain
/// neighbors count as background except along axes of size 1, which are
/// treated as translation-invariant (so single-slice lattices erode
/// in-plane only).
pub fn erode(lattice: &Lattice3D, iterations: u32) -> Lattice3D {
    let dims = lattice.dims();
    let mut cur = lattice.clone();
    for _ in 0..iterations {
        let mut next = cur.clone();
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let i = cur.index(x, y, z);
                    if cur.mask()[i] == 0 {
                        continue;
                    }
                    let survives = neighbor_occupied(&cur, x, y, z);
                    if !survives {
                        next.mask_mut()[i] = 0;
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

fn neighbor_occupied(l: &Lattice3D, x: usize, y: usize, z: usize) -> bool {
    let dims = l.dims();
    let coords = [x, y, z];
    for axis in 0..3 {
        if dims[axis] == 1 {
            continue;
        }
        for dir in [-1i64, 1] {
            let q = coords[axis] as i64 + dir;
            if q < 0 || q >= dims[axis] as i64 {
                return false;
            }
            let mut c = coords;
            c[axis] = q as usize;
            if l.get(c[0], c[1], c[2]) == 0 {
                return false;
            }
        }
    }
    true
}
