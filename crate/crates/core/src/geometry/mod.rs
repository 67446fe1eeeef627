//! Binary 3D vascular lattices: construction, ingestion, transformation,
//! and characterization of the virtual MRI voxels fed to the simulator.

mod edt;
mod generate;
mod io;
mod transform;

pub use edt::{compute_mean_radius, distance_transform};
pub use generate::{generate_cylinders_3d, generate_disks_2d, CylinderSpec};
pub use io::{ingest_mask, read_float_volume, write_float_volume, write_mask};
pub use transform::{chop, erode, rescale};

use crate::error::{Error, Result};

/// Binary occupancy lattice with physical cell spacing in micrometers.
///
/// Cells are stored x-fastest: index = x + nx*(y + ny*z). A value of 1
/// marks an intravascular cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice3D {
    dims: [usize; 3],
    spacing: [f64; 3],
    mask: Vec<u8>,
}

impl Lattice3D {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], mask: Vec<u8>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::DimensionError(format!("zero dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::DimensionError(format!(
                "non-positive spacing in {spacing:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if mask.len() != n {
            return Err(Error::DimensionError(format!(
                "mask length {} != nx*ny*nz = {}",
                mask.len(),
                n
            )));
        }
        if mask.iter().any(|&v| v > 1) {
            return Err(Error::FormatError("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            dims,
            spacing,
            mask,
        })
    }

    pub fn empty(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        Self::new(dims, spacing, vec![0u8; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub(crate) fn mask_mut(&mut self) -> &mut [u8] {
        &mut self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.iter().all(|&v| v == 0)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.mask[self.index(x, y, z)]
    }

    /// Physical edge lengths (µm) per axis.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    pub fn occupied(&self) -> usize {
        self.mask.iter().map(|&v| v as usize).sum()
    }
}

/// Occupied-cell count over total cells.
pub fn compute_bvf(lattice: &Lattice3D) -> f64 {
    lattice.occupied() as f64 / lattice.len() as f64
}

/// How a voxel's vascular mask was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Disks2D,
    Cylinders3D,
    RealisticMask,
    Eroded,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Disks2D => "disks2d",
            Provenance::Cylinders3D => "cylinders3d",
            Provenance::RealisticMask => "mask",
            Provenance::Eroded => "eroded",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "disks2d" => Ok(Provenance::Disks2D),
            "cylinders3d" => Ok(Provenance::Cylinders3D),
            "mask" => Ok(Provenance::RealisticMask),
            "eroded" => Ok(Provenance::Eroded),
            other => Err(Error::InvalidParameter(format!(
                "unknown provenance '{other}'"
            ))),
        }
    }
}

/// A characterized voxel: lattice plus its derived blood volume fraction
/// and mean vessel radius.
#[derive(Debug, Clone)]
pub struct VoxelGeometry {
    pub lattice: Lattice3D,
    pub bvf: f64,
    pub mean_radius: f64,
    pub provenance: Provenance,
    pub seed: u64,
}

impl VoxelGeometry {
    /// Characterizes an arbitrary lattice. `mean_radius` is 0 for an empty mask.
    pub fn characterize(lattice: Lattice3D, provenance: Provenance, seed: u64) -> Self {
        let bvf = compute_bvf(&lattice);
        let mean_radius = if bvf == 0.0 {
            0.0
        } else {
            compute_mean_radius(&lattice).expect("non-empty mask")
        };
        VoxelGeometry {
            lattice,
            bvf,
            mean_radius,
            provenance,
            seed,
        }
    }
}
