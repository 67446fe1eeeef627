//! Python bindings for the MR vascular fingerprinting core.
//!
//! Exposes voxel geometry generation, fingerprint simulation, scrambled
//! Sobol sampling, dictionary building/matching, inverse-regression
//! training/prediction, and the Welch t-test.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::Path;

use mrvf_core::dictionary::{self, VascularParams};
use mrvf_core::eval;
use mrvf_core::geometry::{self, Lattice3D, Provenance, VoxelGeometry};
use mrvf_core::physics::{self, Fingerprint, PhysicsParams, SequenceSpec};
use mrvf_core::recon::{self, ClipRules, RegressionModel};

fn err(e: mrvf_core::Error) -> PyErr {
    match e {
        mrvf_core::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn params_dict<'py>(py: Python<'py>, p: &VascularParams) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("bvf", p.bvf)?;
    d.set_item("r", p.r)?;
    d.set_item("so2", p.so2)?;
    d.set_item("t2", p.t2)?;
    Ok(d)
}

/// Physical constants of the simulation.
#[pyclass(name = "Physics")]
#[derive(Clone)]
struct PyPhysics {
    inner: PhysicsParams,
}

#[pymethods]
impl PyPhysics {
    #[new]
    #[pyo3(signature = (b0=None, gamma=None, hct=None, dchi_deoxy=None, dchi_uspio=None,
                        diffusion=None, dt=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        b0: Option<f64>,
        gamma: Option<f64>,
        hct: Option<f64>,
        dchi_deoxy: Option<f64>,
        dchi_uspio: Option<f64>,
        diffusion: Option<f64>,
        dt: Option<f64>,
    ) -> Self {
        let mut p = PhysicsParams::default();
        if let Some(v) = b0 {
            p.b0 = v;
        }
        if let Some(v) = gamma {
            p.gamma = v;
        }
        if let Some(v) = hct {
            p.hct = v;
        }
        if let Some(v) = dchi_deoxy {
            p.dchi_deoxy = v;
        }
        if let Some(v) = dchi_uspio {
            p.dchi_uspio = v;
        }
        if let Some(v) = diffusion {
            p.diffusion = v;
        }
        if let Some(v) = dt {
            p.dt = v;
        }
        Self { inner: p }
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Echo-train timing of the acquisition.
#[pyclass(name = "Sequence")]
#[derive(Clone)]
struct PySequence {
    inner: SequenceSpec,
}

#[pymethods]
impl PySequence {
    #[new]
    #[pyo3(signature = (tr=None, n_echoes=None, delta_te=None, se_time=None))]
    fn new(
        tr: Option<f64>,
        n_echoes: Option<usize>,
        delta_te: Option<f64>,
        se_time: Option<f64>,
    ) -> Self {
        let mut s = SequenceSpec::default();
        if let Some(v) = tr {
            s.tr = v;
        }
        if let Some(v) = n_echoes {
            s.n_echoes = v;
        }
        if let Some(v) = delta_te {
            s.delta_te = v;
        }
        if let Some(v) = se_time {
            s.se_time = v;
        }
        Self { inner: s }
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A characterized vascular voxel: binary lattice plus measured metrics.
#[pyclass(name = "Geometry")]
#[derive(Clone)]
struct PyGeometry {
    inner: VoxelGeometry,
}

#[pymethods]
impl PyGeometry {
    /// Pack parallel disks into a single-slice lattice.
    #[staticmethod]
    fn disks_2d(bvf: f64, r: f64, dims: [usize; 2], spacing: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: geometry::generate_disks_2d(bvf, r, dims, spacing, seed).map_err(err)?,
        })
    }

    /// Pack isotropically oriented cylinders into a 3D lattice.
    #[staticmethod]
    fn cylinders_3d(bvf: f64, r: f64, dims: [usize; 3], spacing: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: geometry::generate_cylinders_3d(bvf, r, dims, spacing, seed).map_err(err)?,
        })
    }

    /// Characterize an arbitrary binary mask (values 0/1, x-fastest order).
    #[staticmethod]
    fn from_mask(dims: [usize; 3], spacing: [f64; 3], mask: Vec<u8>) -> PyResult<Self> {
        let lattice = Lattice3D::new(dims, spacing, mask).map_err(err)?;
        Ok(Self {
            inner: VoxelGeometry::characterize(lattice, Provenance::RealisticMask, 0),
        })
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.lattice.dims()
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.inner.lattice.spacing()
    }

    #[getter]
    fn bvf(&self) -> f64 {
        self.inner.bvf
    }

    #[getter]
    fn mean_radius(&self) -> f64 {
        self.inner.mean_radius
    }

    #[getter]
    fn provenance(&self) -> &'static str {
        self.inner.provenance.as_str()
    }

    fn mask(&self) -> Vec<u8> {
        self.inner.lattice.mask().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Geometry(dims={:?}, bvf={:.4}, mean_radius={:.2}, provenance={})",
            self.inner.lattice.dims(),
            self.inner.bvf,
            self.inner.mean_radius,
            self.inner.provenance.as_str()
        )
    }
}

/// A fingerprint dictionary: sampled parameters and unit-norm signals.
#[pyclass(name = "Dictionary")]
struct PyDictionary {
    inner: dictionary::Dictionary,
}

#[pymethods]
impl PyDictionary {
    /// Simulate one fingerprint per geometry; SO2 and T2 are drawn from a
    /// scrambled Sobol sequence over the given ranges.
    #[staticmethod]
    #[pyo3(signature = (geometries, so2_range, t2_range, physics=None, sequence=None, seed=0))]
    fn build(
        geometries: Vec<PyGeometry>,
        so2_range: (f64, f64),
        t2_range: (f64, f64),
        physics: Option<PyPhysics>,
        sequence: Option<PySequence>,
        seed: u64,
    ) -> PyResult<Self> {
        let geoms: Vec<VoxelGeometry> = geometries.into_iter().map(|g| g.inner).collect();
        let p = physics.map(|v| v.inner).unwrap_or_default();
        let s = sequence.map(|v| v.inner).unwrap_or_default();
        Ok(Self {
            inner: dictionary::build_dictionary(&geoms, so2_range, t2_range, &p, &s, seed)
                .map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dictionary::load_dictionary(Path::new(path)).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dictionary::save_dictionary(&self.inner, Path::new(path)).map_err(err)
    }

    #[getter]
    fn n_entries(&self) -> usize {
        self.inner.n_entries()
    }

    #[getter]
    fn signal_length(&self) -> usize {
        self.inner.signal_length
    }

    fn params<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyDict>> {
        let p = self
            .inner
            .params
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("entry {i} out of range")))?;
        params_dict(py, p)
    }

    fn signal(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.inner.n_entries() {
            return Err(PyValueError::new_err(format!("entry {i} out of range")));
        }
        Ok(self.inner.signal_row(i).to_vec())
    }

    /// Nearest-entry match by inner product; returns (index, params dict).
    fn match_dbm<'py>(
        &self,
        py: Python<'py>,
        values: Vec<f64>,
    ) -> PyResult<(usize, Bound<'py, PyDict>)> {
        let fp = Fingerprint::from_values(values).map_err(err)?;
        let idx = recon::match_dbm_index(&fp, &self.inner).map_err(err)?;
        Ok((idx, params_dict(py, &self.inner.params[idx])?))
    }

    fn __len__(&self) -> usize {
        self.inner.n_entries()
    }
}

/// A trained inverse-regression (DBL) model.
#[pyclass(name = "Model")]
struct PyModel {
    inner: RegressionModel,
}

#[pymethods]
impl PyModel {
    /// Train a k-component model on a dictionary.
    #[staticmethod]
    #[pyo3(signature = (dictionary, k=0, seed=0))]
    fn train(dictionary: &PyDictionary, k: usize, seed: u64) -> PyResult<Self> {
        let k = if k == 0 {
            recon::default_k(dictionary.inner.n_entries())
        } else {
            k
        };
        Ok(Self {
            inner: recon::train_dbl(&dictionary.inner, k, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: recon::load_model(Path::new(path)).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        recon::save_model(&self.inner, Path::new(path)).map_err(err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.components.len()
    }

    #[getter]
    fn final_loglik(&self) -> f64 {
        self.inner.final_loglik
    }

    #[getter]
    fn n_iters(&self) -> u32 {
        self.inner.n_iters
    }

    /// Posterior-mean parameter estimate for one fingerprint.
    fn predict<'py>(&self, py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let fp = Fingerprint::from_values(values).map_err(err)?;
        let p = recon::predict_dbl(&self.inner, &fp, &ClipRules::default()).map_err(err)?;
        params_dict(py, &p)
    }
}

/// Simulate one pre+post-contrast fingerprint for a geometry.
#[pyfunction]
#[pyo3(signature = (geometry, so2, t2, physics=None, sequence=None))]
fn simulate_fingerprint(
    geometry: &PyGeometry,
    so2: f64,
    t2: f64,
    physics: Option<PyPhysics>,
    sequence: Option<PySequence>,
) -> PyResult<Vec<f64>> {
    let p = physics.map(|v| v.inner).unwrap_or_default();
    let s = sequence.map(|v| v.inner).unwrap_or_default();
    let fp = physics::simulate_fingerprint(&geometry.inner, so2, t2, &p, &s).map_err(err)?;
    Ok(fp.values)
}

/// n scrambled Sobol points mapped into the given (lo, hi) ranges.
#[pyfunction]
fn sobol(n: usize, ranges: Vec<(f64, f64)>, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    dictionary::sobol_scrambled(n, &ranges, seed).map_err(err)
}

/// Welch's unequal-variance t-test; returns (t, p).
#[pyfunction]
fn welch_ttest(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    eval::welch_ttest(&a, &b).map_err(err)
}

#[pymodule]
fn mrvf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPhysics>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate_fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(sobol, m)?)?;
    m.add_function(wrap_pyfunction!(welch_ttest, m)?)?;
    Ok(())
}
