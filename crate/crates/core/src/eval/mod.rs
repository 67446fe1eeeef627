//! Synthetic ground-truth experiments: noise injection, recovery scoring,
//! Welch t-tests, ROI statistics, and the cross-geometry bias table.

use crate::dictionary::{build_dictionary, sobol_scrambled, Dictionary, VascularParams};
use crate::error::{Error, Result};
use crate::geometry::{generate_cylinders_3d, generate_disks_2d, VoxelGeometry};
use crate::physics::{simulate_fingerprint, Fingerprint, PhysicsParams, SequenceSpec};
use crate::recon::{match_dbm, ParamMaps};
use crate::rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Gaussian noise at a target SNR; the reference amplitude is the first
/// pre-contrast echo (index 0), so in normalized fingerprint space the
/// per-sample standard deviation is `values[0] / snr`. `snr = +inf` is the
/// noiseless sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "snr {} must be > 0",
                self.snr
            )));
        }
        Ok(())
    }
}

pub fn add_noise(fp: &Fingerprint, spec: &NoiseSpec) -> Result<Fingerprint> {
    spec.validate()?;
    if fp.is_empty() {
        return Err(Error::ZeroSignal);
    }
    if spec.snr.is_infinite() {
        return Ok(fp.clone());
    }
    let sigma = fp.values[0] / spec.snr;
    let mut r = rng::derive(spec.seed, 0x6e6f697365);
    let normal = Normal::new(0.0, sigma).map_err(|_| {
        Error::InvalidParameter(format!("degenerate noise sigma {sigma}"))
    })?;
    let noisy: Vec<f64> = fp.values.iter().map(|v| v + normal.sample(&mut r)).collect();
    let mut out = Fingerprint::from_values(noisy)?;
    out.meta = fp.meta;
    Ok(out)
}

/// Per-parameter mean absolute error, RMSE, and signed bias (est − truth)
/// in (bvf, r, so2, t2) order.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub method: String,
    pub n: usize,
    pub mae: [f64; 4],
    pub rmse: [f64; 4],
    pub bias: [f64; 4],
}

pub fn recovery_metrics(
    truth: &[VascularParams],
    est: &[VascularParams],
    method: &str,
) -> Result<RecoveryReport> {
    if truth.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    if truth.len() != est.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: est.len(),
        });
    }
    let n = truth.len() as f64;
    let mut mae = [0.0; 4];
    let mut mse = [0.0; 4];
    let mut bias = [0.0; 4];
    for (t, e) in truth.iter().zip(est) {
        let dt = t.as_array();
        let de = e.as_array();
        for j in 0..4 {
            let d = de[j] - dt[j];
            mae[j] += d.abs();
            mse[j] += d * d;
            bias[j] += d;
        }
    }
    for j in 0..4 {
        mae[j] /= n;
        mse[j] = (mse[j] / n).sqrt();
        bias[j] /= n;
    }
    Ok(RecoveryReport {
        method: method.to_string(),
        n: truth.len(),
        mae,
        rmse: mse,
        bias,
    })
}

/// Welch's unequal-variance t statistic with Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need >= 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    if va == 0.0 && vb == 0.0 {
        return Err(Error::DegenerateSample);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|_| Error::InvalidParameter(format!("bad degrees of freedom {df}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p))
}

/// Per-parameter mean and standard deviation over a region of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiStats {
    pub label: String,
    pub n: usize,
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

pub fn roi_stats(maps: &ParamMaps, roi: &[u8], label: &str) -> Result<RoiStats> {
    let n_vox = maps.dims[0] * maps.dims[1] * maps.dims[2];
    if roi.len() != n_vox {
        return Err(Error::DimensionError(format!(
            "roi has {} cells, maps have {n_vox}",
            roi.len()
        )));
    }
    let idx: Vec<usize> = (0..n_vox).filter(|&v| roi[v] != 0).collect();
    if idx.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let n = idx.len() as f64;
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for &v in &idx {
        let p = maps.voxel(v).as_array();
        for j in 0..4 {
            mean[j] += p[j];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    for &v in &idx {
        let p = maps.voxel(v).as_array();
        for j in 0..4 {
            let d = p[j] - mean[j];
            std[j] += d * d;
        }
    }
    for s in std.iter_mut() {
        *s = (*s / n).sqrt();
    }
    Ok(RoiStats {
        label: label.to_string(),
        n: idx.len(),
        mean,
        std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeometryFamily {
    Disks2D,
    Cylinders3D,
}

impl GeometryFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            GeometryFamily::Disks2D => "disks2d",
            GeometryFamily::Cylinders3D => "cylinders3d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "disks2d" => Ok(GeometryFamily::Disks2D),
            "cylinders3d" => Ok(GeometryFamily::Cylinders3D),
            other => Err(Error::InvalidParameter(format!(
                "unknown geometry family {other:?}"
            ))),
        }
    }
}

/// Everything the cross-model experiment needs besides (n, seed). Both
/// dictionaries are built at identical (BVf, R, SO2, T2) coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossModelConfig {
    pub families: Vec<GeometryFamily>,
    pub dict_entries: usize,
    pub dims_2d: [usize; 2],
    pub dims_3d: [usize; 3],
    pub spacing: f64,
    pub bvf_range: (f64, f64),
    pub r_range: (f64, f64),
    pub so2_range: (f64, f64),
    pub t2_range: (f64, f64),
    pub snr: f64,
    pub physics: PhysicsParams,
    pub sequence: SequenceSpec,
}

impl Default for CrossModelConfig {
    fn default() -> Self {
        Self {
            families: vec![GeometryFamily::Cylinders3D, GeometryFamily::Disks2D],
            dict_entries: 128,
            dims_2d: [48, 48],
            dims_3d: [24, 24, 24],
            spacing: 2.0,
            bvf_range: (0.01, 0.08),
            r_range: (3.0, 8.0),
            so2_range: (0.35, 0.90),
            t2_range: (45.0, 110.0),
            snr: 40.0,
            physics: PhysicsParams::default(),
            sequence: SequenceSpec::default(),
        }
    }
}

fn make_geometry(
    family: GeometryFamily,
    bvf: f64,
    r: f64,
    cfg: &CrossModelConfig,
    seed: u64,
) -> Result<VoxelGeometry> {
    match family {
        GeometryFamily::Disks2D => generate_disks_2d(bvf, r, cfg.dims_2d, cfg.spacing, seed),
        GeometryFamily::Cylinders3D => {
            generate_cylinders_3d(bvf, r, cfg.dims_3d, cfg.spacing, seed)
        }
    }
}

fn family_dictionary(
    family: GeometryFamily,
    cfg: &CrossModelConfig,
    seed: u64,
) -> Result<Dictionary> {
    let draws = sobol_scrambled(
        cfg.dict_entries,
        &[cfg.bvf_range, cfg.r_range],
        seed ^ 0x64696374,
    )?;
    let geoms: Vec<VoxelGeometry> = draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            make_geometry(family, d[0], d[1], cfg, seed.wrapping_add(i as u64))
                .map_err(|e| e.at_entry(i))
        })
        .collect::<Result<_>>()?;
    build_dictionary(
        &geoms,
        cfg.so2_range,
        cfg.t2_range,
        &cfg.physics,
        &cfg.sequence,
        seed,
    )
}

/// Signed (est − truth) parameter bias for one (generator, dictionary) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasCell {
    pub generator: GeometryFamily,
    pub dictionary: GeometryFamily,
    pub bias: [f64; 4],
    pub mae: [f64; 4],
    /// per-voxel SO2 estimates, kept for downstream t-tests
    pub so2_est: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    pub n: usize,
    pub cells: Vec<BiasCell>,
}

impl BiasTable {
    pub fn cell(&self, g: GeometryFamily, d: GeometryFamily) -> Option<&BiasCell> {
        self.cells
            .iter()
            .find(|c| c.generator == g && c.dictionary == d)
    }
}

/// For every generator family, simulates `n` test voxels at off-grid
/// parameters, reconstructs them by DBM against each family's dictionary,
/// and tabulates per-parameter biases.
pub fn cross_model_bias(n: usize, seed: u64, cfg: &CrossModelConfig) -> Result<BiasTable> {
    if n < 50 {
        return Err(Error::InvalidParameter(format!("n {n} must be >= 50")));
    }
    if cfg.families.is_empty() {
        return Err(Error::InvalidParameter("no geometry families".into()));
    }
    let dicts: Vec<Dictionary> = cfg
        .families
        .iter()
        .enumerate()
        .map(|(i, &f)| family_dictionary(f, cfg, seed.wrapping_add(1000 * (i as u64 + 1))))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (gi, &gen) in cfg.families.iter().enumerate() {
        // off-grid test draws: same ranges, a different scramble stream
        let test_seed = seed.wrapping_add(7777 * (gi as u64 + 1));
        let geo_draws = sobol_scrambled(n, &[cfg.bvf_range, cfg.r_range], test_seed)?;
        let par_draws = sobol_scrambled(n, &[cfg.so2_range, cfg.t2_range], test_seed ^ 1)?;
        let mut truth = Vec::with_capacity(n);
        let mut fps = Vec::with_capacity(n);
        for i in 0..n {
            let g = make_geometry(
                gen,
                geo_draws[i][0],
                geo_draws[i][1],
                cfg,
                test_seed.wrapping_add(i as u64),
            )
            .map_err(|e| e.at_entry(i))?;
            let (so2, t2) = (par_draws[i][0], par_draws[i][1]);
            let fp = simulate_fingerprint(&g, so2, t2, &cfg.physics, &cfg.sequence)
                .map_err(|e| e.at_entry(i))?;
            let fp = add_noise(
                &fp,
                &NoiseSpec {
                    snr: cfg.snr,
                    seed: test_seed.wrapping_add(i as u64),
                },
            )?;
            truth.push(VascularParams {
                bvf: g.bvf,
                r: g.mean_radius,
                so2,
                t2,
            });
            fps.push(fp);
        }
        for (di, &df) in cfg.families.iter().enumerate() {
            let est: Vec<VascularParams> = fps
                .iter()
                .map(|fp| match_dbm(fp, &dicts[di]))
                .collect::<Result<_>>()?;
            let rep = recovery_metrics(&truth, &est, "dbm")?;
            cells.push(BiasCell {
                generator: gen,
                dictionary: df,
                bias: rep.bias,
                mae: rep.mae,
                so2_est: est.iter().map(|p| p.so2).collect(),
            });
        }
    }
    Ok(BiasTable { n, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::Method;
    use statrs::function::gamma::ln_gamma;

    fn unit_fp(len: usize) -> Fingerprint {
        let vals: Vec<f64> = (0..len).map(|i| 1.0 + (i as f64 * 0.3).sin() * 0.3).collect();
        Fingerprint::from_values(vals).unwrap()
    }

    #[test]
    fn noiseless_sentinel_is_identity() {
        let fp = unit_fp(16);
        let out = add_noise(
            &fp,
            &NoiseSpec {
                snr: f64::INFINITY,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(fp, out);
    }

    #[test]
    fn noise_is_deterministic_and_nontrivial() {
        let fp = unit_fp(16);
        for seed in 0..100 {
            let spec = NoiseSpec { snr: 40.0, seed };
            let a = add_noise(&fp, &spec).unwrap();
            let b = add_noise(&fp, &spec).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.values, fp.values, "seed {seed} returned the input");
        }
    }

    #[test]
    fn noise_std_matches_snr() {
        // measure pre-normalization: recreate the draw and compare against
        // sigma = values[0]/snr
        let fp = unit_fp(8);
        let snr = 20.0;
        let sigma = fp.values[0] / snr;
        let mut sum2 = 0.0;
        let mut count = 0usize;
        for seed in 0..1250u64 {
            let mut r = rng::derive(seed, 0x6e6f697365);
            let normal = Normal::new(0.0, sigma).unwrap();
            for _ in 0..8 {
                let d: f64 = normal.sample(&mut r);
                sum2 += d * d;
                count += 1;
            }
        }
        let emp = (sum2 / count as f64).sqrt();
        assert!(
            (emp - sigma).abs() / sigma < 0.05,
            "empirical std {emp} vs {sigma}"
        );
    }

    #[test]
    fn recovery_zero_on_exact() {
        let t = vec![
            VascularParams {
                bvf: 0.05,
                r: 5.0,
                so2: 0.6,
                t2: 70.0,
            };
            3
        ];
        let rep = recovery_metrics(&t, &t, "dbm").unwrap();
        assert_eq!(rep.mae, [0.0; 4]);
        assert_eq!(rep.rmse, [0.0; 4]);
        assert_eq!(rep.bias, [0.0; 4]);
    }

    #[test]
    fn recovery_single_offset() {
        let t = vec![VascularParams {
            bvf: 0.05,
            r: 5.0,
            so2: 0.6,
            t2: 70.0,
        }];
        let mut e = t.clone();
        e[0].r += 1.0;
        let rep = recovery_metrics(&t, &e, "dbm").unwrap();
        assert_eq!(rep.mae, [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(rep.rmse, [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(rep.bias, [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rmse_dominates_mae() {
        let t: Vec<VascularParams> = (0..10)
            .map(|i| VascularParams {
                bvf: 0.05,
                r: 5.0 + i as f64 * 0.3,
                so2: 0.6,
                t2: 70.0,
            })
            .collect();
        let e: Vec<VascularParams> = t
            .iter()
            .enumerate()
            .map(|(i, p)| VascularParams {
                r: p.r + ((i as f64 * 1.7).sin()),
                ..*p
            })
            .collect();
        let rep = recovery_metrics(&t, &e, "dbm").unwrap();
        for j in 0..4 {
            assert!(rep.rmse[j] >= rep.mae[j] - 1e-15);
        }
    }

    // two-sided p by Simpson integration of the t density
    fn t_pvalue_oracle(t: f64, df: f64) -> f64 {
        let ln_c = ln_gamma((df + 1.0) / 2.0)
            - ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        // integrate |t| .. |t|+60 with fine Simpson
        let (a, b) = (t.abs(), t.abs() + 60.0);
        let m = 200_000;
        let h = (b - a) / m as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..m {
            let x = a + i as f64 * h;
            s += pdf(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        2.0 * s * h / 3.0
    }

    #[test]
    fn welch_fixed_example_matches_oracle() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let (t, p) = welch_ttest(&a, &b).unwrap();
        let se2 = 2.5 / 5.0 + 2.5 / 5.0;
        let df = se2 * se2 / (2.0 * (2.5f64 / 5.0).powi(2) / 4.0);
        let oracle = t_pvalue_oracle(t, df);
        assert!((p - oracle).abs() < 0.005, "p {p} vs oracle {oracle}");
        assert!((p - 0.348).abs() < 0.005, "p {p} not near 0.348");
    }

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 2.0, 3.0];
        let (t, p) = welch_ttest(&a, &a).unwrap();
        assert_eq!(t, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn welch_symmetry_and_equivariance() {
        let a = [1.0, 2.5, 3.0, 4.2];
        let b = [2.0, 3.1, 4.4, 5.0, 6.3];
        let (t1, p1) = welch_ttest(&a, &b).unwrap();
        let (t2, p2) = welch_ttest(&b, &a).unwrap();
        assert!((t1 + t2).abs() < 1e-12);
        assert!((p1 - p2).abs() < 1e-12);
        let f = |x: f64| 3.7 * x - 2.0;
        let fa: Vec<f64> = a.iter().map(|&x| f(x)).collect();
        let fb: Vec<f64> = b.iter().map(|&x| f(x)).collect();
        let (_, p3) = welch_ttest(&fa, &fb).unwrap();
        assert!((p1 - p3).abs() < 1e-12);
    }

    #[test]
    fn welch_separated_gaussians() {
        use rand::Rng;
        let mut r = rng::derive(4, 0);
        let a: Vec<f64> = (0..50).map(|_| r.gen::<f64>()).collect();
        let b: Vec<f64> = (0..50).map(|_| r.gen::<f64>() + 5.0 * 0.29).collect();
        let (_, p) = welch_ttest(&a, &b).unwrap();
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn welch_degenerate_rejected() {
        let a = [2.0, 2.0, 2.0];
        assert!(matches!(welch_ttest(&a, &a), Err(Error::DegenerateSample)));
        assert!(welch_ttest(&[1.0], &a).is_err());
    }

    fn const_maps(dims: [usize; 3], v: f64) -> ParamMaps {
        let n = dims[0] * dims[1] * dims[2];
        ParamMaps {
            dims,
            bvf: vec![v; n],
            r: vec![v; n],
            so2: vec![v; n],
            t2: vec![v; n],
            method: Method::Dbm,
        }
    }

    #[test]
    fn roi_single_voxel() {
        let mut maps = const_maps([2, 2, 1], 1.0);
        maps.r[2] = 9.0;
        let mut roi = vec![0u8; 4];
        roi[2] = 1;
        let s = roi_stats(&maps, &roi, "probe").unwrap();
        assert_eq!(s.n, 1);
        assert_eq!(s.mean[1], 9.0);
        assert_eq!(s.std, [0.0; 4]);
    }

    #[test]
    fn roi_checkerboard_mean() {
        let mut maps = const_maps([4, 4, 1], 0.0);
        for v in 0..16 {
            let val = if v % 2 == 0 { 2.0 } else { 4.0 };
            maps.bvf[v] = val;
            maps.r[v] = val;
            maps.so2[v] = val;
            maps.t2[v] = val;
        }
        let s = roi_stats(&maps, &vec![1u8; 16], "full").unwrap();
        assert_eq!(s.mean, [3.0; 4]);
    }

    #[test]
    fn roi_empty_rejected() {
        let maps = const_maps([2, 2, 1], 1.0);
        assert!(matches!(
            roi_stats(&maps, &vec![0u8; 4], "x"),
            Err(Error::EmptyRoi)
        ));
        assert!(roi_stats(&maps, &vec![1u8; 5], "x").is_err());
    }

    #[test]
    fn cross_model_shape_and_determinism() {
        let cfg = CrossModelConfig {
            families: vec![GeometryFamily::Disks2D],
            dict_entries: 16,
            dims_2d: [32, 32],
            sequence: SequenceSpec {
                n_echoes: 8,
                ..Default::default()
            },
            physics: PhysicsParams {
                diffusion: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let t1 = cross_model_bias(50, 5, &cfg).unwrap();
        assert_eq!(t1.cells.len(), 1);
        assert!(t1
            .cell(GeometryFamily::Disks2D, GeometryFamily::Disks2D)
            .is_some());
        let t2 = cross_model_bias(50, 5, &cfg).unwrap();
        assert_eq!(t1, t2);
        assert!(cross_model_bias(10, 5, &cfg).is_err());
    }
}
