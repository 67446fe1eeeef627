//! Joint Gaussian-mixture inverse regression: each component couples a
//! Gaussian over parameters with an affine-in-parameters Gaussian over
//! standardized signals (forward direction parameters → signals). Training
//! is EM with seeded k-means initialization; prediction inverts the mixture
//! analytically and summarizes by the posterior mean.

use crate::dictionary::{Dictionary, VascularParams};
use crate::error::{Error, Result};
use crate::physics::Fingerprint;
use crate::rng;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index::sample;

pub const PARAM_DIM: usize = 4;
const PSI_FLOOR: f64 = 1e-8;
const GAMMA_FLOOR: f64 = 1e-8;
const MAX_ITERS: usize = 200;
const REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    /// parameter-space mean, 4
    pub mu: DVector<f64>,
    /// parameter-space covariance, 4×4
    pub gamma: DMatrix<f64>,
    /// affine map, D×4
    pub a: DMatrix<f64>,
    /// affine offset, D
    pub b: DVector<f64>,
    /// diagonal signal-noise variances, D
    pub psi: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub components: Vec<Component>,
    /// per-sample standardization stats over the training dictionary
    pub signal_mean: DVector<f64>,
    pub signal_std: DVector<f64>,
    /// original indices of components pruned during EM
    pub pruned: Vec<usize>,
    pub final_loglik: f64,
    pub n_iters: u32,
    /// caller tags (e.g. pipeline config hash), persisted with the model
    pub tags: std::collections::BTreeMap<String, String>,
}

impl RegressionModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn signal_length(&self) -> usize {
        self.signal_mean.len()
    }
}

/// Default component count scaled to data volume.
pub fn default_k(n_entries: usize) -> usize {
    (n_entries / 500).max(1)
}

fn chol_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let scale = m.diagonal().amax().max(1e-30);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut mm = m.clone();
        if jitter > 0.0 {
            for i in 0..mm.nrows() {
                mm[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(mm) {
            return Ok(c);
        }
        jitter = if jitter == 0.0 { scale * 1e-12 } else { jitter * 100.0 };
    }
    Err(Error::InvalidParameter(
        "covariance not positive definite".into(),
    ))
}

fn ln_gauss(chol: &Cholesky<f64, nalgebra::Dyn>, resid: &DVector<f64>) -> f64 {
    let d = resid.len() as f64;
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let z = chol.solve(resid);
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + logdet + resid.dot(&z))
}

fn kmeans(points: &[DVector<f64>], k: usize, seed: u64, iters: usize) -> Vec<usize> {
    let n = points.len();
    let mut r = rng::derive(seed, 0x6b6d65616e73);
    let mut centers: Vec<DVector<f64>> = sample(&mut r, n, k)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, ctr) in centers.iter().enumerate() {
                let d = (p - ctr).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                // adopt the point farthest from its center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = (&points[a] - &centers[assign[a]]).norm_squared();
                        let db = (&points[b] - &centers[assign[b]]).norm_squared();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                assign[far] = c;
                centers[c] = points[far].clone();
                continue;
            }
            let mut m = DVector::zeros(points[0].len());
            for &i in &members {
                m += &points[i];
            }
            centers[c] = m / members.len() as f64;
        }
        if !changed {
            break;
        }
    }
    assign
}

struct FitData {
    /// n × 4 parameter rows
    x: Vec<DVector<f64>>,
    /// n × D standardized signal rows
    y: Vec<DVector<f64>>,
    mean: DVector<f64>,
    std: DVector<f64>,
}

fn standardize(dict: &Dictionary) -> FitData {
    let n = dict.n_entries();
    let d = dict.signal_length;
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        for (j, &s) in dict.signal_row(i).iter().enumerate() {
            mean[j] += s as f64;
        }
    }
    mean /= n as f64;
    let mut var = DVector::zeros(d);
    for i in 0..n {
        for (j, &s) in dict.signal_row(i).iter().enumerate() {
            let r = s as f64 - mean[j];
            var[j] += r * r;
        }
    }
    var /= n as f64;
    let std: DVector<f64> = var.map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
    let y = (0..n)
        .map(|i| {
            DVector::from_iterator(
                d,
                dict.signal_row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &s)| (s as f64 - mean[j]) / std[j]),
            )
        })
        .collect();
    let x = dict
        .params
        .iter()
        .map(|p| DVector::from_row_slice(&p.as_array()))
        .collect();
    FitData { x, y, mean, std }
}

fn m_step(data: &FitData, resp: &[Vec<f64>], c: usize) -> Result<(f64, Component)> {
    let n = data.x.len();
    let d = data.y[0].len();
    let mass: f64 = (0..n).map(|i| resp[i][c]).sum();

    let mut mu = DVector::zeros(PARAM_DIM);
    for i in 0..n {
        mu += &data.x[i] * resp[i][c];
    }
    mu /= mass;
    let mut gamma = DMatrix::zeros(PARAM_DIM, PARAM_DIM);
    for i in 0..n {
        let dx = &data.x[i] - &mu;
        gamma.syger(resp[i][c], &dx, &dx, 1.0);
    }
    gamma /= mass;
    gamma.fill_upper_triangle_with_lower_triangle();
    for i in 0..PARAM_DIM {
        gamma[(i, i)] = gamma[(i, i)].max(GAMMA_FLOOR);
    }

    // weighted affine regression via the augmented normal equations
    let aug = PARAM_DIM + 1;
    let mut sxx = DMatrix::zeros(aug, aug);
    let mut syx = DMatrix::zeros(d, aug);
    for i in 0..n {
        let w = resp[i][c];
        if w == 0.0 {
            continue;
        }
        let mut xt = DVector::zeros(aug);
        xt.rows_mut(0, PARAM_DIM).copy_from(&data.x[i]);
        xt[PARAM_DIM] = 1.0;
        sxx.syger(w, &xt, &xt, 1.0);
        syx.ger(w, &data.y[i], &xt, 1.0);
    }
    sxx.fill_upper_triangle_with_lower_triangle();
    let chol = chol_with_jitter(&sxx)?;
    // W = Sxx^-1 Syx^T, so [A b] = W^T
    let w = chol.solve(&syx.transpose());
    let wt = w.transpose();
    let a = wt.columns(0, PARAM_DIM).into_owned();
    let b = wt.column(PARAM_DIM).into_owned();

    let mut psi = DVector::zeros(d);
    for i in 0..n {
        let wgt = resp[i][c];
        if wgt == 0.0 {
            continue;
        }
        let pred = &a * &data.x[i] + &b;
        for j in 0..d {
            let r = data.y[i][j] - pred[j];
            psi[j] += wgt * r * r;
        }
    }
    psi /= mass;
    for j in 0..d {
        psi[j] = psi[j].max(PSI_FLOOR);
    }

    Ok((
        mass,
        Component {
            weight: mass / n as f64,
            mu,
            gamma,
            a,
            b,
            psi,
        },
    ))
}

/// Fits a k-component model to the dictionary by EM. Components whose
/// responsibility mass drops below 1/(10·n) are pruned (k reduced) and
/// reported in the model.
pub fn train_dbl(dict: &Dictionary, k: usize, seed: u64) -> Result<RegressionModel> {
    let n = dict.n_entries();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if n < 10 * k {
        return Err(Error::InvalidParameter(format!(
            "n_entries {n} < 10*k = {}",
            10 * k
        )));
    }
    let data = standardize(dict);

    // k-means on per-column standardized parameters
    let mut pmean = DVector::zeros(PARAM_DIM);
    for x in &data.x {
        pmean += x;
    }
    pmean /= n as f64;
    let mut pvar = DVector::zeros(PARAM_DIM);
    for x in &data.x {
        let dx = x - &pmean;
        for j in 0..PARAM_DIM {
            pvar[j] += dx[j] * dx[j];
        }
    }
    pvar /= n as f64;
    let pstd: DVector<f64> = pvar.map(|v: f64| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
    let zx: Vec<DVector<f64>> = data
        .x
        .iter()
        .map(|x| {
            DVector::from_iterator(
                PARAM_DIM,
                x.iter().enumerate().map(|(j, v)| (v - pmean[j]) / pstd[j]),
            )
        })
        .collect();
    let assign = kmeans(&zx, k, seed, 100);

    let mut resp: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = vec![0.0; k];
            r[assign[i]] = 1.0;
            r
        })
        .collect();

    // original component indices surviving so far
    let mut alive: Vec<usize> = (0..k).collect();
    let mut pruned: Vec<usize> = Vec::new();
    let mut components: Vec<Component> = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut ll = f64::NEG_INFINITY;
    let mut iters = 0u32;

    for iter in 0..MAX_ITERS {
        iters = iter as u32 + 1;

        // M-step with pruning of vanishing components
        let threshold = 1.0 / (10.0 * n as f64);
        let mut next = Vec::with_capacity(alive.len());
        let mut keep = Vec::with_capacity(alive.len());
        for (ci, &orig) in alive.iter().enumerate() {
            let mass: f64 = (0..n).map(|i| resp[i][ci]).sum();
            if mass / (n as f64) < threshold {
                pruned.push(orig);
                continue;
            }
            let (_, comp) = m_step(&data, &resp, ci)?;
            next.push(comp);
            keep.push((ci, orig));
        }
        if next.is_empty() {
            return Err(Error::DegenerateComponent {
                component: alive[0],
                mass: 0.0,
            });
        }
        if next.len() != alive.len() {
            // compact responsibilities to surviving columns and renormalize
            alive = keep.iter().map(|&(_, o)| o).collect();
            let cols: Vec<usize> = keep.iter().map(|&(ci, _)| ci).collect();
            for r in resp.iter_mut() {
                let mut v: Vec<f64> = cols.iter().map(|&ci| r[ci]).collect();
                let s: f64 = v.iter().sum();
                if s > 0.0 {
                    for x in v.iter_mut() {
                        *x /= s;
                    }
                } else {
                    let u = 1.0 / v.len() as f64;
                    v.fill(u);
                }
                *r = v;
            }
            let wsum: f64 = next.iter().map(|c| c.weight).sum();
            for c in next.iter_mut() {
                c.weight /= wsum;
            }
        }
        components = next;
        let kk = components.len();

        // E-step
        let gamma_chols: Vec<_> = components
            .iter()
            .map(|c| chol_with_jitter(&c.gamma))
            .collect::<Result<_>>()?;
        let psi_logdets: Vec<f64> = components
            .iter()
            .map(|c| c.psi.iter().map(|v| v.ln()).sum())
            .collect();
        let dd = data.y[0].len() as f64;
        ll = 0.0;
        for i in 0..n {
            let mut logs = vec![0.0f64; kk];
            for (c, comp) in components.iter().enumerate() {
                let dx = &data.x[i] - &comp.mu;
                let lx = ln_gauss(&gamma_chols[c], &dx);
                let pred = &comp.a * &data.x[i] + &comp.b;
                let mut quad = 0.0;
                for j in 0..data.y[i].len() {
                    let r = data.y[i][j] - pred[j];
                    quad += r * r / comp.psi[j];
                }
                let ly = -0.5
                    * (dd * (2.0 * std::f64::consts::PI).ln() + psi_logdets[c] + quad);
                logs[c] = comp.weight.ln() + lx + ly;
            }
            let mx = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let sum: f64 = logs.iter().map(|l| (l - mx).exp()).sum();
            ll += mx + sum.ln();
            for c in 0..kk {
                resp[i][c] = (logs[c] - mx).exp() / sum;
            }
        }

        if prev_ll.is_finite() {
            assert!(
                ll >= prev_ll - REL_TOL * (1.0 + prev_ll.abs()),
                "log-likelihood decreased: {prev_ll} -> {ll}"
            );
            if (ll - prev_ll).abs() < REL_TOL * prev_ll.abs().max(1.0) {
                break;
            }
        }
        prev_ll = ll;
    }

    pruned.sort_unstable();
    Ok(RegressionModel {
        components,
        signal_mean: data.mean,
        signal_std: data.std,
        pruned,
        final_loglik: ll,
        n_iters: iters,
        tags: Default::default(),
    })
}

/// Precomputed per-component factorizations for repeated prediction.
pub struct Predictor<'a> {
    model: &'a RegressionModel,
    // per component: evidence Cholesky of psi + A gamma A^T, posterior
    // covariance (gamma^-1 + A^T psi^-1 A)^-1, and gamma^-1 mu
    evidence: Vec<Cholesky<f64, nalgebra::Dyn>>,
    sigma_star: Vec<DMatrix<f64>>,
    gamma_inv_mu: Vec<DVector<f64>>,
}

impl<'a> Predictor<'a> {
    pub fn new(model: &'a RegressionModel) -> Result<Self> {
        let mut evidence = Vec::with_capacity(model.k());
        let mut sigma_star = Vec::with_capacity(model.k());
        let mut gamma_inv_mu = Vec::with_capacity(model.k());
        for comp in &model.components {
            let mut cov = &comp.a * &comp.gamma * comp.a.transpose();
            for j in 0..cov.nrows() {
                cov[(j, j)] += comp.psi[j];
            }
            evidence.push(chol_with_jitter(&cov)?);

            let gchol = chol_with_jitter(&comp.gamma)?;
            let gamma_inv = gchol.inverse();
            // A^T psi^-1 A
            let mut atpa = DMatrix::zeros(PARAM_DIM, PARAM_DIM);
            for j in 0..comp.psi.len() {
                let row = comp.a.row(j).transpose();
                atpa.syger(1.0 / comp.psi[j], &row, &row, 1.0);
            }
            atpa.fill_upper_triangle_with_lower_triangle();
            let prec = &gamma_inv + &atpa;
            sigma_star.push(chol_with_jitter(&prec)?.inverse());
            gamma_inv_mu.push(&gamma_inv * &comp.mu);
        }
        Ok(Self {
            model,
            evidence,
            sigma_star,
            gamma_inv_mu,
        })
    }

    /// Unclipped posterior-mean parameters for a fingerprint.
    pub fn predict_raw(&self, fp: &Fingerprint) -> Result<[f64; 4]> {
        let d = self.model.signal_length();
        if fp.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                got: fp.len(),
            });
        }
        let y = DVector::from_iterator(
            d,
            fp.values
                .iter()
                .enumerate()
                .map(|(j, &v)| (v - self.model.signal_mean[j]) / self.model.signal_std[j]),
        );
        let k = self.model.k();
        let mut logw = vec![0.0f64; k];
        let mut means = Vec::with_capacity(k);
        for (c, comp) in self.model.components.iter().enumerate() {
            let resid = &y - (&comp.a * &comp.mu + &comp.b);
            logw[c] = comp.weight.ln() + ln_gauss(&self.evidence[c], &resid);
            // posterior mean: sigma* (gamma^-1 mu + A^T psi^-1 (y - b))
            let yb = &y - &comp.b;
            let mut aty = DVector::zeros(PARAM_DIM);
            for j in 0..d {
                let w = yb[j] / comp.psi[j];
                for p in 0..PARAM_DIM {
                    aty[p] += comp.a[(j, p)] * w;
                }
            }
            means.push(&self.sigma_star[c] * (&self.gamma_inv_mu[c] + aty));
        }
        let mx = logw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = logw.iter().map(|l| (l - mx).exp()).sum();
        let mut out = DVector::zeros(PARAM_DIM);
        for c in 0..k {
            out += &means[c] * ((logw[c] - mx).exp() / sum);
        }
        Ok([out[0], out[1], out[2], out[3]])
    }

    pub fn predict(&self, fp: &Fingerprint, clips: &super::ClipRules) -> Result<VascularParams> {
        let raw = self.predict_raw(fp)?;
        Ok(clips.apply(VascularParams::from_array(raw)))
    }
}

/// One-shot prediction; for whole volumes build a [`Predictor`] once.
pub fn predict_dbl(
    model: &RegressionModel,
    fp: &Fingerprint,
    clips: &super::ClipRules,
) -> Result<VascularParams> {
    Predictor::new(model)?.predict(fp, clips)
}
