//! Covariance-weighted least-squares fit of the preparation model to
//! estimated `(p0(s), p1(s))` trajectories, by Nelder-Mead with seeded
//! random restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimation::PhotonStats;
use crate::exec::Execution;
use crate::gaussian::{model_trajectory, parse_flat_config, ModelParams};

/// One estimated point of the trajectory with its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub s: f64,
    pub p0: f64,
    pub p1: f64,
    pub var_p0: f64,
    pub var_p1: f64,
    pub cov01: f64,
}

impl From<&PhotonStats> for FitPoint {
    fn from(st: &PhotonStats) -> Self {
        FitPoint { s: st.s, p0: st.p0, p1: st.p1, var_p0: st.var_p0, var_p1: st.var_p1, cov01: st.cov01 }
    }
}

impl FitPoint {
    /// `d^T C^{-1} d` for the residual `d`.
    fn mahalanobis(&self, p0: f64, p1: f64) -> f64 {
        let (d0, d1) = (p0 - self.p0, p1 - self.p1);
        let det = self.var_p0 * self.var_p1 - self.cov01 * self.cov01;
        (self.var_p1 * d0 * d0 - 2.0 * self.cov01 * d0 * d1 + self.var_p0 * d1 * d1) / det
    }

    fn check(&self) -> Result<()> {
        let det = self.var_p0 * self.var_p1 - self.cov01 * self.cov01;
        if !(self.var_p0 > 0.0 && det > 0.0) || ![self.s, self.p0, self.p1].iter().all(|v| v.is_finite()) {
            return domain(format!("fit point at s = {} needs finite values and a positive-definite covariance", self.s));
        }
        Ok(())
    }
}

/// A model parameter the fit may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreeParam {
    Vx,
    Vp,
    Q,
    Nth,
}

impl FreeParam {
    pub const ALL: [FreeParam; 4] = [FreeParam::Vx, FreeParam::Vp, FreeParam::Q, FreeParam::Nth];

    pub fn name(self) -> &'static str {
        match self {
            FreeParam::Vx => "Vx",
            FreeParam::Vp => "Vp",
            FreeParam::Q => "Q",
            FreeParam::Nth => "nth",
        }
    }

    fn get(self, p: &ModelParams) -> f64 {
        match self {
            FreeParam::Vx => p.vx,
            FreeParam::Vp => p.vp,
            FreeParam::Q => p.q,
            FreeParam::Nth => p.nth,
        }
    }

    fn set(self, p: &mut ModelParams, v: f64) {
        match self {
            FreeParam::Vx => p.vx = v,
            FreeParam::Vp => p.vp = v,
            FreeParam::Q => p.q = v,
            FreeParam::Nth => p.nth = v,
        }
    }
}

/// Closed search interval. `Vx` has an open lower end at zero, represented
/// by a small positive floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

const VX_FLOOR: f64 = 1e-6;
/// Weight of the squared distance to the feasible set in the internal
/// objective.
const PROJECTION_PENALTY: f64 = 1e4;

/// What to fit and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    /// Values of the fixed parameters, and of the free ones when a fit is
    /// not run.
    pub base: ModelParams,
    pub free: Vec<(FreeParam, Bounds)>,
    pub data: Vec<FitPoint>,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl FitSpec {
    /// Default bounds of each free parameter.
    pub fn default_bounds(p: FreeParam) -> Bounds {
        match p {
            FreeParam::Vx => Bounds { lo: VX_FLOOR, hi: 0.5 },
            FreeParam::Vp => Bounds { lo: 0.5, hi: 5.0 },
            FreeParam::Q => Bounds { lo: 0.0, hi: 1.0 },
            FreeParam::Nth => Bounds { lo: 0.0, hi: 0.5 },
        }
    }

    /// Fixed `R = 0.077`, `etaH = 0.80`, `eta = 0.08`, all four remaining
    /// parameters free.
    pub fn new(data: Vec<FitPoint>) -> Self {
        FitSpec {
            base: ModelParams::reference(),
            free: FreeParam::ALL.iter().map(|&p| (p, Self::default_bounds(p))).collect(),
            data,
            restarts: 20,
            seed: 0,
            max_iter: 4000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return domain("nothing to fit");
        }
        if self.data.len() < self.free.len() {
            return domain(format!("{} data points cannot determine {} parameters", self.data.len(), self.free.len()));
        }
        if self.restarts == 0 {
            return domain("need at least one restart");
        }
        for (p, b) in &self.free {
            if !(b.lo <= b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
                return domain(format!("invalid bounds [{}, {}] for {}", b.lo, b.hi, p.name()));
            }
            if *p == FreeParam::Vx && b.lo <= 0.0 {
                return domain("Vx must stay positive");
            }
        }
        for point in &self.data {
            point.check()?;
        }
        Ok(())
    }

    /// Reads the flat key-value format: model keys set the fixed values and
    /// the defaults for free ones, `<name>_min` / `<name>_max` set bounds,
    /// `fit_<name> = 0` fixes a parameter, and `restarts`, `seed`,
    /// `max_iter` tune the search.
    pub fn from_config_str(text: &str, data: Vec<FitPoint>) -> Result<Self> {
        let mut extra: Vec<String> = ["restarts", "seed", "max_iter"].iter().map(|s| s.to_string()).collect();
        for p in FreeParam::ALL {
            extra.push(format!("{}_min", p.name()));
            extra.push(format!("{}_max", p.name()));
            extra.push(format!("fit_{}", p.name()));
        }
        let extra_refs: Vec<&str> = extra.iter().map(String::as_str).collect();
        let mut spec = FitSpec::new(data);
        spec.base = ModelParams::from_config_str(text, &extra_refs)?;
        let table = parse_flat_config(text)?;
        let as_count = |k: &str, v: f64| -> Result<u64> {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::Config(format!("`{k}` must be a nonnegative integer")));
            }
            Ok(v as u64)
        };
        let mut fixed = Vec::new();
        for (k, v) in &table {
            match k.as_str() {
                "restarts" => spec.restarts = as_count(k, *v)? as usize,
                "seed" => spec.seed = as_count(k, *v)?,
                "max_iter" => spec.max_iter = as_count(k, *v)? as usize,
                _ => {
                    for (p, b) in spec.free.iter_mut() {
                        if *k == format!("{}_min", p.name()) {
                            b.lo = *v;
                        } else if *k == format!("{}_max", p.name()) {
                            b.hi = *v;
                        } else if *k == format!("fit_{}", p.name()) && *v == 0.0 {
                            fixed.push(*p);
                        }
                    }
                }
            }
        }
        spec.free.retain(|(p, _)| !fixed.contains(p));
        Ok(spec)
    }

    fn params_from(&self, x: &[f64]) -> ModelParams {
        let mut p = self.base;
        for ((param, _), v) in self.free.iter().zip(x) {
            param.set(&mut p, *v);
        }
        p
    }

    fn in_bounds(&self, p: &ModelParams) -> bool {
        self.free.iter().all(|(param, b)| b.contains(param.get(p))) && p.vx * p.vp >= 0.25 * (1.0 - 1e-12)
    }

    /// Nearest feasible point: the box clamp, then `Vp` (or else `Vx`)
    /// raised to restore `Vx Vp >= 1/4`.
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.free.iter().zip(x).map(|((_, b), v)| b.clamp(*v)).collect();
        let p = self.params_from(&y);
        if p.vx * p.vp < 0.25 {
            let vx_i = self.free.iter().position(|(q, _)| *q == FreeParam::Vx);
            let vp_i = self.free.iter().position(|(q, _)| *q == FreeParam::Vp);
            if let Some(i) = vp_i {
                y[i] = self.free[i].1.clamp(0.25 / p.vx);
            }
            let p = self.params_from(&y);
            if p.vx * p.vp < 0.25 {
                if let Some(i) = vx_i {
                    y[i] = self.free[i].1.clamp(0.25 / p.vp);
                }
            }
        }
        y
    }

    fn internal_objective(&self, x: &[f64]) -> f64 {
        let y = self.project(x);
        let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        objective(&self.params_from(&y), self) + PROJECTION_PENALTY * dist2
    }
}

/// Sum over the data of the Mahalanobis distance between model and estimate;
/// infinite outside the bounds or for unphysical parameters.
pub fn objective(params: &ModelParams, spec: &FitSpec) -> f64 {
    if !spec.in_bounds(params) {
        return f64::INFINITY;
    }
    let s_grid: Vec<f64> = spec.data.iter().map(|d| d.s).collect();
    match model_trajectory(params, &s_grid) {
        Ok(traj) => traj.iter().zip(&spec.data).map(|(m, d)| d.mahalanobis(m.p0, m.p1)).sum(),
        Err(_) => f64::INFINITY,
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the restart that produced the result.
    pub restart: usize,
}

/// Best of `spec.restarts` Nelder-Mead runs from random starting points.
pub fn fit(spec: &FitSpec) -> Result<FitResult> {
    fit_with(spec, Execution::Sequential)
}

pub fn fit_with(spec: &FitSpec, exec: Execution) -> Result<FitResult> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let starts: Vec<Vec<f64>> = (0..spec.restarts)
        .map(|_| {
            let raw: Vec<f64> = spec.free.iter().map(|(_, b)| rng.random_range(b.lo..=b.hi)).collect();
            spec.project(&raw)
        })
        .collect();
    let steps: Vec<f64> = spec.free.iter().map(|(_, b)| 0.1 * (b.hi - b.lo).max(1e-3)).collect();
    let runs = exec.map_slice(&starts, |x0| nelder_mead(|x| spec.internal_objective(x), x0, &steps, spec.max_iter));
    let mut best: Option<(usize, NmOutcome)> = None;
    for (i, run) in runs.into_iter().enumerate() {
        if best.as_ref().is_none_or(|(_, b)| run.f < b.f) {
            best = Some((i, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    let y = spec.project(&run.x);
    let params = spec.params_from(&y);
    let value = objective(&params, spec);
    if !value.is_finite() {
        return domain("no restart reached a feasible parameter set");
    }
    Ok(FitResult { params, objective: value, iterations: run.iterations, converged: run.converged, restart })
}

#[derive(Debug, Clone)]
struct NmOutcome {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2) stopping when the simplex collapses in both value and size.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], steps: &[f64], max_iter: usize) -> NmOutcome {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect() };
    let mut iterations = 0;
    let mut converged = false;
    order(&mut simplex);
    while iterations < max_iter {
        let (fbest, fworst) = (simplex[0].1, simplex[n].1);
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (fworst - fbest).abs() <= 1e-14 * (1.0 + fbest.abs()) && size <= 1e-10 {
            converged = true;
            break;
        }
        iterations += 1;
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let xr = along(&centroid, &worst, -1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(&centroid, &worst, -2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < fworst {
                let xc = along(&centroid, &xr, 0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(&centroid, &worst, 0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < fworst.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    *x = along(&best, x, 0.5);
                    *fx = f(x);
                }
            }
        }
        order(&mut simplex);
    }
    let (x, fx) = simplex.swap_remove(0);
    NmOutcome { x, f: fx, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(params: &ModelParams, s_grid: &[f64]) -> Vec<FitPoint> {
        model_trajectory(params, s_grid)
            .unwrap()
            .iter()
            .map(|m| FitPoint { s: m.s, p0: m.p0, p1: m.p1, var_p0: 1.2e-4, var_p1: 1.3e-4, cov01: -4e-5 })
            .collect()
    }

    fn grid() -> Vec<f64> {
        (0..=8).map(|i| 0.05 * i as f64).collect()
    }

    #[test]
    fn nelder_mead_minimises_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = nelder_mead(rosen, &[-1.2, 1.0], &[0.1, 0.1], 5000);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn objective_cases() {
        let truth = ModelParams::reference();
        let spec = FitSpec::new(noiseless(&truth, &grid()));
        assert_eq!(objective(&truth, &spec), 0.0);
        let bumped = ModelParams { vx: truth.vx + 0.01, ..truth };
        assert!(objective(&bumped, &spec) > 0.0);
        let outside = ModelParams { q: 1.2, ..truth };
        assert_eq!(objective(&outside, &spec), f64::INFINITY);
        let unphysical = ModelParams { vx: 0.3, vp: 0.6, ..truth };
        assert_eq!(objective(&unphysical, &spec), f64::INFINITY);
        let mut shuffled = spec.clone();
        shuffled.data.reverse();
        shuffled.data.swap(0, 4);
        assert!((objective(&bumped, &shuffled) - objective(&bumped, &spec)).abs() < 1e-9 * objective(&bumped, &spec));
    }

    #[test]
    fn noiseless_round_trip_with_boundary_nth() {
        let truth = ModelParams::reference();
        let spec = FitSpec { seed: 3, ..FitSpec::new(noiseless(&truth, &grid())) };
        let r = fit(&spec).unwrap();
        assert!((r.params.vx - truth.vx).abs() < 1e-4, "{r:?}");
        assert!((r.params.vp - truth.vp).abs() < 1e-4, "{r:?}");
        assert!((r.params.q - truth.q).abs() < 1e-4, "{r:?}");
        assert!(r.params.nth >= 0.0 && r.params.nth < 1e-4, "{r:?}");
        assert!(r.objective >= 0.0);
        assert_eq!(r, fit_with(&spec, Execution::Parallel).unwrap());
    }

    #[test]
    fn validation() {
        let truth = ModelParams::reference();
        assert!(fit(&FitSpec::new(noiseless(&truth, &[0.0, 0.1]))).is_err());
        let mut bad = noiseless(&truth, &grid());
        bad[2].var_p0 = 0.0;
        assert!(fit(&FitSpec::new(bad)).is_err());
    }

    #[test]
    fn config_parsing() {
        let text = "R = 0.077\netaH = 0.8\neta = 0.08\nVx = 0.4\nnth_max = 0.2\nfit_Q = 0\nrestarts = 5\nseed = 9\n";
        let spec = FitSpec::from_config_str(text, vec![]).unwrap();
        assert_eq!(spec.restarts, 5);
        assert_eq!(spec.seed, 9);
        assert!((spec.base.t - 0.923).abs() < 1e-15);
        assert_eq!(spec.base.vx, 0.4);
        assert_eq!(spec.free.len(), 3);
        assert!(spec.free.iter().any(|(p, b)| *p == FreeParam::Nth && b.hi == 0.2));
        assert!(FitSpec::from_config_str("restarts = 2.5\n", vec![]).is_err());
        assert!(FitSpec::from_config_str("bogus = 1\n", vec![]).is_err());
    }
}
