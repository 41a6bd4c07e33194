//! Maximum-likelihood estimation of the photon-number distribution from the
//! phase-averaged quadrature histogram, by expectation maximisation.

use serde::{Deserialize, Serialize};

use super::antisqueeze_map;
use crate::error::{domain, Error, Result};
use crate::homodyne::QuadratureDataset;
use crate::special::{hermite_functions, hermite_upper_tails, GaussLegendre};

/// Histogram bins `j = round(x / dx)` for `j` between `round(x_min/dx)` and
/// `round(x_max/dx)`, each covering `[(j - 1/2) dx, (j + 1/2) dx]`, plus one
/// overflow bin on each side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub dx: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for Binning {
    fn default() -> Self {
        Binning { dx: 0.1, x_min: -6.0, x_max: 6.0 }
    }
}

impl Binning {
    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dx.is_finite()) || !(self.x_min < self.x_max) {
            return domain(format!("invalid binning dx={} range [{}, {}]", self.dx, self.x_min, self.x_max));
        }
        Ok(())
    }

    fn j_range(&self) -> (i64, i64) {
        ((self.x_min / self.dx).round() as i64, (self.x_max / self.dx).round() as i64)
    }

    /// Number of bins including the two overflow bins.
    pub fn len(&self) -> usize {
        let (lo, hi) = self.j_range();
        (hi - lo + 3) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Storage index of the bin holding `x`: 0 is the lower overflow bin,
    /// `len() - 1` the upper one.
    pub fn index(&self, x: f64) -> usize {
        let (lo, hi) = self.j_range();
        let j = (x / self.dx).round();
        if j < lo as f64 {
            0
        } else if j > hi as f64 {
            self.len() - 1
        } else {
            (j as i64 - lo + 1) as usize
        }
    }

    /// Interval `[a, b]` of storage index `i`, infinite for overflow bins.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let (lo, hi) = self.j_range();
        let lower = (lo as f64 - 0.5) * self.dx;
        let upper = (hi as f64 + 0.5) * self.dx;
        if i == 0 {
            (f64::NEG_INFINITY, lower)
        } else if i == self.len() - 1 {
            (upper, f64::INFINITY)
        } else {
            let j = (i as i64 - 1 + lo) as f64;
            ((j - 0.5) * self.dx, (j + 0.5) * self.dx)
        }
    }
}

/// Weighted histogram counters `C_j` and the POVM matrix `Pi_{j,n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPOVM {
    pub binning: Binning,
    pub counters: Vec<f64>,
    pub n_max: usize,
    /// Row-major `Pi[j][n]`.
    pub povm: Vec<Vec<f64>>,
}

/// Phase-averaged histogram of `X/g_k` with weights `1/(g_k^2 M_k)`.
pub fn build_histogram(dataset: &QuadratureDataset, s: f64, binning: &Binning) -> Result<Vec<f64>> {
    binning.validate()?;
    dataset.check_nonempty_bins()?;
    let mut c = vec![0.0; binning.len()];
    for bin in &dataset.bins {
        let (_, g) = antisqueeze_map(bin.theta, s);
        let w = 1.0 / (g * g * bin.samples.len() as f64);
        for &x in &bin.samples {
            c[binning.index(x / g)] += w;
        }
    }
    Ok(c)
}

const GL_ORDER: usize = 16;
const POVM_TOL: f64 = 1e-10;

fn integrate_bin(gl: &GaussLegendre, a: f64, b: f64, n_max: usize, psi: &mut Vec<f64>) -> Vec<f64> {
    let mut once = vec![0.0; n_max + 1];
    let mut eval = |lo: f64, hi: f64, acc: &mut [f64]| {
        gl.integrate_into(lo, hi, acc, |x, out| {
            hermite_functions(x, n_max, psi);
            for (o, p) in out.iter_mut().zip(psi.iter()) {
                *o = p * p;
            }
        });
    };
    eval(a, b, &mut once);
    let mut pieces = 1;
    loop {
        pieces *= 2;
        let mut refined = vec![0.0; n_max + 1];
        let h = (b - a) / pieces as f64;
        for p in 0..pieces {
            let lo = a + p as f64 * h;
            eval(lo, lo + h, &mut refined);
        }
        let diff = once.iter().zip(&refined).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        once = refined;
        if diff < POVM_TOL || pieces >= 1 << 12 {
            return once;
        }
    }
}

/// `Pi_{j,n} = int_bin |psi_n(x)|^2 dx` for `n = 0..=n_max`.
pub fn povm_elements(binning: &Binning, n_max: usize) -> Result<Vec<Vec<f64>>> {
    binning.validate()?;
    if n_max < 1 {
        return domain("n_max must be at least 1");
    }
    let gl = GaussLegendre::new(GL_ORDER);
    let mut psi = Vec::with_capacity(n_max + 1);
    let len = binning.len();
    let mut rows = Vec::with_capacity(len);
    for i in 0..len {
        let (a, b) = binning.interval(i);
        let row = if a == f64::NEG_INFINITY {
            // |psi_n|^2 is even
            hermite_upper_tails(-b, n_max)
        } else if b == f64::INFINITY {
            hermite_upper_tails(a, n_max)
        } else {
            integrate_bin(&gl, a, b, n_max, &mut psi)
        };
        rows.push(row.into_iter().map(|v| v.max(0.0)).collect());
    }
    Ok(rows)
}

impl HistogramPOVM {
    pub fn new(dataset: &QuadratureDataset, s: f64, binning: Binning, n_max: usize) -> Result<Self> {
        let counters = build_histogram(dataset, s, &binning)?;
        let povm = povm_elements(&binning, n_max)?;
        Ok(HistogramPOVM { binning, counters, n_max, povm })
    }
}

/// Starting distribution for the EM iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum EmInit {
    #[default]
    Uniform,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop once the log-likelihood gain of an iteration falls below this.
    pub tol: f64,
    pub init: EmInit,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions { max_iter: 200_000, tol: 1e-13, init: EmInit::Uniform }
    }
}

/// Largest tolerated log-likelihood decrease per EM step.
pub const MONOTONE_TOL: f64 = 1e-12;
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLResult {
    pub p: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Smallest per-iteration change of the log-likelihood.
    pub min_gain: f64,
    /// Set when some `P_j` with `C_j > 0` had to be floored.
    pub floored: bool,
}

impl MLResult {
    pub fn monotone(&self) -> bool {
        self.min_gain >= -MONOTONE_TOL
    }
}

fn likelihood_terms(counters: &[f64], povm: &[Vec<f64>], p: &[f64], pj: &mut [f64], floored: &mut bool) -> f64 {
    let mut ll = 0.0;
    for ((c, row), out) in counters.iter().zip(povm).zip(pj.iter_mut()) {
        let mut v: f64 = row.iter().zip(p).map(|(a, b)| a * b).sum();
        if *c > 0.0 {
            if v <= 0.0 {
                v = PROB_FLOOR;
                *floored = true;
            }
            ll += c * v.ln();
        }
        *out = v;
    }
    ll
}

/// Expectation-maximisation for `p_n`, `n = 0..=n_max`.
pub fn em_estimate(counters: &[f64], povm: &[Vec<f64>], n_max: usize, opts: &EmOptions) -> Result<MLResult> {
    if counters.len() != povm.len() || povm.iter().any(|r| r.len() != n_max + 1) {
        return domain("histogram and POVM dimensions disagree");
    }
    if counters.iter().any(|c| !(*c >= 0.0)) {
        return domain("histogram counters must be nonnegative");
    }
    let total: f64 = counters.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyDataset);
    }
    let mut p = match &opts.init {
        EmInit::Uniform => vec![1.0 / (n_max + 1) as f64; n_max + 1],
        EmInit::Given(v) => {
            if v.len() != n_max + 1 || v.iter().any(|x| !(*x > 0.0)) {
                return domain("initial distribution must be strictly positive with n_max + 1 entries");
            }
            let norm: f64 = v.iter().sum();
            v.iter().map(|x| x / norm).collect()
        }
    };
    let mut pj = vec![0.0; counters.len()];
    let mut floored = false;
    let mut ll = likelihood_terms(counters, povm, &p, &mut pj, &mut floored);
    let mut min_gain = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut r = vec![0.0; n_max + 1];
    while iterations < opts.max_iter {
        iterations += 1;
        r.iter_mut().for_each(|x| *x = 0.0);
        for ((c, row), v) in counters.iter().zip(povm).zip(&pj) {
            if *c > 0.0 {
                let w = c / v;
                for (rn, pin) in r.iter_mut().zip(row) {
                    *rn += w * pin;
                }
            }
        }
        for (pn, rn) in p.iter_mut().zip(&r) {
            *pn *= rn / total;
        }
        let norm: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= norm);
        let next = likelihood_terms(counters, povm, &p, &mut pj, &mut floored);
        let gain = next - ll;
        min_gain = min_gain.min(gain);
        ll = next;
        if gain.abs() < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(MLResult { p, log_likelihood: ll, iterations, converged, min_gain, floored })
}

/// Histogram, POVM and EM in one call.
pub fn ml_estimate(dataset: &QuadratureDataset, s: f64, binning: Binning, n_max: usize, opts: &EmOptions) -> Result<MLResult> {
    let h = HistogramPOVM::new(dataset, s, binning, n_max)?;
    em_estimate(&h.counters, &h.povm, n_max, opts)
}
