//! Linear pattern-function estimation of `p0(s)`, `p1(s)` and the witness
//! from phase-binned homodyne data, and the maximum-likelihood cross-check
//! in [`ml`].
//!
//! Anti-squeezing by `s` stretches the x quadrature, matching
//! [`crate::gaussian::antisqueeze_state`]. A sample `X` taken at phase
//! `theta` is a sample of the anti-squeezed state at phase `vartheta`,
//! scaled by `1/g`, with
//! `g^2 = e^(-2s) cos^2(theta) + e^(2s) sin^2(theta)` and
//! `tan(vartheta) = e^(2s) tan(theta)`.

pub mod ml;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::homodyne::QuadratureDataset;
use crate::special::{pattern_f0, pattern_f1};
use crate::witness::{optimal_relative_witness_with, SlopeSearch, WitnessParams, WitnessReport};

/// `f_n(x)` for `n` in `{0, 1}`.
pub fn pattern_function(n: usize, x: f64) -> Result<f64> {
    match n {
        0 => Ok(pattern_f0(x)),
        1 => Ok(pattern_f1(x)),
        _ => Err(Error::Domain(format!("pattern functions are provided for n = 0 and 1, got {n}"))),
    }
}

/// Reparametrisation of one phase bin under data anti-squeezing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntiSqueezedSample {
    pub vartheta: f64,
    pub g: f64,
    /// `1/g^2`.
    pub weight: f64,
    pub x_scaled: f64,
}

impl AntiSqueezedSample {
    pub fn new(theta: f64, s: f64, x: f64) -> Self {
        let (vartheta, g) = antisqueeze_map(theta, s);
        AntiSqueezedSample { vartheta, g, weight: 1.0 / (g * g), x_scaled: x / g }
    }
}

/// `(vartheta, g)` for phase `theta`; `s = 0` returns `(theta, 1)` exactly.
pub fn antisqueeze_map(theta: f64, s: f64) -> (f64, f64) {
    if s == 0.0 {
        return (theta, 1.0);
    }
    let (sin, cos) = theta.sin_cos();
    let g = ((-2.0 * s).exp() * cos * cos + (2.0 * s).exp() * sin * sin).sqrt();
    let mut vartheta = ((2.0 * s).exp() * sin).atan2(cos);
    if vartheta <= 0.0 {
        vartheta += std::f64::consts::PI;
    }
    (vartheta, g)
}

/// Estimated `p0(s)`, `p1(s)` with the covariance of the two estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonStats {
    pub p0: f64,
    pub p1: f64,
    pub var_p0: f64,
    pub var_p1: f64,
    pub cov01: f64,
    pub s: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl PhotonStats {
    pub fn cov(&self) -> [[f64; 2]; 2] {
        [[self.var_p0, self.cov01], [self.cov01, self.var_p1]]
    }

    pub fn std_p0(&self) -> f64 {
        self.var_p0.sqrt()
    }

    pub fn std_p1(&self) -> f64 {
        self.var_p1.sqrt()
    }
}

/// Per-bin sums of a set of pattern-function values.
#[derive(Debug, Clone, Copy, Default)]
struct BinSums {
    m: f64,
    s0: f64,
    s1: f64,
    s00: f64,
    s11: f64,
    s01: f64,
}

impl BinSums {
    fn mean(&self, sum: f64) -> f64 {
        sum / self.m
    }

    /// `V_k = (1/M^2) sum f g - (1/M^3) sum f sum g`.
    fn var(&self, sum_fg: f64, sum_f: f64, sum_g: f64) -> f64 {
        sum_fg / (self.m * self.m) - sum_f * sum_g / (self.m * self.m * self.m)
    }
}

fn bin_sums(dataset: &QuadratureDataset, s: f64, exec: Execution, f: impl Fn(f64) -> (f64, f64) + Sync) -> Result<Vec<BinSums>> {
    dataset.check_nonempty_bins()?;
    Ok(exec.map_slice(&dataset.bins, |bin| {
        let (_, g) = antisqueeze_map(bin.theta, s);
        let w = 1.0 / (g * g);
        let mut acc = BinSums { m: bin.samples.len() as f64, ..Default::default() };
        for &x in &bin.samples {
            let (a, b) = f(x / g);
            let (a, b) = (w * a, w * b);
            acc.s0 += a;
            acc.s1 += b;
            acc.s00 += a * a;
            acc.s11 += b * b;
            acc.s01 += a * b;
        }
        acc
    }))
}

/// Pattern-function estimate of `(p0, p1)` without anti-squeezing.
pub fn estimate_pn(dataset: &QuadratureDataset) -> Result<PhotonStats> {
    estimate_pn_antisqueezed(dataset, 0.0)
}

/// Pattern-function estimate of `(p0(s), p1(s))`, averaging
/// `(1/g_k^2) f_n(X/g_k)` over samples and bins.
pub fn estimate_pn_antisqueezed(dataset: &QuadratureDataset, s: f64) -> Result<PhotonStats> {
    estimate_pn_antisqueezed_with(dataset, s, Execution::Sequential)
}

pub fn estimate_pn_antisqueezed_with(dataset: &QuadratureDataset, s: f64, exec: Execution) -> Result<PhotonStats> {
    let sums = bin_sums(dataset, s, exec, |x| (pattern_f0(x), pattern_f1(x)))?;
    let k = sums.len() as f64;
    let mut st = PhotonStats { p0: 0.0, p1: 0.0, var_p0: 0.0, var_p1: 0.0, cov01: 0.0, s, n: dataset.len() };
    for b in &sums {
        st.p0 += b.mean(b.s0);
        st.p1 += b.mean(b.s1);
        st.var_p0 += b.var(b.s00, b.s0, b.s0);
        st.var_p1 += b.var(b.s11, b.s1, b.s1);
        st.cov01 += b.var(b.s01, b.s0, b.s1);
    }
    st.p0 /= k;
    st.p1 /= k;
    st.var_p0 = (st.var_p0 / (k * k)).max(0.0);
    st.var_p1 = (st.var_p1 / (k * k)).max(0.0);
    st.cov01 /= k * k;
    Ok(st)
}

/// Witness `W(a, s)` estimated with the single pattern function
/// `f_W = a f0 + f1`, so that `deltaW` includes the `p0`-`p1` correlation.
pub fn estimate_witness(dataset: &QuadratureDataset, a: f64, s: f64) -> Result<WitnessReport> {
    estimate_witness_with(dataset, a, s, Execution::Sequential)
}

pub fn estimate_witness_with(dataset: &QuadratureDataset, a: f64, s: f64, exec: Execution) -> Result<WitnessReport> {
    let params = WitnessParams::new(a, s)?;
    let stats = estimate_pn_antisqueezed_with(dataset, s, exec)?;
    let sums = bin_sums(dataset, s, exec, |x| (a * pattern_f0(x) + pattern_f1(x), 0.0))?;
    let k = sums.len() as f64;
    let (mut w, mut var) = (0.0, 0.0);
    for b in &sums {
        w += b.mean(b.s0);
        var += b.var(b.s00, b.s0, b.s0);
    }
    w /= k;
    let delta_w = (var / (k * k)).max(0.0).sqrt();
    WitnessReport::with_witness(params, stats.p0, stats.p1, stats.cov(), w, delta_w)
}

/// Witness reports at the optimal slope for each anti-squeezing value, and
/// the index of the one with the largest `W_R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessScan {
    pub reports: Vec<WitnessReport>,
    pub best: usize,
}

impl WitnessScan {
    pub fn best_report(&self) -> &WitnessReport {
        &self.reports[self.best]
    }
}

/// Optimises the slope `a` at every `s` of the grid.
pub fn scan_witness(dataset: &QuadratureDataset, s_grid: &[f64]) -> Result<WitnessScan> {
    scan_witness_with(dataset, s_grid, &SlopeSearch::default(), Execution::Sequential)
}

pub fn scan_witness_with(
    dataset: &QuadratureDataset,
    s_grid: &[f64],
    search: &SlopeSearch,
    exec: Execution,
) -> Result<WitnessScan> {
    if s_grid.is_empty() {
        return Err(Error::Domain("anti-squeezing grid is empty".into()));
    }
    let reports = exec
        .map_slice(s_grid, |&s| {
            let st = estimate_pn_antisqueezed(dataset, s)?;
            let (a, _) = optimal_relative_witness_with(st.p0, st.p1, &st.cov(), search, Execution::Sequential)?;
            estimate_witness(dataset, a, s)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.wr > reports[best].wr {
            best = i;
        }
    }
    Ok(WitnessScan { reports, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{antisqueeze_state, photon_probs, ConditionalState, CovMat2, ModelParams};
    use crate::homodyne::{generate_dataset, PhaseBin};
    use crate::special::GaussLegendre;
    use std::f64::consts::PI;

    fn dataset(bins: &[(f64, &[f64])]) -> QuadratureDataset {
        QuadratureDataset {
            bins: bins
                .iter()
                .enumerate()
                .map(|(i, (theta, xs))| PhaseBin { index: i + 1, theta: *theta, samples: xs.to_vec() })
                .collect(),
            seed: None,
        }
    }

    #[test]
    fn pattern_function_dispatch() {
        assert_eq!(pattern_function(0, 0.0).unwrap(), 2.0);
        assert_eq!(pattern_function(1, 0.0).unwrap(), -2.0);
        assert!(pattern_function(2, 0.0).is_err());
    }

    #[test]
    fn antisqueeze_map_cases() {
        for theta in [0.1, 1.0, PI / 2.0, 2.5, PI] {
            assert_eq!(antisqueeze_map(theta, 0.0), (theta, 1.0));
        }
        let s = 0.3;
        assert!((antisqueeze_map(1e-9, s).1 - (-s as f64).exp()).abs() < 1e-12);
        assert!((antisqueeze_map(PI / 2.0, s).1 - s.exp()).abs() < 1e-12);
        assert!((antisqueeze_map(PI / 2.0, s).0 - PI / 2.0).abs() < 1e-12);
        // continuous and increasing over (0, pi]
        let mut last = 0.0;
        for i in 1..=400 {
            let (v, _) = antisqueeze_map(i as f64 * PI / 400.0, s);
            assert!(v > last && v <= PI);
            last = v;
        }
    }

    #[test]
    fn weight_integrates_to_pi() {
        let gl = GaussLegendre::new(40);
        for s in [-0.7, 0.15, 0.4, 1.0] {
            let mut total = 0.0;
            for cell in 0..20 {
                let a = cell as f64 * PI / 20.0;
                total += gl.integrate(a, a + PI / 20.0, |t| {
                    let (_, g) = antisqueeze_map(t, s);
                    1.0 / (g * g)
                });
            }
            assert!((total - PI).abs() < 1e-8, "s={s}: {total}");
        }
    }

    #[test]
    fn hand_computed_estimate() {
        let ds = dataset(&[(PI / 2.0, &[0.0, 1.0]), (PI, &[0.3])]);
        let st = estimate_pn(&ds).unwrap();
        let f0 = [pattern_f0(0.0), pattern_f0(1.0), pattern_f0(0.3)];
        let want = 0.5 * (0.5 * (f0[0] + f0[1]) + f0[2]);
        assert!((st.p0 - want).abs() < 1e-15);
        let v1 = (f0[0] * f0[0] + f0[1] * f0[1]) / 4.0 - (f0[0] + f0[1]).powi(2) / 8.0;
        assert!((st.var_p0 - v1 / 4.0).abs() < 1e-15);
        assert_eq!(st.n, 3);
    }

    #[test]
    fn empty_bin_is_an_error() {
        let ds = dataset(&[(PI / 2.0, &[0.0]), (PI, &[])]);
        assert!(matches!(estimate_pn(&ds), Err(Error::EmptyBin { bin: 2 })));
    }

    #[test]
    fn zero_antisqueezing_is_bit_identical() {
        let st = ConditionalState::from_params(&ModelParams::reference()).unwrap();
        let ds = generate_dataset(&st, 10, 50, 3).unwrap();
        assert_eq!(estimate_pn(&ds).unwrap(), estimate_pn_antisqueezed(&ds, 0.0).unwrap());
        let par = estimate_pn_antisqueezed_with(&ds, 0.2, Execution::Parallel).unwrap();
        assert_eq!(par, estimate_pn_antisqueezed(&ds, 0.2).unwrap());
    }

    #[test]
    fn vacuum_calibration() {
        let st = ConditionalState::gaussian(CovMat2::IDENTITY);
        let ds = generate_dataset(&st, 20, 5000, 9).unwrap();
        let e = estimate_pn(&ds).unwrap();
        assert!((e.p0 - 1.0).abs() < 3.0 * e.std_p0(), "{e:?}");
        assert!(e.p1.abs() < 3.0 * e.std_p1(), "{e:?}");
    }

    #[test]
    fn witness_linearity_identities() {
        let st = ConditionalState::from_params(&ModelParams::reference()).unwrap();
        let ds = generate_dataset(&st, 40, 200, 1).unwrap();
        for (a, s) in [(0.0, 0.0), (0.7, 0.15), (-2.0, 0.3)] {
            let rep = estimate_witness(&ds, a, s).unwrap();
            let stats = estimate_pn_antisqueezed(&ds, s).unwrap();
            assert!((rep.w - (a * stats.p0 + stats.p1)).abs() < 1e-12);
            let dw = (a * a * stats.var_p0 + 2.0 * a * stats.cov01 + stats.var_p1).sqrt();
            assert!((rep.delta_w - dw).abs() < 1e-12);
            if a == 0.0 {
                assert!((rep.w - stats.p1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scan_at_zero_reduces_to_plain_witness() {
        let st = ConditionalState::from_params(&ModelParams::reference()).unwrap();
        let ds = generate_dataset(&st, 40, 200, 2).unwrap();
        let scan = scan_witness(&ds, &[0.0]).unwrap();
        assert_eq!(scan.best, 0);
        let r = scan.best_report();
        assert_eq!(r.params.s, 0.0);
        let plain = estimate_witness(&ds, r.params.a, 0.0).unwrap();
        assert_eq!(&plain, r);
    }

    #[test]
    fn large_sample_matches_model_under_antisqueezing() {
        let st = ConditionalState::from_params(&ModelParams::reference()).unwrap();
        let ds = generate_dataset(&st, 40, 5000, 4).unwrap();
        for s in [0.15, 0.3] {
            let e = estimate_pn_antisqueezed(&ds, s).unwrap();
            let (p0, p1) = photon_probs(&antisqueeze_state(&st, s)).unwrap();
            assert!((e.p0 - p0).abs() < 4.0 * e.std_p0(), "s={s} p0 {} vs {p0}", e.p0);
            assert!((e.p1 - p1).abs() < 4.0 * e.std_p1(), "s={s} p1 {} vs {p1}", e.p1);
        }
    }
}
