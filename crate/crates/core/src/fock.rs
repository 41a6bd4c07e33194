//! Truncated Fock-space engine used as an independent check of the
//! covariance-matrix model, and for the loss-threshold analysis of squeezed
//! single photons.
//!
//! Every state in scope has real Fock amplitudes, so a mixed state is kept as
//! an ensemble of weighted pure branches (a Kraus decomposition). The
//! squeezing operator is `S(r) = exp[(r/2)(a^2 - a^dag^2)]`, which squeezes
//! the x quadrature; anti-squeezing by `s` evaluates
//! `p_n(s) = <n| S^dag(s) rho S(s) |n>`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::witness::{gaussian_margin, golden_max};

/// Default truncation, doubled until the tail mass is below [`TAIL_BOUND`].
pub const DEFAULT_N_MAX: usize = 60;
pub const TAIL_BOUND: f64 = 1e-10;
const MAX_N_MAX: usize = 8192;

/// A pure component of a Fock-diagonalisable ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub weight: f64,
    pub amplitudes: Vec<f64>,
}

/// Ensemble of weighted pure states over `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockState {
    pub branches: Vec<Branch>,
    pub n_max: usize,
    /// Declared bound on the probability mass lost to truncation.
    pub tail: f64,
}

impl FockState {
    pub fn pure(amplitudes: Vec<f64>, tail: f64) -> Self {
        let n_max = amplitudes.len().saturating_sub(1);
        FockState { branches: vec![Branch { weight: 1.0, amplitudes }], n_max, tail }
    }

    pub fn is_pure(&self) -> bool {
        self.branches.len() == 1
    }

    /// Diagonal `p_n`, `n = 0..=n_max`.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n_max + 1];
        for b in &self.branches {
            for (pn, c) in p.iter_mut().zip(&b.amplitudes) {
                *pn += b.weight * c * c;
            }
        }
        p
    }

    pub fn norm(&self) -> f64 {
        self.probabilities().iter().sum()
    }

    /// `(p0(s), p1(s))` in the basis of squeezed Fock states `S(s)|n>`.
    pub fn antisqueezed_p01(&self, s: f64) -> (f64, f64) {
        let len = self.n_max + 1;
        let col0 = squeeze_column(s, 0, len);
        let col1 = squeeze_column(s, 1, len);
        let mut p = (0.0, 0.0);
        for b in &self.branches {
            let d0: f64 = b.amplitudes.iter().zip(&col0).map(|(a, c)| a * c).sum();
            let d1: f64 = b.amplitudes.iter().zip(&col1).map(|(a, c)| a * c).sum();
            p.0 += b.weight * d0 * d0;
            p.1 += b.weight * d1 * d1;
        }
        p
    }
}

/// Column `n` (0 or 1) of the squeeze matrix, `<m| S(r) |n>` for
/// `m = 0..len`, from the two-step recursion
/// `c_{m+2} = -tanh(r) sqrt((m+1)(m+2)) / (m+2-n) c_m`.
pub fn squeeze_column(r: f64, n: usize, len: usize) -> Vec<f64> {
    assert!(n <= 1, "only the n = 0 and n = 1 columns are supported");
    let mut col = vec![0.0; len];
    if len <= n {
        return col;
    }
    let sech = 1.0 / r.cosh();
    let t = -r.tanh();
    col[n] = if n == 0 { sech.sqrt() } else { sech.powf(1.5) };
    let mut m = n;
    while m + 2 < len {
        col[m + 2] = col[m] * t * column_ratio(m, n);
        m += 2;
    }
    col
}

fn column_ratio(m: usize, n: usize) -> f64 {
    (((m + 1) * (m + 2)) as f64).sqrt() / (m + 2 - n) as f64
}

fn check_squeezing(r: f64) -> Result<()> {
    if !r.is_finite() || r < 0.0 {
        return domain(format!("squeezing must be finite and >= 0, got {r}"));
    }
    Ok(())
}

/// `S(r)|n>` truncated at `n_max`, failing if the discarded mass exceeds
/// [`TAIL_BOUND`].
pub fn squeezed_fock(r: f64, n: usize, n_max: usize) -> Result<FockState> {
    check_squeezing(r)?;
    if n > 1 {
        return domain("squeezed Fock states are provided for n = 0 and n = 1");
    }
    let col = squeeze_column(r, n, n_max + 1);
    let tail = tail_mass(&col, r);
    if tail > TAIL_BOUND {
        return Err(Error::Truncation { n_max, tail });
    }
    Ok(FockState::pure(col, tail))
}

/// Mass of the column beyond its truncation, summed forward from the cut
/// rather than by subtraction from one.
fn tail_mass(col: &[f64], r: f64) -> f64 {
    let Some(mut m) = col.iter().rposition(|c| *c != 0.0) else {
        return 1.0;
    };
    let t = -r.tanh();
    let n = m % 2;
    let mut c = col[m];
    let mut tail = 0.0;
    loop {
        c *= t * column_ratio(m, n);
        m += 2;
        let add = c * c;
        tail += add;
        if add <= 1e-18 * tail || add == 0.0 {
            break;
        }
    }
    tail
}

/// `S(r)|n>` with the truncation doubled from [`DEFAULT_N_MAX`] until the
/// tail bound holds.
pub fn squeezed_fock_auto(r: f64, n: usize) -> Result<FockState> {
    let mut n_max = DEFAULT_N_MAX;
    loop {
        match squeezed_fock(r, n, n_max) {
            Err(Error::Truncation { .. }) if n_max < MAX_N_MAX => n_max *= 2,
            other => return other,
        }
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for k in 1..=n {
        out.push(out[k - 1] + (k as f64).ln());
    }
    out
}

/// Beam-splitter branches: for each number `k` of photons lost to the
/// second port, the unnormalised amplitudes
/// `phi_k[m] = c_{m+k} sqrt(C(m+k, k)) t^{m/2} (1-t)^{k/2}`.
fn split(amps: &[f64], t: f64) -> Vec<Vec<f64>> {
    let len = amps.len();
    let lf = ln_factorials(len);
    let (lt, lr) = (t.ln(), (1.0 - t).ln());
    (0..len)
        .map(|k| {
            (0..len - k)
                .map(|m| {
                    let c = amps[m + k];
                    if c == 0.0 {
                        return 0.0;
                    }
                    let mut ln = 0.5 * (lf[m + k] - lf[m] - lf[k]);
                    if m > 0 {
                        ln += 0.5 * m as f64 * lt;
                    }
                    if k > 0 {
                        ln += 0.5 * k as f64 * lr;
                    }
                    c * ln.exp()
                })
                .collect()
        })
        .collect()
}

/// Pure-loss channel with transmittance `eta` applied to every branch.
pub fn apply_loss(state: &FockState, eta: f64) -> Result<FockState> {
    if !(0.0..=1.0).contains(&eta) {
        return domain(format!("transmittance must lie in [0, 1], got {eta}"));
    }
    if eta == 1.0 {
        return Ok(state.clone());
    }
    let mut branches = Vec::new();
    if eta == 0.0 {
        let mut vac = vec![0.0; state.n_max + 1];
        vac[0] = 1.0;
        branches.push(Branch { weight: state.norm(), amplitudes: vac });
    } else {
        for b in &state.branches {
            for mut phi in split(&b.amplitudes, eta) {
                phi.resize(state.n_max + 1, 0.0);
                let w: f64 = phi.iter().map(|c| c * c).sum();
                if w > 0.0 {
                    let scale = 1.0 / w.sqrt();
                    phi.iter_mut().for_each(|c| *c *= scale);
                    branches.push(Branch { weight: b.weight * w, amplitudes: phi });
                }
            }
        }
    }
    Ok(FockState { branches, n_max: state.n_max, tail: state.tail })
}

/// Loss acting on a diagonal distribution,
/// `p'_m = sum_{n>=m} p_n C(n,m) eta^m (1-eta)^(n-m)`.
pub fn damp_probabilities(p: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&eta) {
        return domain(format!("transmittance must lie in [0, 1], got {eta}"));
    }
    let len = p.len();
    let lf = ln_factorials(len);
    let mut out = vec![0.0; len];
    for (n, &pn) in p.iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        for (m, o) in out.iter_mut().enumerate().take(n + 1) {
            let k = n - m;
            let w = if eta == 0.0 {
                if m == 0 { 1.0 } else { 0.0 }
            } else if eta == 1.0 {
                if k == 0 { 1.0 } else { 0.0 }
            } else {
                (lf[n] - lf[m] - lf[k] + m as f64 * eta.ln() + k as f64 * (1.0 - eta).ln()).exp()
            };
            *o += pn * w;
        }
    }
    Ok(out)
}

/// Heralded state of the transmitted mode after splitting `S(r)|0>` on a
/// beam splitter of transmittance `t` and detecting at least one photon in
/// the reflected mode with an ideal on/off detector.
pub fn subtract_photon(r: f64, t: f64, n_max: usize) -> Result<FockState> {
    check_squeezing(r)?;
    if !(t > 0.0 && t < 1.0) {
        return domain(format!("beam-splitter transmittance must lie in (0, 1), got {t}"));
    }
    let input = squeezed_fock(r, 0, n_max)?;
    let amps = &input.branches[0].amplitudes;
    let mut branches = Vec::new();
    let mut click = 0.0;
    for (k, mut phi) in split(amps, t).into_iter().enumerate() {
        if k == 0 {
            continue;
        }
        let w: f64 = phi.iter().map(|c| c * c).sum();
        if w > 0.0 {
            click += w;
            let scale = 1.0 / w.sqrt();
            phi.iter_mut().for_each(|c| *c *= scale);
            phi.resize(n_max + 1, 0.0);
            branches.push(Branch { weight: w, amplitudes: phi });
        }
    }
    if click < 1e-14 {
        return Err(Error::ZeroHeralding { p0prime: 1.0 - click });
    }
    for b in &mut branches {
        b.weight /= click;
    }
    Ok(FockState { branches, n_max, tail: input.tail / click })
}

/// [`subtract_photon`] with automatic truncation.
pub fn subtract_photon_auto(r: f64, t: f64) -> Result<FockState> {
    let mut n_max = DEFAULT_N_MAX;
    loop {
        match subtract_photon(r, t, n_max) {
            Err(Error::Truncation { .. }) if n_max < MAX_N_MAX => n_max *= 2,
            other => return other,
        }
    }
}

/// One point `(eta, p0, p1)` of a loss trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub eta: f64,
    pub p0: f64,
    pub p1: f64,
}

/// `(p0, p1)` of the squeezed single photon `S(r)|1>` after loss `eta`.
pub fn loss_trajectory(r: f64, eta_grid: &[f64]) -> Result<Vec<LossPoint>> {
    let state = squeezed_fock_auto(r, 1)?;
    loss_trajectory_from(&state, eta_grid)
}

pub fn loss_trajectory_from(state: &FockState, eta_grid: &[f64]) -> Result<Vec<LossPoint>> {
    let p = state.probabilities();
    eta_grid
        .iter()
        .map(|&eta| {
            let q = damp_probabilities(&p, eta)?;
            Ok(LossPoint { eta, p0: q[0], p1: q.get(1).copied().unwrap_or(0.0) })
        })
        .collect()
}

/// `(p0(s), p1(s))` of the lossy squeezed single photon along an
/// anti-squeezing grid.
pub fn antisqueeze_trajectory(r: f64, eta: f64, s_grid: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let lossy = apply_loss(&squeezed_fock_auto(r, 1)?, eta)?;
    Ok(s_grid
        .iter()
        .map(|&s| {
            let (p0, p1) = lossy.antisqueezed_p01(s);
            (s, p0, p1)
        })
        .collect())
}

/// Search settings for [`threshold_transmittance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSearch {
    /// Coarse transmittance grid used to bracket the crossing.
    pub eta_grid_points: usize,
    /// Bisection tolerance on `eta`.
    pub eta_tol: f64,
    /// Anti-squeezing search interval `[0, s_max]`.
    pub s_max: f64,
    pub s_grid_points: usize,
}

impl Default for ThresholdSearch {
    fn default() -> Self {
        ThresholdSearch { eta_grid_points: 41, eta_tol: 1e-4, s_max: 2.0, s_grid_points: 41 }
    }
}

/// Height above the Gaussian boundary of the lossy squeezed photon, with or
/// without optimisation over anti-squeezing `s in [0, s_max]`. Returns the
/// margin and the optimal `s`.
pub fn boundary_margin(pure: &FockState, eta: f64, with_antisqueezing: bool, search: &ThresholdSearch) -> Result<(f64, f64)> {
    let lossy = apply_loss(pure, eta)?;
    let margin_at = |s: f64| {
        let (p0, p1) = lossy.antisqueezed_p01(s);
        gaussian_margin(p0, p1)
    };
    if !with_antisqueezing {
        return Ok((margin_at(0.0), 0.0));
    }
    let n = search.s_grid_points.max(3);
    let step = search.s_max / (n - 1) as f64;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..n {
        let v = margin_at(i as f64 * step);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = best_i.saturating_sub(1) as f64 * step;
    let hi = ((best_i + 1).min(n - 1)) as f64 * step;
    let (s_ref, v_ref) = golden_max(margin_at, lo, hi, 1e-9);
    Ok(if v_ref > best { (v_ref, s_ref) } else { (best, best_i as f64 * step) })
}

/// Smallest transmittance at which the lossy squeezed single photon
/// `L_eta(S(r)|1><1|S^dag(r))` lies strictly above the Gaussian boundary,
/// optionally after optimal anti-squeezing.
pub fn threshold_transmittance(r: f64, with_antisqueezing: bool) -> Result<f64> {
    threshold_transmittance_with(r, with_antisqueezing, &ThresholdSearch::default())
}

pub fn threshold_transmittance_with(r: f64, with_antisqueezing: bool, search: &ThresholdSearch) -> Result<f64> {
    check_squeezing(r)?;
    if r == 0.0 {
        return domain("threshold requires r > 0");
    }
    let pure = squeezed_fock_auto(r, 1)?;
    let detected = |eta: f64| -> Result<bool> { Ok(boundary_margin(&pure, eta, with_antisqueezing, search)?.0 > 0.0) };
    let n = search.eta_grid_points.max(2);
    // Walk down from eta = 1 to the last grid point that is still detected.
    let mut hi = 1.0;
    if !detected(hi)? {
        return Err(Error::NotFound(format!("r = {r}: not detected even without loss")));
    }
    let mut lo = 0.0;
    for i in (0..n - 1).rev() {
        let eta = i as f64 / (n - 1) as f64;
        if eta > 0.0 && detected(eta)? {
            hi = eta;
        } else {
            lo = eta;
            break;
        }
    }
    while hi - lo > search.eta_tol {
        let mid = 0.5 * (lo + hi);
        if detected(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// One row of the threshold curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub r: f64,
    pub eta_th: f64,
    pub eta_th_s: f64,
}

pub fn threshold_curve(r_grid: &[f64], exec: Execution) -> Result<Vec<ThresholdPoint>> {
    exec.map_slice(r_grid, |&r| {
        Ok(ThresholdPoint {
            r,
            eta_th: threshold_transmittance(r, false)?,
            eta_th_s: threshold_transmittance(r, true)?,
        })
    })
    .into_iter()
    .collect()
}
