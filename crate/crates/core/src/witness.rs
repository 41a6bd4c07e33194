//! Gaussian and coherent-state boundaries in the `(p0, p1)` plane, the linear
//! witness `W(a) = a p0 + p1`, its Gaussian and classical bounds, and the
//! search for the witness slope with the largest statistical significance.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Execution;

/// A point on one of the boundary curves, tagged with its curve parameter
/// (squeezing `r` for the Gaussian curve, mean photon number for the
/// coherent one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub r: f64,
    pub p0: f64,
    pub p1: f64,
}

/// Witness slope `a < 1` and the anti-squeezing `s` it is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessParams {
    pub a: f64,
    pub s: f64,
}

impl WitnessParams {
    pub fn new(a: f64, s: f64) -> Result<Self> {
        check_slope(a)?;
        Ok(WitnessParams { a, s })
    }
}

/// Witness estimate together with its bounds and significance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub params: WitnessParams,
    pub p0_est: f64,
    pub p1_est: f64,
    /// Covariance of `(p0_est, p1_est)`, row-major.
    pub cov: [[f64; 2]; 2],
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "deltaW")]
    pub delta_w: f64,
    #[serde(rename = "WG")]
    pub wg: f64,
    #[serde(rename = "Wcl")]
    pub wcl: f64,
    #[serde(rename = "WR")]
    pub wr: f64,
    pub negativity_flag: bool,
}

impl WitnessReport {
    /// Assembles a report from estimates with `W` recomputed as `a p0 + p1`.
    pub fn new(params: WitnessParams, p0: f64, p1: f64, cov: [[f64; 2]; 2], delta_w: f64) -> Result<Self> {
        Self::with_witness(params, p0, p1, cov, params.a * p0 + p1, delta_w)
    }

    /// Assembles a report from an independently estimated `W` and its
    /// standard deviation.
    pub fn with_witness(
        params: WitnessParams,
        p0: f64,
        p1: f64,
        cov: [[f64; 2]; 2],
        w: f64,
        delta_w: f64,
    ) -> Result<Self> {
        let (wg, _) = gaussian_bound(params.a)?;
        let wcl = classical_bound(params.a)?;
        if !(delta_w > 0.0) {
            return Err(Error::DegenerateCovariance { a: params.a });
        }
        Ok(WitnessReport {
            params,
            p0_est: p0,
            p1_est: p1,
            cov,
            w,
            delta_w,
            wg,
            wcl,
            wr: (w - wg) / delta_w,
            negativity_flag: negativity_flag(p1),
        })
    }

    /// `W - W_G`.
    pub fn excess(&self) -> f64 {
        self.w - self.wg
    }
}

fn check_slope(a: f64) -> Result<()> {
    if !a.is_finite() || a >= 1.0 {
        return domain(format!("witness slope must satisfy a < 1, got {a}"));
    }
    Ok(())
}

/// `ln cosh r` without overflow.
fn ln_cosh(r: f64) -> f64 {
    r + (-2.0 * r).exp().ln_1p() - std::f64::consts::LN_2
}

/// Vacuum and maximal single-photon probability of the pure squeezed state
/// with squeezing `r` that is extremal among Gaussian mixtures.
pub fn gaussian_boundary(r: f64) -> Result<BoundaryPoint> {
    if !r.is_finite() || r < 0.0 {
        return domain(format!("squeezing must be finite and >= 0, got {r}"));
    }
    if r == 0.0 {
        return Ok(BoundaryPoint { r, p0: 1.0, p1: 0.0 });
    }
    // e^r sinh r = (e^{2r} - 1)/2
    let exponent = -0.5 * (2.0 * r).exp_m1();
    let lc = ln_cosh(r);
    let ln_p0 = exponent - lc;
    // ln[(e^{4r} - 1)/4]
    let ln_pref = 4.0 * r + (-(-4.0 * r).exp()).ln_1p() - 4f64.ln();
    let ln_p1 = ln_pref + exponent - 3.0 * lc;
    Ok(BoundaryPoint { r, p0: ln_p0.exp(), p1: ln_p1.exp() })
}

/// Poissonian boundary of mixtures of coherent states.
pub fn coherent_boundary(nbar: f64) -> Result<BoundaryPoint> {
    if !nbar.is_finite() || nbar < 0.0 {
        return domain(format!("mean photon number must be finite and >= 0, got {nbar}"));
    }
    let p0 = (-nbar).exp();
    Ok(BoundaryPoint { r: nbar, p0, p1: nbar * p0 })
}

/// Optimal squeezing `r0(a)` of the Gaussian witness bound.
pub fn optimal_squeezing(a: f64) -> Result<f64> {
    check_slope(a)?;
    let disc = (a * a - 10.0 * a + 9.0).sqrt();
    Ok(0.5 * ((3.0 - a + disc) / 2.0).ln())
}

/// Maximum of `a p0 + p1` over Gaussian mixtures, with the squeezing that
/// attains it.
pub fn gaussian_bound(a: f64) -> Result<(f64, f64)> {
    let r0 = optimal_squeezing(a)?;
    let pt = gaussian_boundary(r0)?;
    Ok((a * pt.p0 + pt.p1, r0))
}

/// Maximum of `a p0 + p1` over mixtures of coherent states, `exp(a - 1)`.
pub fn classical_bound(a: f64) -> Result<f64> {
    check_slope(a)?;
    Ok((a - 1.0).exp())
}

pub fn witness_value(p0: f64, p1: f64, a: f64) -> f64 {
    a * p0 + p1
}

/// Sufficient condition for a negative Wigner function at the origin.
pub fn negativity_flag(p1_s: f64) -> bool {
    p1_s > 0.5
}

/// Largest `p1` reachable by Gaussian mixtures at vacuum probability `p0`,
/// found by inverting the monotone `p0(r)` of the boundary curve.
pub fn gaussian_p1_limit(p0: f64) -> f64 {
    if p0 >= 1.0 {
        return 0.0;
    }
    if p0 <= 0.0 {
        return 0.0;
    }
    let p0_at = |r: f64| gaussian_boundary(r).map(|b| b.p0).unwrap_or(0.0);
    let mut hi = 1.0;
    while p0_at(hi) > p0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p0_at(mid) > p0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    gaussian_boundary(0.5 * (lo + hi)).map(|b| b.p1).unwrap_or(0.0)
}

/// Signed distance `p1 - p1_G(p0)` above the Gaussian boundary.
pub fn gaussian_margin(p0: f64, p1: f64) -> f64 {
    p1 - gaussian_p1_limit(p0)
}

/// Slope search range and resolution for [`optimal_relative_witness`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSearch {
    pub a_min: f64,
    pub a_max: f64,
    pub grid_points: usize,
}

impl Default for SlopeSearch {
    fn default() -> Self {
        SlopeSearch { a_min: -5.0, a_max: 0.999, grid_points: 2000 }
    }
}

impl SlopeSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_min < self.a_max) || self.a_max >= 1.0 || self.grid_points < 3 {
            return domain(format!(
                "slope range [{}, {}] with {} points is invalid (need a_min < a_max < 1, >= 3 points)",
                self.a_min, self.a_max, self.grid_points
            ));
        }
        Ok(())
    }

    fn grid(&self, i: usize) -> f64 {
        let t = i as f64 / (self.grid_points - 1) as f64;
        self.a_min + t * (self.a_max - self.a_min)
    }
}

/// `W_R(a) = (a p0 + p1 - W_G(a)) / sqrt(a^2 c00 + 2a c01 + c11)`.
pub fn relative_witness(p0: f64, p1: f64, cov: &[[f64; 2]; 2], a: f64) -> Result<f64> {
    let var = a * a * cov[0][0] + 2.0 * a * cov[0][1] + cov[1][1];
    if var.is_nan() || var <= 0.0 {
        return Err(Error::DegenerateCovariance { a });
    }
    let (wg, _) = gaussian_bound(a)?;
    Ok((a * p0 + p1 - wg) / var.sqrt())
}

/// The slope maximising the relative witness, `(a_opt, W_R(a_opt))`.
///
/// A uniform grid over the search range locates the best cell, then golden
/// section refines within the two neighbouring cells.
pub fn optimal_relative_witness(p0: f64, p1: f64, cov: &[[f64; 2]; 2]) -> Result<(f64, f64)> {
    optimal_relative_witness_with(p0, p1, cov, &SlopeSearch::default(), Execution::Sequential)
}

pub fn optimal_relative_witness_with(
    p0: f64,
    p1: f64,
    cov: &[[f64; 2]; 2],
    search: &SlopeSearch,
    exec: Execution,
) -> Result<(f64, f64)> {
    search.validate()?;
    let values = exec.map(search.grid_points, |i| relative_witness(p0, p1, cov, search.grid(i)));
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if v > best.1 {
            best = (i, v);
        }
    }
    let lo = search.grid(best.0.saturating_sub(1));
    let hi = search.grid((best.0 + 1).min(search.grid_points - 1));
    let f = |a: f64| relative_witness(p0, p1, cov, a).unwrap_or(f64::NEG_INFINITY);
    let (a_ref, v_ref) = golden_max(f, lo, hi, 1e-12);
    if v_ref >= best.1 {
        Ok((a_ref, v_ref))
    } else {
        Ok((search.grid(best.0), best.1))
    }
}

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    [(x, fx), (x1, f1), (x2, f2)]
        .into_iter()
        .fold((x, fx), |acc, c| if c.1 > acc.1 { c } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundary_at_zero_squeezing_is_vacuum() {
        let b = gaussian_boundary(0.0).unwrap();
        assert_eq!((b.p0, b.p1), (1.0, 0.0));
    }

    #[test]
    fn boundary_reference_values() {
        // 40-digit evaluations of the parametric curve
        let b = gaussian_boundary(0.5).unwrap();
        assert!((b.p0 - 0.37559065160520114218).abs() < 1e-14);
        assert!((b.p1 - 0.4718037073790789791).abs() < 1e-14);
        let b = gaussian_boundary(1.0).unwrap();
        assert!((b.p0 - 0.026561064398070079954).abs() < 1e-15);
        assert!((b.p1 - 0.14947137906504450547).abs() < 1e-14);
        let b = gaussian_boundary(2.0).unwrap();
        assert!((b.p0 / 6.1075666994119214098e-13 - 1.0).abs() < 1e-12);
        assert!((b.p1 / 3.2146641354713000768e-11 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_closed_form_at_half_ln3() {
        let b = gaussian_boundary(0.5 * 3f64.ln()).unwrap();
        let want = (-1f64).exp() * 3f64.sqrt() / 2.0;
        assert!((b.p0 - want).abs() < 1e-15);
    }

    #[test]
    fn boundary_is_stable_for_large_squeezing() {
        for r in [10.0, 50.0, 500.0] {
            let b = gaussian_boundary(r).unwrap();
            assert_eq!((b.p0, b.p1), (0.0, 0.0));
        }
    }

    #[test]
    fn boundary_rejects_bad_input() {
        assert!(gaussian_boundary(-0.1).is_err());
        assert!(gaussian_boundary(f64::NAN).is_err());
        assert!(gaussian_boundary(f64::INFINITY).is_err());
        assert!(coherent_boundary(-1.0).is_err());
    }

    #[test]
    fn coherent_boundary_values() {
        let e = std::f64::consts::E;
        assert_eq!(coherent_boundary(0.0).unwrap().p0, 1.0);
        assert_eq!(coherent_boundary(0.0).unwrap().p1, 0.0);
        let b = coherent_boundary(1.0).unwrap();
        assert!((b.p0 - 1.0 / e).abs() < 1e-16 && (b.p1 - 1.0 / e).abs() < 1e-16);
        let b = coherent_boundary(2.0).unwrap();
        assert!((b.p0 - (-2f64).exp()).abs() < 1e-16);
        assert!((b.p1 - 2.0 * (-2f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn gaussian_bound_at_zero_slope() {
        let (wg, r0) = gaussian_bound(0.0).unwrap();
        assert!((r0 - 0.5 * 3f64.ln()).abs() < 1e-15);
        let want = 3.0 * 3f64.sqrt() / 4.0 * (-1f64).exp();
        assert!((wg - want).abs() < 1e-15);
        assert!((wg - 0.47788941237673796948).abs() < 1e-15);
    }

    #[test]
    fn gaussian_bound_vanishes_for_very_negative_slope() {
        let (wg, r0) = gaussian_bound(-100.0).unwrap();
        assert!(wg < 1e-3 && wg > 0.0);
        assert!(r0 > gaussian_bound(-5.0).unwrap().1);
    }

    #[test]
    fn bounds_reject_slope_at_or_above_one() {
        assert!(gaussian_bound(1.0).is_err());
        assert!(classical_bound(1.0).is_err());
        assert!(gaussian_bound(f64::NAN).is_err());
        assert!(WitnessParams::new(1.5, 0.0).is_err());
    }

    #[test]
    fn classical_bound_values() {
        assert!((classical_bound(0.0).unwrap() - (-1f64).exp()).abs() < 1e-16);
        assert!((classical_bound(1.0 - 1e-12).unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn bounds_match_grid_search() {
        for &a in &[-2.0, -0.5, 0.0, 0.5, 0.9] {
            let (wg, _) = gaussian_bound(a).unwrap();
            let n = 400_000;
            let best = (0..=n)
                .map(|i| {
                    let b = gaussian_boundary(4.0 * i as f64 / n as f64).unwrap();
                    a * b.p0 + b.p1
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((wg - best).abs() < 1e-9, "a={a}: {wg} vs {best}");
            let wcl = classical_bound(a).unwrap();
            let best = (0..=n)
                .map(|i| {
                    let b = coherent_boundary(10.0 * i as f64 / n as f64).unwrap();
                    a * b.p0 + b.p1
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((wcl - best).abs() < 1e-9);
        }
    }

    #[test]
    fn witness_value_cases() {
        assert_eq!(witness_value(1.0, 0.0, 0.5), 0.5);
        for a in [-3.0, 0.0, 0.7] {
            assert_eq!(witness_value(0.0, 1.0, a), 1.0);
        }
        let e1 = (-1f64).exp();
        assert!((witness_value(e1, e1, 0.0) - classical_bound(0.0).unwrap()).abs() < 1e-16);
    }

    #[test]
    fn negativity_is_strict() {
        assert!(!negativity_flag(0.5));
        assert!(negativity_flag(0.51));
        assert!(!negativity_flag(0.0));
    }

    #[test]
    fn boundary_points_never_beat_the_bound() {
        let cov = [[1e-4, 2e-5], [2e-5, 3e-4]];
        for r in [0.1, 0.4, 0.8, 1.3] {
            let b = gaussian_boundary(r).unwrap();
            let (_, wr) = optimal_relative_witness(b.p0, b.p1, &cov).unwrap();
            assert!(wr <= 1e-9, "r={r}: WR={wr}");
        }
    }

    #[test]
    fn optimum_matches_dense_grid() {
        let cov = [[1e-4, 0.0], [0.0, 1e-4]];
        let (a_opt, wr) = optimal_relative_witness(0.3, 0.7, &cov).unwrap();
        assert!(wr > 0.0);
        let n = 100_000;
        let brute = (0..n)
            .map(|i| relative_witness(0.3, 0.7, &cov, -5.0 + 5.999 * i as f64 / (n - 1) as f64).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(wr >= brute - 1e-6, "{wr} vs {brute}");
        assert!(wr - brute < 1e-3);
        assert!(a_opt < 1.0);
    }

    #[test]
    fn degenerate_covariance_is_reported() {
        let zero = [[0.0; 2]; 2];
        assert!(matches!(
            optimal_relative_witness(0.3, 0.7, &zero),
            Err(Error::DegenerateCovariance { .. })
        ));
    }

    #[test]
    fn tangency_holds_on_slope_grid() {
        let h = 1e-5;
        for i in 0..30 {
            let a = -2.0 + 2.9 * i as f64 / 29.0;
            let (_, r0) = gaussian_bound(a).unwrap();
            let w = |r: f64| {
                let b = gaussian_boundary(r).unwrap();
                a * b.p0 + b.p1
            };
            let d = (w(r0 + h) - w(r0 - h)) / (2.0 * h);
            assert!(d.abs() < 1e-6, "a={a}: dW/dr = {d}");
        }
    }

    #[test]
    fn p1_limit_inverts_boundary() {
        for r in [0.05, 0.3, 0.9, 1.6] {
            let b = gaussian_boundary(r).unwrap();
            assert!((gaussian_p1_limit(b.p0) - b.p1).abs() < 1e-12);
        }
        assert!(gaussian_margin(0.6, 0.4) > 0.0);
        assert!(gaussian_margin(0.9, 0.05) < 0.0);
    }

    proptest! {
        #[test]
        fn boundary_is_monotone_and_physical(r in 0.0f64..2.5, dr in 1e-4f64..0.5) {
            let a = gaussian_boundary(r).unwrap();
            let b = gaussian_boundary(r + dr).unwrap();
            prop_assert!(b.p0 < a.p0);
            prop_assert!(a.p0 + a.p1 <= 1.0 + 1e-15);
            prop_assert!(a.p0 > 0.0 && a.p0 <= 1.0 && a.p1 >= 0.0 && a.p1 < 1.0);
        }

        #[test]
        fn witness_is_linear(p0 in 0.0f64..1.0, p1 in 0.0f64..1.0, lam in 0.0f64..1.0, a in -5.0f64..0.99) {
            let lhs = witness_value(lam * p0, lam * p1, a);
            prop_assert!((lhs - lam * witness_value(p0, p1, a)).abs() < 1e-14);
        }
    }
}
