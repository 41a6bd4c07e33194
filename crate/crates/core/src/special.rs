//! Special functions: Dawson's integral, Hermite functions, Gauss-Legendre
//! quadrature and Gaussian tail probabilities.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const RYBICKI_H: f64 = 0.2;
const RYBICKI_TERMS: usize = 18;

/// Dawson's integral `D(x) = exp(-x^2) * int_0^x exp(t^2) dt`, equal to
/// `(sqrt(pi)/2) exp(-x^2) erfi(x)`.
///
/// Power series near the origin, Rybicki's exponentially convergent sum in
/// the bulk and the asymptotic expansion for `|x| > 10`. Absolute accuracy is
/// better than 1e-15 everywhere.
pub fn dawson(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.2 {
        // D(x) = sum_k (-2x^2)^k x / (2k+1)!!
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        for k in 1..20 {
            term *= -2.0 * x2 / (2 * k + 1) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    if ax > 10.0 {
        return x.signum() * dawson_asymptotic(ax);
    }
    let n0 = 2.0 * (0.5 * ax / RYBICKI_H).round();
    let xp = ax - n0 * RYBICKI_H;
    let mut e1 = (2.0 * xp * RYBICKI_H).exp();
    let e2 = e1 * e1;
    let mut d1 = n0 + 1.0;
    let mut d2 = d1 - 2.0;
    let mut sum = 0.0;
    for i in 1..=RYBICKI_TERMS {
        let t = (2 * i - 1) as f64 * RYBICKI_H;
        sum += (-t * t).exp() * (e1 / d1 + 1.0 / (d2 * e1));
        d1 += 2.0;
        d2 -= 2.0;
        e1 *= e2;
    }
    x.signum() * sum * (-xp * xp).exp() / PI.sqrt()
}

/// Coefficients `c_k = (2k-1)!! / 2^k` of `D(x) = (1/2x) sum_k c_k x^(-2k)`,
/// summed to the smallest term.
fn asymptotic_series(ax: f64, mut term_of: impl FnMut(usize, f64) -> f64) -> f64 {
    let u = 1.0 / (ax * ax);
    let mut c = 1.0;
    let mut uk = 1.0;
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        c *= (2 * k - 1) as f64 / 2.0;
        uk *= u;
        let t = term_of(k, c * uk);
        if t.abs() >= last {
            break;
        }
        sum += t;
        last = t.abs();
        if t.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

fn dawson_asymptotic(ax: f64) -> f64 {
    (1.0 + asymptotic_series(ax, |_, t| t)) / (2.0 * ax)
}

/// Vacuum pattern function `f0(x) = 2 - 4 x D(x)`.
pub fn pattern_f0(x: f64) -> f64 {
    let ax = x.abs();
    if ax > 10.0 {
        // 2 - 2 sum_k c_k u^k with the k = 0 term cancelled
        return -2.0 * asymptotic_series(ax, |_, t| t);
    }
    2.0 - 4.0 * ax * dawson(ax)
}

/// Single-photon pattern function `f1(x) = 2(2x^2 - 1) + 8 x (1 - x^2) D(x)`.
pub fn pattern_f1(x: f64) -> f64 {
    let ax = x.abs();
    if ax > 10.0 {
        // sum_k 2 c_k (1 - 2k) u^k
        return asymptotic_series(ax, |k, t| 2.0 * t * (1.0 - 2.0 * k as f64));
    }
    2.0 * (2.0 * ax * ax - 1.0) + 8.0 * ax * (1.0 - ax * ax) * dawson(ax)
}

/// Harmonic-oscillator eigenfunctions `psi_0..=psi_nmax` at `x`, normalised so
/// that `|psi_0|^2 = exp(-x^2)/sqrt(pi)` (vacuum quadrature variance 1/2).
pub fn hermite_functions(x: f64, n_max: usize, out: &mut Vec<f64>) {
    out.clear();
    let psi0 = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(psi0);
    if n_max == 0 {
        return;
    }
    out.push(std::f64::consts::SQRT_2 * x * psi0);
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
}

/// Upper-tail mass `int_b^inf |psi_n(x)|^2 dx` for `n = 0..=n_max`, via
/// `T_n = T_{n-1} + psi_n(b) psi_{n-1}(b) / sqrt(2n)`.
pub fn hermite_upper_tails(b: f64, n_max: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(n_max + 1);
    hermite_functions(b, n_max, &mut psi);
    let mut tails = Vec::with_capacity(n_max + 1);
    tails.push(0.5 * libm::erfc(b));
    for n in 1..=n_max {
        let t = tails[n - 1] + psi[n] * psi[n - 1] / (2.0 * n as f64).sqrt();
        tails.push(t);
    }
    tails
}

/// Upper tail of the zero-mean normal distribution with standard deviation
/// `sigma`, `P(X > x)`.
pub fn normal_sf(x: f64, sigma: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2 / sigma)
}

/// Zero-mean normal density with variance `var`.
pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        let nf = order as f64;
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 0..order {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                dp = nf * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[order - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates each component of a vector-valued `f` over `[a, b]`,
    /// accumulating into `acc`.
    pub fn integrate_into(&self, a: f64, b: f64, acc: &mut [f64], mut f: impl FnMut(f64, &mut [f64])) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut buf = vec![0.0; acc.len()];
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            f(mid + half * z, &mut buf);
            for (s, v) in acc.iter_mut().zip(&buf) {
                *s += half * w * v;
            }
        }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = [0.0];
        self.integrate_into(a, b, &mut acc, |x, out| out[0] = f(x));
        acc[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 40-digit arithmetic.
    const DAWSON_REF: [(f64, f64); 10] = [
        (0.1, 0.09933599239785286115),
        (0.5, 0.42443638350202229593),
        (1.0, 0.53807950691276841914),
        (2.0, 0.30134038892379196603),
        (3.5, 0.14962159308075648475),
        (5.0, 0.10213407442427683544),
        (8.0, 0.063000198707553387919),
        (10.0, 0.050253847187598528033),
        (20.0, 0.025031367926403671947),
        (50.0, 0.010002001201201683031),
    ];

    #[test]
    fn dawson_matches_reference() {
        for (x, d) in DAWSON_REF {
            assert!((dawson(x) - d).abs() < 1e-14, "D({x}) = {} vs {d}", dawson(x));
            assert!((dawson(-x) + d).abs() < 1e-14);
        }
        assert_eq!(dawson(0.0), 0.0);
    }

    #[test]
    fn dawson_is_continuous_across_branches() {
        for &b in &[0.2, 10.0] {
            let h = 1e-9;
            let slope = 1.0 - 2.0 * b * dawson(b);
            let jump = dawson(b + h) - dawson(b - h) - 2.0 * h * slope;
            assert!(jump.abs() < 1e-15, "jump at {b}: {jump}");
        }
    }

    #[test]
    fn pattern_functions_match_reference() {
        let table = [
            (0.0, 2.0, -2.0),
            (0.3, 1.6608420019744256856, -1.0227324435934547478),
            (1.0, -0.15231802765107367655, 2.0),
            (1.7, -0.5334035730237360104, -0.016265506029722119297),
            (3.0, -0.13925236732669944811, -0.22803787722719116978),
            (6.0, -0.029024535389052453738, -0.031717477233671761639),
            (12.0, -0.0070180697914364952606, -0.0071679603508376445309),
            (30.0, -0.0011129681271010958123, -0.001116692527770270504),
            (50.0, -0.00040024024033660613403, -0.00040072120235745788129),
        ];
        for (x, f0, f1) in table {
            assert!((pattern_f0(x) - f0).abs() < 1e-12, "f0({x})");
            assert!((pattern_f1(x) - f1).abs() < 1e-12, "f1({x}) = {}", pattern_f1(x));
            assert_eq!(pattern_f0(-x), pattern_f0(x));
            assert_eq!(pattern_f1(-x), pattern_f1(x));
        }
    }

    #[test]
    fn pattern_functions_vanish_far_out() {
        for x in [60.0, 1e3, 1e6] {
            assert!(pattern_f0(x).abs() < 1e-3 && pattern_f1(x).abs() < 1e-3);
            assert!(pattern_f0(x).is_finite() && pattern_f1(x).is_finite());
        }
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let gl = GaussLegendre::new(40);
        let n_max = 6;
        let mut gram = vec![0.0; (n_max + 1) * (n_max + 1)];
        let mut psi = Vec::new();
        for cell in 0..80 {
            let a = -10.0 + 0.25 * cell as f64;
            gl.integrate_into(a, a + 0.25, &mut gram, |x, out| {
                hermite_functions(x, n_max, &mut psi);
                for i in 0..=n_max {
                    for j in 0..=n_max {
                        out[i * (n_max + 1) + j] = psi[i] * psi[j];
                    }
                }
            });
        }
        for i in 0..=n_max {
            for j in 0..=n_max {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * (n_max + 1) + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hermite_tails_match_quadrature() {
        let gl = GaussLegendre::new(30);
        let n_max = 8;
        for &b in &[-1.3, 0.0, 0.7, 2.5] {
            let tails = hermite_upper_tails(b, n_max);
            let mut acc = vec![0.0; n_max + 1];
            let mut psi = Vec::new();
            let mut a = b;
            while a < 12.0 {
                gl.integrate_into(a, a + 0.5, &mut acc, |x, out| {
                    hermite_functions(x, n_max, &mut psi);
                    for (o, p) in out.iter_mut().zip(&psi) {
                        *o = p * p;
                    }
                });
                a += 0.5;
            }
            for n in 0..=n_max {
                assert!((tails[n] - acc[n]).abs() < 1e-12, "b={b} n={n}: {} vs {}", tails[n], acc[n]);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        // degree 15 is exact for 8 nodes
        let v = gl.integrate(-1.0, 2.0, |x| x.powi(15) + 3.0 * x.powi(4));
        let want = (2f64.powi(16) - 1.0) / 16.0 + 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - want).abs() < 1e-10 * want);
    }
}
