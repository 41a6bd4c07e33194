//! Covariance-matrix model of heralded photon subtraction from a mixed
//! squeezed vacuum.
//!
//! Conventions: `hbar = 1`, `[x, p] = i`, vacuum quadrature variance 1/2 and
//! vacuum covariance matrix equal to the identity, so every covariance matrix
//! here is twice the quadrature covariance. Two-mode matrices are ordered
//! `(x_A, p_A, x_B, p_B)`.
//!
//! The heralded output is the weighted difference of two zero-mean Gaussians,
//! `[G(gamma_I) - P0' G(gamma_0)] / (1 - P0')`, and its vacuum and
//! single-photon probabilities follow from determinants of the two
//! covariance matrices.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Symmetric single-mode covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovMat2(pub [[f64; 2]; 2]);

/// Symmetric two-mode covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovMat4(pub [[f64; 4]; 4]);

impl CovMat2 {
    pub const IDENTITY: CovMat2 = CovMat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn diag(a: f64, b: f64) -> Self {
        CovMat2([[a, 0.0], [0.0, b]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn add_identity(&self) -> CovMat2 {
        let mut m = self.0;
        m[0][0] += 1.0;
        m[1][1] += 1.0;
        CovMat2(m)
    }

    pub fn inverse(&self) -> Result<CovMat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Singular("2x2 block inversion"));
        }
        let m = &self.0;
        Ok(CovMat2([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }

    pub fn mul(&self, o: &CovMat2) -> CovMat2 {
        let (a, b) = (&self.0, &o.0);
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        CovMat2(m)
    }

    pub fn transpose(&self) -> CovMat2 {
        let m = &self.0;
        CovMat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn sub(&self, o: &CovMat2) -> CovMat2 {
        let mut m = self.0;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v -= o.0[i][j];
            }
        }
        CovMat2(m)
    }

    /// Smallest eigenvalue of the real symmetric matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = &self.0;
        let half_tr = 0.5 * (m[0][0] + m[1][1]);
        let half_diff = 0.5 * (m[0][0] - m[1][1]);
        half_tr - (half_diff * half_diff + m[0][1] * m[1][0]).sqrt()
    }

    /// Smallest eigenvalue of the Hermitian matrix `gamma + i Omega`; a
    /// physical state has this `>= 0`.
    pub fn min_eigenvalue_with_symplectic(&self) -> f64 {
        let m = &self.0;
        let half_tr = 0.5 * (m[0][0] + m[1][1]);
        let half_diff = 0.5 * (m[0][0] - m[1][1]);
        half_tr - (half_diff * half_diff + m[0][1] * m[1][0] + 1.0).sqrt()
    }

    /// Applies the anti-squeezing map `gamma -> S gamma S^T` with
    /// `S = diag(e^s, e^-s)`; positive `s` stretches the x quadrature.
    pub fn antisqueeze(&self, s: f64) -> CovMat2 {
        let (u, d) = (s.exp(), (-s).exp());
        let m = &self.0;
        CovMat2([[u * u * m[0][0], m[0][1]], [m[1][0], d * d * m[1][1]]])
    }
}

impl CovMat4 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        CovMat4(m)
    }

    /// Block `(row, col)` with `0 = A`, `1 = B`.
    pub fn block(&self, row: usize, col: usize) -> CovMat2 {
        let (r, c) = (2 * row, 2 * col);
        let m = &self.0;
        CovMat2([[m[r][c], m[r][c + 1]], [m[r + 1][c], m[r + 1][c + 1]]])
    }

    pub fn from_blocks(a: &CovMat2, c: &CovMat2, b: &CovMat2) -> CovMat4 {
        let mut m = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a.0[i][j];
                m[i][j + 2] = c.0[i][j];
                m[i + 2][j] = c.0[j][i];
                m[i + 2][j + 2] = b.0[i][j];
            }
        }
        CovMat4(m)
    }

    pub fn det(&self) -> f64 {
        // Laplace expansion over 2x2 minors of the first two rows.
        let m = &self.0;
        let minor = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let mut det = 0.0;
        for &(a, b) in &pairs {
            let rest: Vec<usize> = (0..4).filter(|&k| k != a && k != b).collect();
            let sign = if (a + b + 1) % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * minor(0, 1, a, b) * minor(2, 3, rest[0], rest[1]);
        }
        det
    }

    /// Smaller symplectic eigenvalue, from the invariants `det gamma` and
    /// `det A + det B + 2 det C`. Physical states have it `>= 1`.
    pub fn min_symplectic_eigenvalue(&self) -> f64 {
        let delta = self.block(0, 0).det() + self.block(1, 1).det() + 2.0 * self.block(0, 1).det();
        let det = self.det();
        let disc = (delta * delta - 4.0 * det).max(0.0);
        (0.5 * (delta - disc.sqrt())).max(0.0).sqrt()
    }

    /// `gamma > 0` and the uncertainty relation `gamma + i Omega >= 0`.
    pub fn is_physical(&self, tol: f64) -> bool {
        let a = self.block(0, 0);
        let b = self.block(1, 1);
        a.min_eigenvalue() > 0.0 && b.min_eigenvalue() > 0.0 && self.det() > 0.0 && self.min_symplectic_eigenvalue() >= 1.0 - tol
    }
}

/// Physical parameters of the photon-subtraction setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Squeezed-quadrature variance (vacuum = 1/2).
    #[serde(rename = "Vx")]
    pub vx: f64,
    /// Anti-squeezed-quadrature variance.
    #[serde(rename = "Vp")]
    pub vp: f64,
    /// Intensity transmittance of the tap-off beam splitter.
    #[serde(rename = "T")]
    pub t: f64,
    /// Heralding detector efficiency.
    pub eta: f64,
    /// Homodyne efficiency.
    #[serde(rename = "etaH")]
    pub eta_h: f64,
    /// Mean thermal photon number of the homodyne electronic noise.
    pub nth: f64,
    /// Mode overlap: probability that a click heralds the observed mode.
    #[serde(rename = "Q")]
    pub q: f64,
}

impl ModelParams {
    /// Best-fit values of the reference experiment (`R = 0.077`).
    pub const fn reference() -> Self {
        ModelParams { vx: 0.364, vp: 0.705, t: 0.923, eta: 0.08, eta_h: 0.80, nth: 0.0, q: 0.625 }
    }

    /// Ideal detection of a pure squeezed vacuum with squeezing `r`.
    pub fn pure_ideal(r: f64, t: f64) -> Self {
        ModelParams {
            vx: 0.5 * (-2.0 * r).exp(),
            vp: 0.5 * (2.0 * r).exp(),
            t,
            eta: 1.0,
            eta_h: 1.0,
            nth: 0.0,
            q: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("Vx", self.vx), ("Vp", self.vp), ("T", self.t), ("eta", self.eta), ("etaH", self.eta_h), ("nth", self.nth), ("Q", self.q)] {
            if !v.is_finite() {
                return domain(format!("{name} must be finite, got {v}"));
            }
        }
        if self.vx <= 0.0 || self.vp <= 0.0 {
            return domain("quadrature variances must be positive");
        }
        let product = self.vx * self.vp;
        if product < 0.25 * (1.0 - 1e-12) {
            return Err(Error::UncertaintyViolation { product });
        }
        if !(self.t > 0.0 && self.t <= 1.0) {
            return domain(format!("T must lie in (0, 1], got {}", self.t));
        }
        for (name, v) in [("eta", self.eta), ("etaH", self.eta_h), ("Q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return domain(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.nth < 0.0 {
            return domain(format!("nth must be >= 0, got {}", self.nth));
        }
        Ok(())
    }

    /// Parses flat `key = value` lines. Recognised keys: `Vx`, `Vp`, `T` or
    /// `R`, `eta`, `etaH`, `nth`, `Q`; keys not given keep the reference
    /// values. Other keys are rejected unless listed in `extra_keys`.
    pub fn from_config_str(text: &str, extra_keys: &[&str]) -> Result<Self> {
        let table = parse_flat_config(text)?;
        let mut p = ModelParams::reference();
        let mut seen_t = false;
        for (key, value) in &table {
            let v = *value;
            match key.as_str() {
                "Vx" => p.vx = v,
                "Vp" => p.vp = v,
                "T" | "R" if seen_t => return Err(Error::Config("give only one of T and R".into())),
                "T" => {
                    p.t = v;
                    seen_t = true;
                }
                "R" => {
                    p.t = 1.0 - v;
                    seen_t = true;
                }
                "eta" => p.eta = v,
                "etaH" => p.eta_h = v,
                "nth" => p.nth = v,
                "Q" => p.q = v,
                k if extra_keys.contains(&k) => {}
                k => return Err(Error::Config(format!("unknown key `{k}`"))),
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "Vx = {}\nVp = {}\nT = {}\neta = {}\netaH = {}\nnth = {}\nQ = {}\n",
            self.vx, self.vp, self.t, self.eta, self.eta_h, self.nth, self.q
        )
    }
}

/// Reads a flat TOML document whose values are all numbers.
pub fn parse_flat_config(text: &str) -> Result<Vec<(String, f64)>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(table.len());
    for (k, v) in table {
        let x = match v {
            toml::Value::Float(f) => f,
            toml::Value::Integer(i) => i as f64,
            other => return Err(Error::Config(format!("`{k}` must be numeric, got {other}"))),
        };
        out.push((k, x));
    }
    Ok(out)
}

/// The heralded state as a weighted difference of two zero-mean Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalState {
    /// Unconditional reduced state of the signal mode.
    pub gamma_i: CovMat2,
    /// Signal state conditioned on no click.
    pub gamma_0: CovMat2,
    /// Effective no-click probability.
    pub p0prime: f64,
}

impl ConditionalState {
    /// A Gaussian state (`P0' = 0`).
    pub fn gaussian(gamma: CovMat2) -> Self {
        ConditionalState { gamma_i: gamma, gamma_0: gamma, p0prime: 0.0 }
    }

    /// Runs the full preparation model up to and including the mode-overlap
    /// correction.
    pub fn from_params(params: &ModelParams) -> Result<Self> {
        let gamma_in = input_cm(params)?;
        let gamma_ab = beamsplitter_cm(&gamma_in, params.t)?;
        let noisy = detection_noise_cm(&gamma_ab, params.eta_h, params.nth, params.eta)?;
        let mut state = condition_on_click(&noisy)?;
        state.p0prime = mode_overlap(state.p0prime, params.q)?;
        Ok(state)
    }
}

/// Covariance matrix `diag(2 Vx, 2 Vp)` of the input squeezed vacuum.
pub fn input_cm(params: &ModelParams) -> Result<CovMat2> {
    params.validate()?;
    Ok(CovMat2::diag(2.0 * params.vx, 2.0 * params.vp))
}

/// Two-mode covariance after the tap-off beam splitter with a vacuum in the
/// second port.
pub fn beamsplitter_cm(gamma_a: &CovMat2, t: f64) -> Result<CovMat4> {
    if !(t > 0.0 && t <= 1.0) {
        return domain(format!("T must lie in (0, 1], got {t}"));
    }
    let r = 1.0 - t;
    let id = CovMat2::IDENTITY;
    let lin = |wa: f64, wb: f64| {
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = wa * gamma_a.0[i][j] + wb * id.0[i][j];
            }
        }
        CovMat2(m)
    };
    let rt = (r * t).sqrt();
    Ok(CovMat4::from_blocks(&lin(t, r), &lin(rt, -rt), &lin(r, t)))
}

/// Homodyne inefficiency and thermal noise on mode A, heralding-detector
/// inefficiency on mode B: `gamma' = M gamma M^T + G`.
pub fn detection_noise_cm(gamma_ab: &CovMat4, eta_h: f64, nth: f64, eta: f64) -> Result<CovMat4> {
    if !(0.0..=1.0).contains(&eta_h) || !(0.0..=1.0).contains(&eta) {
        return domain("efficiencies must lie in [0, 1]");
    }
    if !(nth >= 0.0) {
        return domain(format!("nth must be >= 0, got {nth}"));
    }
    let scale = [eta_h.sqrt(), eta_h.sqrt(), eta.sqrt(), eta.sqrt()];
    let noise = [1.0 - eta_h + 2.0 * nth, 1.0 - eta_h + 2.0 * nth, 1.0 - eta, 1.0 - eta];
    let mut m = gamma_ab.0;
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= scale[i] * scale[j];
        }
        row[i] += noise[i];
    }
    Ok(CovMat4(m))
}

/// Conditions mode A on an on/off click in mode B. The returned state has
/// `p0prime` equal to the bare no-click probability.
pub fn condition_on_click(gamma_ab: &CovMat4) -> Result<ConditionalState> {
    let ga = gamma_ab.block(0, 0);
    let gb = gamma_ab.block(1, 1);
    let gc = gamma_ab.block(0, 1);
    let gb1 = gb.add_identity();
    let det = gb1.det();
    if !(det > 0.0) {
        return Err(Error::Singular("Gamma_B + I"));
    }
    let inv = gb1.inverse()?;
    let gamma_0 = ga.sub(&gc.mul(&inv).mul(&gc.transpose()));
    let p0 = (2.0 / det.sqrt()).min(1.0);
    Ok(ConditionalState { gamma_i: ga, gamma_0, p0prime: p0 })
}

/// Dilutes the no-click probability for false heralds:
/// `P0' = Q P0 / (1 - P0 (1 - Q))`.
pub fn mode_overlap(p0: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p0) || !(0.0..=1.0).contains(&q) {
        return domain(format!("P0 = {p0} and Q = {q} must lie in [0, 1]"));
    }
    let denom = 1.0 - p0 * (1.0 - q);
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok(q * p0 / denom)
}

/// Applies the anti-squeezing to both Gaussian constituents.
pub fn antisqueeze_state(state: &ConditionalState, s: f64) -> ConditionalState {
    ConditionalState {
        gamma_i: state.gamma_i.antisqueeze(s),
        gamma_0: state.gamma_0.antisqueeze(s),
        p0prime: state.p0prime,
    }
}

/// Vacuum and single-photon probabilities of the heralded state.
pub fn photon_probs(state: &ConditionalState) -> Result<(f64, f64)> {
    let pp = state.p0prime;
    if !(pp < 1.0) {
        return Err(Error::ZeroHeralding { p0prime: pp });
    }
    let gaussian_terms = |g: &CovMat2| {
        let d1 = g.add_identity().det();
        let root = d1.sqrt();
        (1.0 / root, (g.det() - 1.0) / (d1 * root))
    };
    let (a0, a1) = gaussian_terms(&state.gamma_i);
    let (b0, b1) = gaussian_terms(&state.gamma_0);
    let k = 2.0 / (1.0 - pp);
    Ok((k * (a0 - pp * b0), k * (a1 - pp * b1)))
}

/// Quadrature variance at local-oscillator phase `theta`,
/// `(1/2) (cos, sin) gamma (cos, sin)^T`.
pub fn marginal_variance(gamma: &CovMat2, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let m = &gamma.0;
    0.5 * (c * c * m[0][0] + c * s * (m[0][1] + m[1][0]) + s * s * m[1][1])
}

/// One point of a model trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub s: f64,
    pub p0: f64,
    pub p1: f64,
}

/// `(p0(s), p1(s))` of the heralded state for each anti-squeezing value.
pub fn model_trajectory(params: &ModelParams, s_grid: &[f64]) -> Result<Vec<TrajectoryPoint>> {
    let state = ConditionalState::from_params(params)?;
    state_trajectory(&state, s_grid)
}

pub fn state_trajectory(state: &ConditionalState, s_grid: &[f64]) -> Result<Vec<TrajectoryPoint>> {
    s_grid
        .iter()
        .map(|&s| {
            let (p0, p1) = photon_probs(&antisqueeze_state(state, s))?;
            Ok(TrajectoryPoint { s, p0, p1 })
        })
        .collect()
}
