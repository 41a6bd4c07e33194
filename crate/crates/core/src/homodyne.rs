//! Seeded Monte Carlo homodyne data from the heralded two-Gaussian state,
//! and the dataset CSV format.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::exec::Execution;
use crate::gaussian::{marginal_variance, ConditionalState};
use crate::special::{normal_pdf, normal_sf};

pub const CSV_HEADER: &str = "bin,theta,x";

/// Quadrature samples recorded at one local-oscillator phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBin {
    /// 1-based bin index `k`.
    pub index: usize,
    /// Phase `theta_k` in radians, in `(0, pi]`.
    pub theta: f64,
    pub samples: Vec<f64>,
}

/// Phase-binned homodyne data.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset {
    pub bins: Vec<PhaseBin>,
    /// Seed the data were generated from, if simulated.
    pub seed: Option<u64>,
}

impl QuadratureDataset {
    /// Number of phase bins `K`.
    pub fn k(&self) -> usize {
        self.bins.len()
    }

    /// Total sample count `N`.
    pub fn len(&self) -> usize {
        self.bins.iter().map(|b| b.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-bin counts `M_k`.
    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(|b| b.samples.len()).collect()
    }

    /// Fails if the dataset is empty or any bin has no samples.
    pub fn check_nonempty_bins(&self) -> Result<()> {
        if self.bins.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for b in &self.bins {
            if b.samples.is_empty() {
                return Err(Error::EmptyBin { bin: b.index });
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "{CSV_HEADER}")?;
        for b in &self.bins {
            for x in &b.samples {
                writeln!(w, "{},{:.16e},{}", b.index, b.theta, x)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if line.trim() != CSV_HEADER {
                    return Err(Error::Parse { line: 1, msg: format!("expected header `{CSV_HEADER}`, found `{}`", line.trim()) });
                }
            }
            None => return Err(Error::EmptyDataset),
        }
        let mut bins: BTreeMap<usize, PhaseBin> = BTreeMap::new();
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: lineno, msg };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let index: usize = fields[0].parse().map_err(|_| bad(format!("invalid bin index `{}`", fields[0])))?;
            if index == 0 {
                return Err(bad("bin index must be >= 1".into()));
            }
            let theta: f64 = fields[1].parse().map_err(|_| bad(format!("invalid theta `{}`", fields[1])))?;
            if !(theta > 0.0 && theta <= PI * (1.0 + 1e-12)) {
                return Err(bad(format!("theta = {theta} outside (0, pi]")));
            }
            let x: f64 = fields[2].parse().map_err(|_| bad(format!("invalid quadrature `{}`", fields[2])))?;
            if !x.is_finite() {
                return Err(bad("quadrature value must be finite".into()));
            }
            let bin = bins.entry(index).or_insert_with(|| PhaseBin { index, theta, samples: Vec::new() });
            if (bin.theta - theta).abs() > 1e-12 {
                return Err(bad(format!("bin {index} has inconsistent phases {} and {theta}", bin.theta)));
            }
            bin.samples.push(x);
        }
        if bins.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(QuadratureDataset { bins: bins.into_values().collect(), seed: None })
    }
}

pub fn write_dataset(dataset: &QuadratureDataset, path: impl AsRef<Path>) -> Result<()> {
    dataset.write_csv(std::fs::File::create(path)?)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<QuadratureDataset> {
    QuadratureDataset::read_csv(std::fs::File::open(path)?)
}

/// Equidistant phase `theta_k = k pi / K`.
pub fn phase(k: usize, bins: usize) -> f64 {
    k as f64 * PI / bins as f64
}

/// Sampling method for the quadrature marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampler {
    /// Rejection when its acceptance rate `1 - P0'` is at least
    /// [`REJECTION_MIN_ACCEPTANCE`], inverse CDF otherwise.
    #[default]
    Auto,
    /// Propose from `g_I`, accept with probability `1 - P0' g_0 / g_I`.
    Rejection,
    /// Invert the closed-form CDF by safeguarded Newton iteration.
    InverseCdf,
}

pub const REJECTION_MIN_ACCEPTANCE: f64 = 0.05;

/// Proposal bookkeeping of a sampling run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplingStats {
    pub proposals: u64,
    pub accepted: u64,
}

/// The marginal density `w(x) = [g_I(x) - P0' g_0(x)] / (1 - P0')` at one
/// phase.
#[derive(Debug, Clone, Copy)]
pub struct Marginal {
    pub var_i: f64,
    pub var_0: f64,
    pub p0prime: f64,
}

impl Marginal {
    pub fn new(state: &ConditionalState, theta: f64) -> Result<Self> {
        let m = Marginal {
            var_i: marginal_variance(&state.gamma_i, theta),
            var_0: marginal_variance(&state.gamma_0, theta),
            p0prime: state.p0prime,
        };
        m.check_envelope()?;
        Ok(m)
    }

    fn check_envelope(&self) -> Result<()> {
        if !(self.p0prime < 1.0) {
            return Err(Error::ZeroHeralding { p0prime: self.p0prime });
        }
        if !(self.var_i > 0.0 && self.var_0 > 0.0) {
            return domain("marginal variances must be positive");
        }
        if self.p0prime == 0.0 {
            return Ok(());
        }
        // acceptance 1 - P0' g0/gI is smallest at x = 0 when var_0 <= var_i
        // and unbounded below otherwise
        let at_origin = 1.0 - self.p0prime * (self.var_i / self.var_0).sqrt();
        if at_origin < -1e-12 {
            return Err(Error::EnvelopeViolation { value: at_origin });
        }
        if self.var_0 > self.var_i * (1.0 + 1e-12) {
            return Err(Error::EnvelopeViolation { value: f64::NEG_INFINITY });
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (normal_pdf(x, self.var_i) - self.p0prime * normal_pdf(x, self.var_0)) / (1.0 - self.p0prime)
    }

    /// `P(X > y)`.
    pub fn sf(&self, y: f64) -> f64 {
        let (si, s0) = (self.var_i.sqrt(), self.var_0.sqrt());
        (normal_sf(y, si) - self.p0prime * normal_sf(y, s0)) / (1.0 - self.p0prime)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            self.sf(-x)
        } else {
            1.0 - self.sf(x)
        }
    }

    /// Acceptance probability of a proposal `x ~ g_I`.
    pub fn acceptance(&self, x: f64) -> f64 {
        if self.p0prime == 0.0 {
            return 1.0;
        }
        let ratio = (self.var_i / self.var_0).sqrt() * (-0.5 * x * x * (1.0 / self.var_0 - 1.0 / self.var_i)).exp();
        1.0 - self.p0prime * ratio
    }

    fn rejection_draw<R: Rng + ?Sized>(&self, rng: &mut R, stats: &mut SamplingStats) -> Result<f64> {
        let sigma = self.var_i.sqrt();
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = sigma * z;
            stats.proposals += 1;
            let acc = self.acceptance(x);
            if !(-1e-12..=1.0 + 1e-12).contains(&acc) {
                return Err(Error::EnvelopeViolation { value: acc });
            }
            let u: f64 = rng.random();
            if u < acc {
                stats.accepted += 1;
                return Ok(x);
            }
        }
    }

    /// Solves `sf(y) = t` for `y >= 0`, `t in (0, 1/2]`.
    fn invert_tail(&self, t: f64) -> f64 {
        if t >= 0.5 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, self.var_i.sqrt());
        while self.sf(hi) > t {
            lo = hi;
            hi *= 2.0;
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.sf(y) - t;
            if f > 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let dens = self.pdf(y);
            let mut next = if dens > 0.0 { y + f / dens } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - y).abs();
            y = next;
            if step <= 1e-15 * (1.0 + y) || hi - lo <= 1e-15 * (1.0 + hi) {
                break;
            }
        }
        y
    }

    fn inverse_draw<R: Rng + ?Sized>(&self, rng: &mut R, stats: &mut SamplingStats) -> f64 {
        let u: f64 = rng.random();
        stats.proposals += 1;
        stats.accepted += 1;
        // P(X < -y) = P(X > y) = t
        if u < 0.5 {
            -self.invert_tail(u.max(f64::MIN_POSITIVE))
        } else {
            self.invert_tail(1.0 - u)
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, sampler: Sampler, stats: &mut SamplingStats) -> Result<f64> {
        let use_rejection = match sampler {
            Sampler::Rejection => true,
            Sampler::InverseCdf => false,
            Sampler::Auto => 1.0 - self.p0prime >= REJECTION_MIN_ACCEPTANCE,
        };
        if use_rejection {
            self.rejection_draw(rng, stats)
        } else {
            Ok(self.inverse_draw(rng, stats))
        }
    }
}

/// The generator for bin `k` of a run seeded with `seed`: an independent
/// ChaCha stream per bin.
pub fn bin_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// `count` i.i.d. quadrature samples at phase `theta`.
pub fn sample_marginal(state: &ConditionalState, theta: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = bin_rng(seed, 0);
    Ok(sample_marginal_with(state, theta, count, &mut rng, Sampler::Auto)?.0)
}

pub fn sample_marginal_with<R: Rng + ?Sized>(
    state: &ConditionalState,
    theta: f64,
    count: usize,
    rng: &mut R,
    sampler: Sampler,
) -> Result<(Vec<f64>, SamplingStats)> {
    let marginal = Marginal::new(state, theta)?;
    let mut stats = SamplingStats::default();
    let samples = (0..count).map(|_| marginal.draw(rng, sampler, &mut stats)).collect::<Result<Vec<_>>>()?;
    Ok((samples, stats))
}

/// `bins` equidistant phases with `per_bin` samples each.
pub fn generate_dataset(state: &ConditionalState, bins: usize, per_bin: usize, seed: u64) -> Result<QuadratureDataset> {
    generate_dataset_with(state, bins, per_bin, seed, Execution::default(), Sampler::Auto)
}

pub fn generate_dataset_with(
    state: &ConditionalState,
    bins: usize,
    per_bin: usize,
    seed: u64,
    exec: Execution,
    sampler: Sampler,
) -> Result<QuadratureDataset> {
    if bins == 0 {
        return domain("need at least one phase bin");
    }
    let out = exec.map(bins, |i| {
        let k = i + 1;
        let theta = phase(k, bins);
        let mut rng = bin_rng(seed, k as u64);
        let (samples, _) = sample_marginal_with(state, theta, per_bin, &mut rng, sampler)?;
        Ok(PhaseBin { index: k, theta, samples })
    });
    let bins = out.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(QuadratureDataset { bins, seed: Some(seed) })
}
