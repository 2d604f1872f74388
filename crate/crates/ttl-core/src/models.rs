//! Data-generating models, hypothesis descriptions, and reproducible
//! random streams.
//!
//! Everything downstream consumes either a Gaussian sequence observation
//! (a vector x = v + sigma * Z in R^d) or count data (multinomial or
//! Poisson). The model structs validate their parameters up front so the
//! statistical code can assume well-formed inputs.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::num::{derive_stream, sum_neumaier};

/// Null/alternative separation for a tolerant test: the null allows
/// ||v||_p <= eps0 and the alternative requires ||v||_p >= eps1.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisPair {
    pub p: f64,
    pub eps0: f64,
    pub eps1: f64,
}

impl HypothesisPair {
    pub fn new(p: f64, eps0: f64, eps1: f64) -> Result<Self> {
        let h = HypothesisPair { p, eps0, eps1 };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) {
            return Err(Error::invalid(format!("p must be positive, got {}", self.p)));
        }
        if !self.eps0.is_finite() || self.eps0 < 0.0 {
            return Err(Error::invalid(format!(
                "eps0 must be finite and nonnegative, got {}",
                self.eps0
            )));
        }
        if !self.eps1.is_finite() || self.eps1 <= self.eps0 {
            return Err(Error::invalid(format!(
                "need eps0 < eps1 < inf, got eps0 = {}, eps1 = {}",
                self.eps0, self.eps1
            )));
        }
        Ok(())
    }
}

/// Gaussian sequence model: observe x_i = v_i + sigma * z_i, z_i iid N(0,1).
#[derive(Clone, Debug)]
pub struct GaussianSequenceSpec {
    pub d: usize,
    pub sigma: f64,
    pub v: Vec<f64>,
}

impl GaussianSequenceSpec {
    pub fn new(d: usize, sigma: f64, v: Vec<f64>) -> Result<Self> {
        let s = GaussianSequenceSpec { d, sigma, v };
        s.validate()?;
        Ok(s)
    }

    /// Checks structural invariants. Returns human-readable warnings for
    /// conditions that are legal but suspicious (sigma > 1 breaks the
    /// usual calibration-by-sample-size reading sigma = n^{-1/2};
    /// sigma = 0 makes the observation deterministic).
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.d == 0 {
            return Err(Error::invalid("dimension d must be at least 1"));
        }
        if self.v.len() != self.d {
            return Err(Error::invalid(format!(
                "mean vector has length {} but d = {}",
                self.v.len(),
                self.d
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::invalid(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        if self.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("mean vector contains non-finite entries"));
        }
        let mut warnings = Vec::new();
        if self.sigma > 1.0 {
            warnings.push(format!(
                "sigma = {} exceeds 1; the sample-size reading sigma = n^(-1/2) no longer applies",
                self.sigma
            ));
        }
        if self.sigma == 0.0 {
            warnings.push("sigma = 0: observations are deterministic".to_string());
        }
        Ok(warnings)
    }
}

/// Multinomial model: n independent draws from a probability vector.
#[derive(Clone, Debug)]
pub struct MultinomialSpec {
    pub n: u64,
    pub probs: Vec<f64>,
}

impl MultinomialSpec {
    pub fn new(n: u64, probs: Vec<f64>) -> Result<Self> {
        let s = MultinomialSpec { n, probs };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("multinomial needs n >= 1 draws"));
        }
        if self.probs.is_empty() {
            return Err(Error::invalid("probability vector is empty"));
        }
        if self.probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and nonnegative"));
        }
        let total = sum_neumaier(self.probs.iter().copied());
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, expected 1 within 1e-10"
            )));
        }
        Ok(())
    }
}

/// Independent Poisson counts with given intensities.
#[derive(Clone, Debug)]
pub struct PoissonSpec {
    pub intensities: Vec<f64>,
}

impl PoissonSpec {
    pub fn new(intensities: Vec<f64>) -> Result<Self> {
        let s = PoissonSpec { intensities };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intensities.is_empty() {
            return Err(Error::invalid("intensity vector is empty"));
        }
        if self.intensities.iter().any(|&l| !l.is_finite() || l < 0.0) {
            return Err(Error::invalid("intensities must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Raw functional data before a finite-dimensional reduction.
#[derive(Clone, Debug)]
pub enum FunctionSample {
    /// Discretized white-noise path on [0,1]: increments[i] integrates the
    /// signal over [i/m, (i+1)/m) plus sigma * sqrt(1/m) noise.
    WhiteNoise {
        m: usize,
        increments: Vec<f64>,
        sigma: f64,
    },
    /// Raw i.i.d. observations from a density on [0,1].
    Density { observations: Vec<f64> },
}

/// Reference density on [0,1] against which density samples are tested.
#[derive(Clone)]
pub enum ReferenceDensity {
    Uniform,
    /// Cumulative distribution function; must map [0,1] onto [0,1].
    Cdf(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for ReferenceDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReferenceDensity::Uniform => write!(f, "Uniform"),
            ReferenceDensity::Cdf(_) => write!(f, "Cdf(..)"),
        }
    }
}

/// Reproducible RNG handle: a master seed plus a stream index. The pair
/// fully determines the random draws, independent of thread scheduling,
/// so experiments can use common random numbers across design points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64) -> Self {
        RandomStream { master_seed, stream_index: 0 }
    }

    pub fn with_stream(master_seed: u64, stream_index: u64) -> Self {
        RandomStream { master_seed, stream_index }
    }

    /// Derive a child stream for (tag, rep). Children with distinct
    /// (tag, rep) pairs are independent for all practical purposes.
    pub fn substream(&self, tag: u64, rep: u64) -> Self {
        RandomStream {
            master_seed: self.master_seed,
            stream_index: derive_stream(self.stream_index, tag, rep),
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// l_p norm (quasi-norm for p < 1, max-norm for p = infinity).
pub fn norm_lp(v: &[f64], p: f64) -> f64 {
    assert!(p > 0.0, "norm_lp needs p > 0");
    if p.is_infinite() {
        return v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    }
    if p == 1.0 {
        return sum_neumaier(v.iter().map(|&x| x.abs()));
    }
    if p == 2.0 {
        return sum_neumaier(v.iter().map(|&x| x * x)).sqrt();
    }
    sum_neumaier(v.iter().map(|&x| x.abs().powf(p))).powf(1.0 / p)
}

/// Draw x = v + sigma * Z with Z standard normal, using the given rng.
pub fn draw_gaussian(v: &[f64], sigma: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    v.iter()
        .map(|&vi| {
            let z: f64 = StandardNormal.sample(rng);
            vi + sigma * z
        })
        .collect()
}

/// Multinomial draw via the conditional-binomial chain: cell i receives
/// Binomial(remaining, p_i / remaining_mass) counts. Exact and O(d).
pub fn draw_multinomial(n: u64, probs: &[f64], rng: &mut ChaCha12Rng) -> Vec<u64> {
    let d = probs.len();
    let mut counts = vec![0u64; d];
    let mut remaining = n;
    let mut mass_left = 1.0f64;
    for i in 0..d.saturating_sub(1) {
        if remaining == 0 {
            break;
        }
        let p = if mass_left <= 0.0 {
            0.0
        } else {
            (probs[i] / mass_left).clamp(0.0, 1.0)
        };
        let c = if p >= 1.0 {
            remaining
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(remaining, p).expect("validated probability").sample(rng)
        };
        counts[i] = c;
        remaining -= c;
        mass_left -= probs[i];
    }
    counts[d - 1] = remaining;
    counts
}

/// Independent Poisson draws.
pub fn draw_poisson(intensities: &[f64], rng: &mut ChaCha12Rng) -> Vec<u64> {
    intensities
        .iter()
        .map(|&l| {
            if l <= 0.0 {
                0
            } else {
                let x: f64 = Poisson::new(l).expect("validated intensity").sample(rng);
                x.round() as u64
            }
        })
        .collect()
}

/// Validated sampling front-ends.
pub fn sample_gaussian_sequence(spec: &GaussianSequenceSpec, stream: &RandomStream) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(draw_gaussian(&spec.v, spec.sigma, &mut stream.rng()))
}

pub fn sample_multinomial(spec: &MultinomialSpec, stream: &RandomStream) -> Result<Vec<u64>> {
    spec.validate()?;
    Ok(draw_multinomial(spec.n, &spec.probs, &mut stream.rng()))
}

pub fn sample_poisson_counts(spec: &PoissonSpec, stream: &RandomStream) -> Result<Vec<u64>> {
    spec.validate()?;
    Ok(draw_poisson(&spec.intensities, &mut stream.rng()))
}
