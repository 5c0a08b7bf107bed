//! Exogenous inflow processes.
//!
//! Every flow draws from its own ChaCha stream keyed by `(seed, flow)`, so a
//! realised arrival path depends on the seed only and never on the control
//! parameters. That is what makes common-random-number comparisons valid.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::model::NUM_FLOWS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Piecewise-constant fluid rates, exact hitting times.
    Fluid,
    /// Unit arrivals at Poisson epochs, departures spaced `1/H`.
    Discrete,
}

/// Multiplies the rate of one flow by `factor` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatePerturbation {
    pub flow: usize,
    pub factor: f64,
    pub start: f64,
    pub end: f64,
}

impl RatePerturbation {
    fn factor_at(&self, flow: usize, t: f64) -> f64 {
        if flow == self.flow && t >= self.start && t < self.end {
            self.factor
        } else {
            1.0
        }
    }

    /// Length of `[0, t] ∩ [start, end)`.
    fn overlap(&self, t: f64) -> f64 {
        (t.min(self.end) - self.start).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProcessSpec {
    pub mode: SimMode,
    /// Mean arrival rate per flow, units per second.
    pub mean_rates: [f64; NUM_FLOWS],
    pub seed: u64,
    /// Mean length of a constant-rate segment in fluid mode.
    pub segment_mean: f64,
    pub perturbation: Option<RatePerturbation>,
}

pub const DEFAULT_SEGMENT_MEAN: f64 = 30.0;

impl ArrivalProcessSpec {
    pub fn new(mode: SimMode, mean_rates: [f64; NUM_FLOWS], seed: u64) -> Self {
        Self {
            mode,
            mean_rates,
            seed,
            segment_mean: DEFAULT_SEGMENT_MEAN,
            perturbation: None,
        }
    }

    /// Rates from mean inter-arrival times, e.g. `[5, 5, 20, 20]` seconds.
    pub fn from_interarrival(mode: SimMode, interarrival: [f64; NUM_FLOWS], seed: u64) -> Self {
        Self::new(mode, interarrival.map(|s| if s > 0.0 { 1.0 / s } else { 0.0 }), seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_perturbation(mut self, p: RatePerturbation) -> Self {
        self.perturbation = Some(p);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.mean_rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(format!("arrival rates must be finite and >= 0, got {:?}", self.mean_rates));
        }
        if !(self.segment_mean > 0.0) {
            return Err(format!("segment mean must be > 0, got {}", self.segment_mean));
        }
        if let Some(p) = &self.perturbation {
            if !(1..=NUM_FLOWS).contains(&p.flow) || !(p.factor >= 0.0) || !(p.end > p.start) {
                return Err(format!("invalid perturbation {p:?}"));
            }
        }
        Ok(())
    }

    fn rng(&self, flow: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(flow as u64);
        rng
    }

    pub fn fluid_path(&self, flow: usize) -> FluidRatePath {
        FluidRatePath::new(self.rng(flow), flow, self.mean_rates[flow - 1], self.segment_mean, self.perturbation)
    }

    pub fn poisson_stream(&self, flow: usize) -> PoissonArrivals {
        PoissonArrivals::new(self.rng(flow), flow, self.mean_rates[flow - 1], self.perturbation)
    }
}

/// Piecewise-constant rate: exponential segment lengths, rates uniform on
/// `[0, 2ᾱ]` so that the long-run mean equals `ᾱ`.
#[derive(Debug, Clone)]
pub struct FluidRatePath {
    rng: ChaCha8Rng,
    flow: usize,
    mean_rate: f64,
    seg_len: Exp<f64>,
    seg_end: f64,
    base: f64,
    perturbation: Option<RatePerturbation>,
}

impl FluidRatePath {
    fn new(
        rng: ChaCha8Rng,
        flow: usize,
        mean_rate: f64,
        segment_mean: f64,
        perturbation: Option<RatePerturbation>,
    ) -> Self {
        let mut path = Self {
            rng,
            flow,
            mean_rate,
            seg_len: Exp::new(1.0 / segment_mean).expect("positive segment mean"),
            seg_end: 0.0,
            base: 0.0,
            perturbation,
        };
        path.roll();
        path
    }

    fn roll(&mut self) {
        self.seg_end += self.seg_len.sample(&mut self.rng);
        self.base = 2.0 * self.mean_rate * self.rng.random::<f64>();
    }

    /// Moves the current segment forward so that it contains `t`.
    pub fn advance_to(&mut self, t: f64) {
        while self.seg_end <= t {
            self.roll();
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        let f = self.perturbation.map_or(1.0, |p| p.factor_at(self.flow, t));
        self.base * f
    }

    /// First time strictly after `t` at which the rate may change.
    pub fn next_change(&self, t: f64) -> f64 {
        let mut next = self.seg_end;
        if let Some(p) = self.perturbation.filter(|p| p.flow == self.flow) {
            for b in [p.start, p.end] {
                if b > t && b < next {
                    next = b;
                }
            }
        }
        next
    }
}

/// Poisson arrival epochs, optionally time-varying through a perturbation
/// window. Epochs come from a unit-rate process mapped through the inverse
/// cumulative intensity, so the perturbation does not reshuffle the random
/// stream.
#[derive(Debug, Clone)]
pub struct PoissonArrivals {
    rng: ChaCha8Rng,
    mean_rate: f64,
    perturbation: Option<RatePerturbation>,
    cumulative: f64,
    next: f64,
}

impl PoissonArrivals {
    fn new(rng: ChaCha8Rng, flow: usize, mean_rate: f64, perturbation: Option<RatePerturbation>) -> Self {
        let mut s = Self {
            rng,
            mean_rate,
            perturbation: perturbation.filter(|p| p.flow == flow),
            cumulative: 0.0,
            next: f64::INFINITY,
        };
        s.draw();
        s
    }

    fn draw(&mut self) {
        if self.mean_rate <= 0.0 {
            self.next = f64::INFINITY;
            return;
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        self.cumulative += e;
        self.next = self.invert(self.cumulative);
    }

    /// Time at which the expected number of arrivals reaches `lambda`.
    fn invert(&self, lambda: f64) -> f64 {
        let base = lambda / self.mean_rate;
        match self.perturbation {
            None => base,
            Some(p) => {
                // cumulative intensity in "base seconds": t + (f-1)·overlap(t)
                if base <= p.start {
                    base
                } else {
                    let in_window = p.start + (base - p.start) / p.factor.max(f64::MIN_POSITIVE);
                    if in_window <= p.end {
                        in_window
                    } else {
                        base - (p.factor - 1.0) * (p.end - p.start)
                    }
                }
            }
        }
    }

    pub fn peek(&self) -> f64 {
        self.next
    }

    pub fn pop(&mut self) -> f64 {
        let t = self.next;
        self.draw();
        t
    }

    /// Expected number of arrivals on `[0, t]`; used by tests.
    pub fn cumulative_intensity(&self, t: f64) -> f64 {
        let extra = self.perturbation.map_or(0.0, |p| (p.factor - 1.0) * p.overlap(t));
        self.mean_rate * (t + extra)
    }
}
