//! Overdamped Langevin dynamics of a replica ensemble with an annealed
//! Vendi force, on a two-dimensional double well.
//!
//! Each step (Euler-Maruyama, unit friction, `β = 1`) is
//!
//! ```text
//! x_i <- x_i - ∇u(x_i) Δt + ν(t) ∇_{x_i} log VS_q Δt + sqrt(2 Δt) ξ_i
//! ```
//!
//! with `ν(t) = ν₀ max(0, 1 - rate t)`. Only samples recorded after `ν`
//! has reached zero are unbiased and may enter free-energy estimates.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::vendi_force;
use crate::kernels::Kernel;
use crate::scores::Order;
use crate::spectrum::DEFAULT_SUPPORT_TOL;

pub type Position = [f64; 2];

/// `u(x, y) = (a/4) x⁴ + (b/2) x² + c x + y²/2`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potential {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Potential {
    fn default() -> Self {
        Potential { a: 1.0, b: -6.0, c: 1.0 }
    }
}

impl Potential {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let p = Potential { a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::InvalidParameter(format!("quartic coefficient must be > 0, got {}", self.a)));
        }
        if !(self.b.is_finite() && self.b < 0.0) {
            return Err(Error::InvalidParameter(format!("quadratic coefficient must be < 0, got {}", self.b)));
        }
        if !self.c.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn energy(&self, [x, y]: Position) -> f64 {
        let x2 = x * x;
        0.25 * self.a * x2 * x2 + 0.5 * self.b * x2 + self.c * x + 0.5 * y * y
    }

    pub fn gradient(&self, [x, y]: Position) -> Position {
        [self.a * x * x * x + self.b * x + self.c, y]
    }

    /// Boltzmann weight `exp(-u)`.
    fn weight(&self, pos: Position) -> f64 {
        (-self.energy(pos)).exp()
    }
}

/// The two boxes separated by `x = 0`: `left = [-x_extent, 0] x [-y_extent, y_extent]`,
/// `right = (0, x_extent] x [-y_extent, y_extent]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regions {
    pub x_extent: f64,
    pub y_extent: f64,
}

impl Default for Regions {
    fn default() -> Self {
        Regions { x_extent: 2.5, y_extent: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Regions {
    pub fn classify(&self, [x, y]: Position) -> Option<Side> {
        if y.abs() > self.y_extent || x.abs() > self.x_extent {
            return None;
        }
        Some(if x > 0.0 { Side::Right } else { Side::Left })
    }
}

/// Coordinates the similarity kernel sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFeature {
    /// The x-coordinate only, i.e. the direction across the barrier.
    #[default]
    X,
    Xy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub replicas: usize,
    pub step_size: f64,
    pub total_steps: u64,
    /// Initial Vendi-force coefficient.
    pub nu0: f64,
    /// Fraction of `nu0` removed per step.
    pub anneal_rate: f64,
    pub q: Order,
    pub kernel: Kernel,
    #[serde(default)]
    pub kernel_feature: KernelFeature,
    /// Replicas start uniformly in `[lo, hi]²`.
    pub init_box: (f64, f64),
    pub seed: u64,
    pub record_stride: u64,
    #[serde(default)]
    pub potential: Potential,
    #[serde(default = "default_support_tol")]
    pub support_tol: f64,
}

fn default_support_tol() -> f64 {
    DEFAULT_SUPPORT_TOL
}

/// Force coefficient and annealing rate tuned per order; `None` for orders
/// without a tuned schedule.
pub fn tuned_schedule(q: Order) -> Option<(f64, f64)> {
    let v = q.value();
    if v == 0.1 || q.is_infinite() {
        Some((50.0, 1.0 / 50_000.0))
    } else if v == 0.5 || v == 1.0 {
        Some((100.0, 1.0 / 100_000.0))
    } else if v == 1.5 || v == 2.0 {
        Some((50.0, 1.0 / 25_000.0))
    } else {
        None
    }
}

pub const DESK_STEPS: u64 = 200_000;
pub const DESK_RATE_SCALE: f64 = 10.0;

impl SamplerConfig {
    /// Full-length protocol: 16 replicas, `Δt = 10⁻²`, 2·10⁶ steps, ratio
    /// kernel on x, tuned schedule for `q`.
    pub fn full_scale(q: Order, seed: u64) -> Result<Self> {
        let (nu0, anneal_rate) = tuned_schedule(q).ok_or_else(|| {
            Error::InvalidParameter(format!("no tuned force schedule for q = {q}"))
        })?;
        Ok(SamplerConfig {
            replicas: 16,
            step_size: 1e-2,
            total_steps: 2_000_000,
            nu0,
            anneal_rate,
            q,
            kernel: Kernel::Ratio1d,
            kernel_feature: KernelFeature::X,
            init_box: (-2.5, 2.5),
            seed,
            record_stride: 100,
            potential: Potential::default(),
            support_tol: DEFAULT_SUPPORT_TOL,
        })
    }

    /// Shortened protocol: 2·10⁵ steps with the annealing rate scaled by 10
    /// so that the biased phase keeps the same share of the run.
    pub fn desk_scale(q: Order, seed: u64) -> Result<Self> {
        let mut cfg = Self::full_scale(q, seed)?;
        cfg.total_steps = DESK_STEPS;
        cfg.anneal_rate *= DESK_RATE_SCALE;
        Ok(cfg)
    }

    /// Same run without the Vendi force.
    pub fn unbiased(&self) -> Self {
        SamplerConfig { nu0: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.replicas == 0 {
            return bad("at least one replica is required".into());
        }
        if self.nu0 > 0.0 && self.replicas < 2 {
            return bad("the Vendi force needs at least two replicas".into());
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if !(self.nu0.is_finite() && self.nu0 >= 0.0) {
            return bad(format!("nu0 must be >= 0, got {}", self.nu0));
        }
        if !(self.anneal_rate.is_finite() && self.anneal_rate >= 0.0) {
            return bad(format!("annealing rate must be >= 0, got {}", self.anneal_rate));
        }
        let (lo, hi) = self.init_box;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("invalid initialization box [{lo}, {hi}]"));
        }
        if self.record_stride == 0 {
            return bad("record stride must be >= 1".into());
        }
        if self.nu0 > 0.0 {
            if !matches!(self.kernel, Kernel::Rbf { .. } | Kernel::Ratio1d) {
                return Err(Error::NotDifferentiable(self.kernel.name()));
            }
            if self.kernel == Kernel::Ratio1d && self.kernel_feature != KernelFeature::X {
                return bad("the ratio kernel only applies to the x-coordinate".into());
            }
        }
        self.kernel.validate()?;
        self.potential.validate()
    }

    pub fn nu_at(&self, step: u64) -> f64 {
        self.nu0 * (1.0 - self.anneal_rate * step as f64).max(0.0)
    }

    /// First step from which the force is zero for good.
    pub fn annealing_end(&self) -> Option<u64> {
        if self.nu0 == 0.0 {
            return Some(0);
        }
        if self.anneal_rate == 0.0 {
            return None;
        }
        let mut t = (1.0 / self.anneal_rate).floor() as u64;
        while self.nu_at(t) > 0.0 {
            t += 1;
        }
        while t > 0 && self.nu_at(t - 1) == 0.0 {
            t -= 1;
        }
        Some(t)
    }
}

/// Source of standard-normal increments.
pub trait Noise {
    fn standard_normal(&mut self) -> f64;
}

pub struct GaussianNoise<R: Rng>(pub R);

impl<R: Rng> Noise for GaussianNoise<R> {
    fn standard_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}

/// Deterministic dynamics (pure drift).
pub struct ZeroNoise;

impl Noise for ZeroNoise {
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

fn kernel_positions(state: &[Position], feature: KernelFeature) -> DMatrix<f64> {
    match feature {
        KernelFeature::X => DMatrix::from_fn(state.len(), 1, |i, _| state[i][0]),
        KernelFeature::Xy => DMatrix::from_fn(state.len(), 2, |i, j| state[i][j]),
    }
}

/// One Euler-Maruyama update of every replica at step `t`.
pub fn langevin_step(
    state: &[Position],
    t: u64,
    cfg: &SamplerConfig,
    noise: &mut impl Noise,
) -> Result<Vec<Position>> {
    let nu = cfg.nu_at(t);
    let force = if nu > 0.0 {
        Some(vendi_force(
            &kernel_positions(state, cfg.kernel_feature),
            &cfg.kernel,
            cfg.q,
            nu,
            cfg.support_tol,
        )?)
    } else {
        None
    };
    let dt = cfg.step_size;
    let diffusion = (2.0 * dt).sqrt();
    state
        .iter()
        .enumerate()
        .map(|(i, &pos)| {
            let grad = cfg.potential.gradient(pos);
            let mut next = [0.0; 2];
            for j in 0..2 {
                let bias = match &force {
                    Some(f) if j < f.ncols() => f[(i, j)],
                    _ => 0.0,
                };
                next[j] = pos[j] + (bias - grad[j]) * dt + diffusion * noise.standard_normal();
            }
            if next.iter().all(|x| x.is_finite()) {
                Ok(next)
            } else {
                Err(Error::Diverged { step: t, replica: i })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub step: u64,
    /// Force coefficient of the update that produced this state.
    pub nu: f64,
    pub positions: Vec<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub config: SamplerConfig,
    pub records: Vec<Record>,
}

impl Trajectory {
    /// First recorded step whose state was produced without any force.
    pub fn unbiased_from(&self) -> Option<u64> {
        let last_biased = self.records.iter().rposition(|r| r.nu > 0.0);
        match last_biased {
            None => self.records.first().map(|r| r.step),
            Some(i) => self.records.get(i + 1).map(|r| r.step),
        }
    }
}

pub fn run_vendi_sampling(cfg: &SamplerConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.init_box;
    let mut state: Vec<Position> =
        (0..cfg.replicas).map(|_| [rng.random_range(lo..hi), rng.random_range(lo..hi)]).collect();
    let mut noise = GaussianNoise(rng);

    let capacity = (cfg.total_steps / cfg.record_stride) as usize + 1;
    let mut records = Vec::with_capacity(capacity);
    records.push(Record { step: 0, nu: cfg.nu_at(0), positions: state.clone() });
    for t in 0..cfg.total_steps {
        state = langevin_step(&state, t, cfg, &mut noise)?;
        if (t + 1) % cfg.record_stride == 0 {
            records.push(Record { step: t + 1, nu: cfg.nu_at(t), positions: state.clone() });
        }
    }
    Ok(Trajectory { config: cfg.clone(), records })
}

/// Cumulative number of boundary crossings (`x = 0`, with `x <= 0` on the
/// left) between consecutive records, summed over replicas.
pub fn count_transitions(traj: &Trajectory) -> Vec<u64> {
    let mut total = 0;
    let mut out = Vec::with_capacity(traj.records.len());
    out.push(0);
    for pair in traj.records.windows(2) {
        total += pair[0]
            .positions
            .iter()
            .zip(&pair[1].positions)
            .filter(|(a, b)| (a[0] > 0.0) != (b[0] > 0.0))
            .count() as u64;
        out.push(total);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEnergyEstimate {
    /// `-log(n_right / n_left)`, in units of `k_B T`.
    pub free_energy: f64,
    /// Binomial standard error `1/sqrt(n p (1-p))`, treating samples as
    /// independent.
    pub std_error: f64,
    /// Batch-means standard error, which accounts for autocorrelation; NaN
    /// with fewer than two records.
    pub batch_std_error: f64,
    pub n_right: u64,
    pub n_left: u64,
    /// Steps `[start, end)` the samples were drawn from.
    pub window: (u64, u64),
}

const BATCHES: usize = 20;

/// Free-energy difference between the right and left regions from the
/// records with `step` in `window`, pooled over replicas.
pub fn free_energy_difference(
    traj: &Trajectory,
    window: Range<u64>,
    regions: &Regions,
) -> Result<FreeEnergyEstimate> {
    let selected: Vec<&Record> = traj.records.iter().filter(|r| window.contains(&r.step)).collect();
    if let Some(r) = selected.iter().find(|r| r.nu > 0.0) {
        return Err(Error::BiasedWindow { step: r.step, nu: r.nu });
    }
    let counts: Vec<(u64, u64)> = selected
        .iter()
        .map(|r| {
            r.positions.iter().fold((0, 0), |(right, left), &p| match regions.classify(p) {
                Some(Side::Right) => (right + 1, left),
                Some(Side::Left) => (right, left + 1),
                None => (right, left),
            })
        })
        .collect();
    let n_right: u64 = counts.iter().map(|c| c.0).sum();
    let n_left: u64 = counts.iter().map(|c| c.1).sum();
    if n_right == 0 {
        return Err(Error::EmptyRegion { region: "right" });
    }
    if n_left == 0 {
        return Err(Error::EmptyRegion { region: "left" });
    }
    let p = n_right as f64 / (n_right + n_left) as f64;
    Ok(FreeEnergyEstimate {
        free_energy: -(n_right as f64 / n_left as f64).ln(),
        std_error: 1.0 / ((n_right + n_left) as f64 * p * (1.0 - p)).sqrt(),
        batch_std_error: batch_std_error(&counts, p),
        n_right,
        n_left,
        window: (window.start, window.end),
    })
}

fn batch_std_error(counts: &[(u64, u64)], p: f64) -> f64 {
    let batches = BATCHES.min(counts.len());
    if batches < 2 {
        return f64::NAN;
    }
    let size = counts.len() / batches;
    let fractions: Vec<f64> = counts
        .chunks(size)
        .take(batches)
        .map(|chunk| {
            let (r, l) = chunk.iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
            if r + l == 0 {
                p
            } else {
                r as f64 / (r + l) as f64
            }
        })
        .collect();
    let n = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt() / (p * (1.0 - p))
}

/// `-log(Z_right / Z_left)` with `Z = ∫∫ exp(-u)` over each box, by tensor
/// composite Simpson quadrature refined until successive Richardson error
/// estimates fall below `1e-8`.
pub fn free_energy_oracle(p: &Potential, regions: &Regions) -> Result<f64> {
    p.validate()?;
    let (xe, ye) = (regions.x_extent, regions.y_extent);
    if !(xe > 0.0 && ye > 0.0 && xe.is_finite() && ye.is_finite()) {
        return Err(Error::InvalidParameter("region extents must be positive".into()));
    }
    let estimate = |n: usize| {
        let right = simpson_2d(|x, y| p.weight([x, y]), (0.0, xe), (-ye, ye), n);
        let left = simpson_2d(|x, y| p.weight([x, y]), (-xe, 0.0), (-ye, ye), n);
        -(right / left).ln()
    };
    let mut n = 32;
    let mut previous = estimate(n);
    let mut change = f64::INFINITY;
    while n < 8192 {
        n *= 2;
        let current = estimate(n);
        change = (current - previous).abs();
        previous = current;
        if change / 15.0 < 1e-8 {
            return Ok(current);
        }
    }
    Err(Error::QuadratureNotConverged { change })
}

/// Composite Simpson rule on an `n x n` grid of panels (`n` even).
fn simpson_2d(f: impl Fn(f64, f64) -> f64, (x0, x1): (f64, f64), (y0, y1): (f64, f64), n: usize) -> f64 {
    let hx = (x1 - x0) / n as f64;
    let hy = (y1 - y0) / n as f64;
    let w = |i: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut total = 0.0;
    for i in 0..=n {
        let x = x0 + i as f64 * hx;
        let mut row = 0.0;
        for j in 0..=n {
            row += w(j) * f(x, y0 + j as f64 * hy);
        }
        total += w(i) * row;
    }
    total * hx * hy / 9.0
}
