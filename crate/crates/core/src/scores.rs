//! Hill numbers and Vendi scores of arbitrary order.
//!
//! Both are exponentials of a Rényi entropy: the Hill number over a known
//! abundance vector, the Vendi score over the eigenvalues of a normalized
//! similarity matrix. All non-limit orders are evaluated in log space.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernels::{Item, Kernel, UNIT_NORM_TOL};
use crate::spectrum::{self, KernelMatrix, Spectrum, SpectrumSummary};

/// Orders closer than this to 1 use the Shannon form.
pub const SHANNON_SWITCH: f64 = 1e-8;

/// Accepted deviation of an abundance vector's total from 1.
pub const ABUNDANCE_SUM_TOL: f64 = 1e-10;

/// Sensitivity order `q >= 0`, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Order(f64);

impl Order {
    pub const ZERO: Order = Order(0.0);
    pub const SHANNON: Order = Order(1.0);
    pub const INFINITY: Order = Order(f64::INFINITY);

    pub fn new(q: f64) -> Result<Self> {
        if q.is_nan() || q < 0.0 || q == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter(format!("order must be >= 0, got {q}")));
        }
        Ok(Order(q))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_shannon(self) -> bool {
        (self.0 - 1.0).abs() < SHANNON_SWITCH
    }
}

impl PartialOrd for Order {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.0.total_cmp(&other.0))
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => return Ok(Order::INFINITY),
            _ if t == "∞" => return Ok(Order::INFINITY),
            _ => {}
        }
        let q: f64 = t
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("cannot parse order '{s}'")))?;
        Order::new(q)
    }
}

impl Serialize for Order {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Order {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let order = match Raw::deserialize(d)? {
            Raw::Num(q) => Order::new(q),
            Raw::Text(s) => s.parse(),
        };
        order.map_err(serde::de::Error::custom)
    }
}

/// How a score was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    /// Rayleigh-Ritz projection onto `m` orthogonalized embedding directions.
    Projected(usize),
    /// Score of an `m`-item random sub-collection.
    Subsampled(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Exact => f.write_str("exact"),
            Method::Projected(m) => write!(f, "projected({m})"),
            Method::Subsampled(m) => write!(f, "subsampled({m})"),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub q: Order,
    pub score: f64,
    pub support_count: usize,
    pub method: Method,
    pub spectrum_summary: SpectrumSummary,
    /// Set for `q = 0`, which only counts the support.
    pub uninformative: bool,
}

/// `exp(H_q(w))` over the weights above `support_tol * max(w)`.
pub fn renyi_exponential(weights: &[f64], q: Order, support_tol: f64) -> Result<f64> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights);
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidWeights);
    }
    let threshold = support_tol * max;
    let support: Vec<f64> = weights.iter().copied().filter(|&w| w > threshold).collect();
    Ok(exp_renyi(&support, q))
}

fn exp_renyi(support: &[f64], q: Order) -> f64 {
    if q.value() == 0.0 {
        support.len() as f64
    } else {
        log_renyi(support, q).exp()
    }
}

/// Log of the Rényi exponential over strictly positive support weights.
pub(crate) fn log_renyi(support: &[f64], q: Order) -> f64 {
    let q = q.value();
    if q == 0.0 {
        return (support.len() as f64).ln();
    }
    if q.is_infinite() {
        let max = support.iter().copied().fold(0.0, f64::max);
        return -max.ln();
    }
    if (q - 1.0).abs() < SHANNON_SWITCH {
        return -support.iter().map(|&w| w * w.ln()).sum::<f64>();
    }
    log_power_sum(support, q) / (1.0 - q)
}

/// `log Σ w^q`, accumulated as a log-sum-exp.
pub(crate) fn log_power_sum(support: &[f64], q: f64) -> f64 {
    let max_term = support.iter().map(|&w| q * w.ln()).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = support.iter().map(|&w| (q * w.ln() - max_term).exp()).sum();
    max_term + sum.ln()
}

/// Hill number of an abundance vector; zero entries are outside the support.
pub fn hill_number(p: &[f64], q: Order) -> Result<f64> {
    if p.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights);
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ABUNDANCE_SUM_TOL {
        return Err(Error::NotNormalized { sum });
    }
    renyi_exponential(p, q, 0.0)
}

/// Hill numbers of an abundance vector in report form; the summary
/// describes the abundances and the support is the nonzero entries.
pub fn abundance_profile(p: &[f64], qs: &[Order]) -> Result<Vec<ScoreReport>> {
    if qs.is_empty() {
        return Err(Error::InvalidParameter("at least one order is required".into()));
    }
    if p.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let support_count = p.iter().filter(|&&w| w > 0.0).count();
    let summary = SpectrumSummary {
        lambda_max: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lambda_min: p.iter().copied().fold(f64::INFINITY, f64::min),
        trace: p.iter().sum(),
    };
    qs.iter()
        .map(|&q| {
            Ok(ScoreReport {
                q,
                score: hill_number(p, q)?,
                support_count,
                method: Method::Exact,
                spectrum_summary: summary,
                uninformative: q.value() == 0.0,
            })
        })
        .collect()
}

pub fn vendi_score_from_spectrum(s: &Spectrum, q: Order) -> ScoreReport {
    report(s, q, Method::Exact)
}

fn report(s: &Spectrum, q: Order, method: Method) -> ScoreReport {
    let support_count = s.support_count();
    let raw = exp_renyi(s.support(), q);
    // The support drops at most support_tol-sized mass; only round-off can
    // push the value outside [1, support_count].
    let score = raw.clamp(1.0, support_count as f64);
    ScoreReport {
        q,
        score,
        support_count,
        method,
        spectrum_summary: s.summary(),
        uninformative: q.value() == 0.0,
    }
}

fn profile(s: &Spectrum, qs: &[Order], method: Method) -> Result<Vec<ScoreReport>> {
    if qs.is_empty() {
        return Err(Error::InvalidParameter("at least one order is required".into()));
    }
    Ok(qs.iter().map(|&q| report(s, q, method)).collect())
}

pub fn vendi_score_from_kernel(k: &KernelMatrix, q: Order, support_tol: f64) -> Result<ScoreReport> {
    let s = spectrum::eigenvalues(&spectrum::normalize(k)?, support_tol)?;
    Ok(report(&s, q, Method::Exact))
}

pub fn vendi_score(items: &[Item], kernel: &Kernel, q: Order, support_tol: f64) -> Result<ScoreReport> {
    vendi_score_from_kernel(&kernel.matrix(items)?, q, support_tol)
}

/// Scores for several orders from one eigendecomposition. Reports follow
/// the order of `qs`.
pub fn score_profile(
    items: &[Item],
    kernel: &Kernel,
    qs: &[Order],
    support_tol: f64,
) -> Result<Vec<ScoreReport>> {
    kernel_profile(&kernel.matrix(items)?, qs, support_tol)
}

pub fn kernel_profile(k: &KernelMatrix, qs: &[Order], support_tol: f64) -> Result<Vec<ScoreReport>> {
    let s = spectrum::eigenvalues(&spectrum::normalize(k)?, support_tol)?;
    profile(&s, qs, Method::Exact)
}

pub fn spectrum_profile(s: &Spectrum, qs: &[Order]) -> Result<Vec<ScoreReport>> {
    profile(s, qs, Method::Exact)
}

/// Scores a random `m`-item sub-collection in place of the full one.
pub fn subsampled_profile(
    k: &KernelMatrix,
    qs: &[Order],
    m: usize,
    seed: u64,
    support_tol: f64,
) -> Result<Vec<ScoreReport>> {
    let c = k.size();
    let indices = spectrum::subsample_indices(c, m, seed)?;
    let full = k.as_matrix();
    let sub = DMatrix::from_fn(m, m, |i, j| full[(indices[i], indices[j])]);
    let s = spectrum::eigenvalues(&spectrum::normalize(&KernelMatrix::new(sub)?)?, support_tol)?;
    profile(&s, qs, Method::Subsampled(m))
}

pub fn vendi_score_subsampled(
    items: &[Item],
    kernel: &Kernel,
    q: Order,
    m: usize,
    seed: u64,
    support_tol: f64,
) -> Result<ScoreReport> {
    let indices = spectrum::subsample_indices(items.len(), m, seed)?;
    let subset: Vec<Item> = indices.iter().map(|&i| items[i].clone()).collect();
    let mut r = vendi_score(&subset, kernel, q, support_tol)?;
    r.method = Method::Subsampled(m);
    Ok(r)
}

/// Linear-kernel scores of unit-norm embedding rows without forming the
/// `N x N` kernel.
///
/// The column space of `E` is orthogonalized into `V` (`N x m`) and the
/// projected kernel `V^T E E^T V / N` is assembled in `O(N d m)`. With
/// `m = None` the whole column space is used and the result is exact;
/// a smaller `m` gives a Rayleigh-Ritz approximation.
pub fn embedding_profile(
    e: &DMatrix<f64>,
    qs: &[Order],
    m: Option<usize>,
    support_tol: f64,
) -> Result<Vec<ScoreReport>> {
    check_unit_rows(e)?;
    let (basis, method) = match m {
        None => (spectrum::embedding_range_basis(e)?, Method::Exact),
        Some(m) => (spectrum::orthogonalize_embeddings(e, m)?, Method::Projected(m)),
    };
    let coords = e.transpose() * basis.columns();
    let projected = coords.transpose() * &coords / e.nrows() as f64;
    let s = spectrum::spectrum_of_projection(projected, support_tol)?;
    profile(&s, qs, method)
}

pub fn vendi_score_from_embeddings(
    e: &DMatrix<f64>,
    q: Order,
    m: Option<usize>,
    support_tol: f64,
) -> Result<ScoreReport> {
    Ok(embedding_profile(e, &[q], m, support_tol)?.remove(0))
}

fn check_unit_rows(e: &DMatrix<f64>) -> Result<()> {
    if e.nrows() == 0 || e.ncols() == 0 {
        return Err(Error::EmptyCollection);
    }
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    for row in e.row_iter() {
        let norm = row.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotUnitNorm { norm });
        }
    }
    Ok(())
}
