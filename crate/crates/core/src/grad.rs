//! Analytic gradients of `log VS_q` and the Vendi force.
//!
//! `log VS_q` is a spectral function of the normalized kernel, so its
//! gradient with respect to the kernel entries is `U diag(f'(λ)) U^T`:
//!
//! * `q ∉ {1, ∞}`: `f'(λ) = q λ^(q-1) / ((1 - q) Σ λ^q)`
//! * `q = 1`: `f'(λ) = -(log λ + 1)`
//! * `q = ∞`: `-(1 / λ_max) u₁ u₁^T`
//!
//! restricted to the support. Positions enter through the kernel entries,
//! `∂ log VS / ∂x_i = (2 / C) Σ_{b≠i} G_ib ∂k(x_i, x_b)/∂x_i`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{Item, Kernel};
use crate::scores::{log_power_sum, log_renyi, Order};
use crate::spectrum::{self, SpectralDecomposition};

/// Relative gap `(λ₁ - λ₂) / λ₁` below which the top eigenvalue is treated
/// as degenerate for `q = ∞`.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Denominator floor of the finite-difference relative error.
pub const FD_ABS_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct KernelGradient {
    /// `∂ log VS_q / ∂K̃`, symmetric.
    pub matrix: DMatrix<f64>,
    /// `q = ∞` only: the top eigenvalue was degenerate and the gradient is
    /// the eigenspace-averaged subgradient.
    pub degenerate_top: bool,
}

#[derive(Debug, Clone)]
pub struct GradientReport {
    pub q: Order,
    pub log_score: f64,
    pub dlog_dk: DMatrix<f64>,
    /// Row `i` is `∂ log VS_q / ∂x_i`.
    pub position_gradients: DMatrix<f64>,
    pub degenerate_top: bool,
}

/// Relative gap between the two largest eigenvalues (infinite for C = 1).
pub fn top_gap(d: &SpectralDecomposition) -> f64 {
    let l = d.spectrum().eigenvalues();
    if l.len() < 2 {
        return f64::INFINITY;
    }
    (l[0] - l[1]) / l[0]
}

pub fn grad_log_vs_wrt_kernel(d: &SpectralDecomposition, q: Order) -> KernelGradient {
    let s = d.spectrum();
    let u = d.eigenvectors();
    let support = s.support();
    let c = u.nrows();
    let mut weights = vec![0.0; support.len()];
    let mut degenerate_top = false;

    let qv = q.value();
    if qv == 0.0 {
        // VS_0 is the support size: locally constant.
    } else if q.is_infinite() {
        let lambda_max = support[0];
        let top: usize =
            support.iter().take_while(|&&l| (lambda_max - l) / lambda_max < DEGENERACY_GAP).count();
        degenerate_top = top > 1;
        for w in weights.iter_mut().take(top) {
            *w = -1.0 / (lambda_max * top as f64);
        }
    } else if q.is_shannon() {
        for (w, &l) in weights.iter_mut().zip(support) {
            *w = -(l.ln() + 1.0);
        }
    } else {
        let log_sum = log_power_sum(support, qv);
        let scale = qv / (1.0 - qv);
        for (w, &l) in weights.iter_mut().zip(support) {
            *w = scale * ((qv - 1.0) * l.ln() - log_sum).exp();
        }
    }

    let mut g = DMatrix::zeros(c, c);
    for (k, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            let col = u.column(k);
            g.ger(w, &col, &col, 1.0);
        }
    }
    let gt = g.transpose();
    KernelGradient { matrix: (g + gt) * 0.5, degenerate_top }
}

fn rows_as_items(positions: &DMatrix<f64>) -> Vec<Item> {
    positions.row_iter().map(|r| Item::Vector(r.iter().copied().collect())).collect()
}

fn check_positions(positions: &DMatrix<f64>) -> Result<()> {
    if positions.nrows() == 0 || positions.ncols() == 0 {
        return Err(Error::EmptyCollection);
    }
    if positions.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// `log VS_q` of replica positions (rows), without clamping to the
/// effective-number range.
pub fn log_vendi_score(positions: &DMatrix<f64>, kernel: &Kernel, q: Order, support_tol: f64) -> Result<f64> {
    check_positions(positions)?;
    let kn = spectrum::normalize(&kernel.matrix(&rows_as_items(positions))?)?;
    let s = spectrum::eigenvalues(&kn, support_tol)?;
    Ok(log_renyi(s.support(), q))
}

pub fn log_vs_gradient(
    positions: &DMatrix<f64>,
    kernel: &Kernel,
    q: Order,
    support_tol: f64,
) -> Result<GradientReport> {
    check_positions(positions)?;
    if !matches!(kernel, Kernel::Rbf { .. } | Kernel::Ratio1d) {
        return Err(Error::NotDifferentiable(kernel.name()));
    }
    let kn = spectrum::normalize(&kernel.matrix(&rows_as_items(positions))?)?;
    let decomposition = spectrum::decompose(&kn, support_tol)?;
    let log_score = log_renyi(decomposition.spectrum().support(), q);
    let KernelGradient { matrix: g, degenerate_top } = grad_log_vs_wrt_kernel(&decomposition, q);

    let (r, d) = positions.shape();
    let scale = 2.0 / r as f64;
    let mut grads = DMatrix::zeros(r, d);
    let rows: Vec<Vec<f64>> = positions.row_iter().map(|row| row.iter().copied().collect()).collect();
    for i in 0..r {
        for b in 0..r {
            if b == i || g[(i, b)] == 0.0 {
                continue;
            }
            let dk = kernel.position_gradient(&rows[i], &rows[b])?;
            for (j, v) in dk.iter().enumerate() {
                grads[(i, j)] += scale * g[(i, b)] * v;
            }
        }
    }
    Ok(GradientReport { q, log_score, dlog_dk: g, position_gradients: grads, degenerate_top })
}

/// `nu * ∂ log VS_q / ∂x` for every replica.
pub fn vendi_force(
    positions: &DMatrix<f64>,
    kernel: &Kernel,
    q: Order,
    nu: f64,
    support_tol: f64,
) -> Result<DMatrix<f64>> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::InvalidParameter(format!("force coefficient must be >= 0, got {nu}")));
    }
    if nu == 0.0 {
        check_positions(positions)?;
        return Ok(DMatrix::zeros(positions.nrows(), positions.ncols()));
    }
    Ok(log_vs_gradient(positions, kernel, q, support_tol)?.position_gradients * nu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdCheck {
    Checked { max_rel_error: f64 },
    /// `q = ∞` at a degenerate top eigenvalue, where `log VS` has no gradient.
    SkippedDegenerate { relative_gap: f64 },
}

/// Compares the analytic position gradient against central differences of
/// `log VS_q` and returns the worst per-coordinate relative error.
pub fn check_gradient_fd(
    positions: &DMatrix<f64>,
    kernel: &Kernel,
    q: Order,
    h: f64,
    support_tol: f64,
) -> Result<FdCheck> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidParameter(format!("step must be in [1e-7, 1e-3], got {h}")));
    }
    let report = log_vs_gradient(positions, kernel, q, support_tol)?;
    if report.degenerate_top {
        let kn = spectrum::normalize(&kernel.matrix(&rows_as_items(positions))?)?;
        let relative_gap = top_gap(&spectrum::decompose(&kn, support_tol)?);
        return Ok(FdCheck::SkippedDegenerate { relative_gap });
    }
    let mut worst: f64 = 0.0;
    let mut probe = positions.clone();
    for i in 0..positions.nrows() {
        for j in 0..positions.ncols() {
            let x = positions[(i, j)];
            probe[(i, j)] = x + h;
            let plus = log_vendi_score(&probe, kernel, q, support_tol)?;
            probe[(i, j)] = x - h;
            let minus = log_vendi_score(&probe, kernel, q, support_tol)?;
            probe[(i, j)] = x;
            let fd = (plus - minus) / (2.0 * h);
            let analytic = report.position_gradients[(i, j)];
            worst = worst.max((analytic - fd).abs() / fd.abs().max(FD_ABS_FLOOR));
        }
    }
    Ok(FdCheck::Checked { max_rel_error: worst })
}
