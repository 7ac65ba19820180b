//! Kernel normalization, eigenvalue spectra and Rayleigh-Ritz projections.
//!
//! A [`Spectrum`] only ever holds non-negative eigenvalues summing to one.
//! Small negative eigenvalues produced by round-off (at most
//! `support_tol * lambda_max` in magnitude) are clamped to zero; anything
//! more negative is reported as an indefinite kernel instead of being hidden.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default support threshold, relative to the largest eigenvalue.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-12;

/// Accepted deviation of a kernel diagonal from 1.
pub const DIAGONAL_TOL: f64 = 1e-9;

/// Accepted asymmetry of user-supplied kernel matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Accepted deviation from `V^T V = I` for projection bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Rank threshold of the embedding orthogonalization, relative to the
/// largest embedding column norm.
pub const RANK_TOL: f64 = 1e-10;

const TRACE_TOL: f64 = 1e-12;
const SPECTRUM_SUM_TOL: f64 = 1e-8;

/// Symmetric similarity matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(DMatrix<f64>);

impl KernelMatrix {
    /// Validates a user-supplied matrix. Slight asymmetry is averaged out.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::EmptyCollection);
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n = m.nrows();
        for i in 0..n {
            for j in i + 1..n {
                let deviation = (m[(i, j)] - m[(j, i)]).abs();
                if deviation > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { row: i, col: j, deviation });
                }
            }
        }
        check_unit_diagonal(&m)?;
        Ok(KernelMatrix(symmetrize(m)))
    }

    pub(crate) fn from_assembled(m: DMatrix<f64>) -> Self {
        KernelMatrix(m)
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

fn check_unit_diagonal(m: &DMatrix<f64>) -> Result<()> {
    for (index, &value) in m.diagonal().iter().enumerate() {
        if (value - 1.0).abs() > DIAGONAL_TOL {
            return Err(Error::NonUnitDiagonal { index, value });
        }
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Trace-one kernel `K / C`; plays the role of a density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedKernel(DMatrix<f64>);

impl NormalizedKernel {
    /// Wraps an arbitrary symmetric matrix of unit trace.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(Error::EmptyCollection);
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let trace = m.trace();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidParameter(format!("normalized kernel has trace {trace}")));
        }
        Ok(NormalizedKernel(symmetrize(m)))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn normalize(k: &KernelMatrix) -> Result<NormalizedKernel> {
    check_unit_diagonal(&k.0)?;
    let c = k.size() as f64;
    Ok(NormalizedKernel(&k.0 / c))
}

/// Descending, clamped eigenvalues of a normalized kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    support_tol: f64,
    support_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumSummary {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub trace: f64,
}

impl Spectrum {
    /// Builds a spectrum from raw eigenvalues of a trace-one matrix,
    /// applying the clamping policy.
    pub fn from_eigenvalues(mut values: Vec<f64>, support_tol: f64) -> Result<Self> {
        check_support_tol(support_tol)?;
        if values.is_empty() {
            return Err(Error::EmptyCollection);
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        values.sort_by(|a, b| b.total_cmp(a));
        clamp_negative(&mut values, support_tol)?;
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SPECTRUM_SUM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        let support_count = count_support(&values, support_tol);
        Ok(Spectrum { eigenvalues: values, support_tol, support_count })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn support_tol(&self) -> f64 {
        self.support_tol
    }

    pub fn support_count(&self) -> usize {
        self.support_count
    }

    /// Eigenvalues counted as non-zero.
    pub fn support(&self) -> &[f64] {
        &self.eigenvalues[..self.support_count]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            lambda_max: self.eigenvalues[0],
            lambda_min: *self.eigenvalues.last().unwrap(),
            trace: self.eigenvalues.iter().sum(),
        }
    }
}

fn check_support_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && (0.0..1.0).contains(&tol)) {
        return Err(Error::InvalidParameter(format!("support tolerance must be in [0, 1), got {tol}")));
    }
    Ok(())
}

/// `values` sorted descending.
fn clamp_negative(values: &mut [f64], support_tol: f64) -> Result<()> {
    let lambda_max = values[0];
    if lambda_max <= 0.0 {
        return Err(Error::IndefiniteKernel { eigenvalue: lambda_max, tolerance: support_tol });
    }
    let floor = -support_tol * lambda_max;
    let before: f64 = values.iter().sum();
    let mut clamped = false;
    for v in values.iter_mut().rev() {
        if *v >= 0.0 {
            break;
        }
        if *v < floor {
            return Err(Error::IndefiniteKernel { eigenvalue: *v, tolerance: support_tol });
        }
        *v = 0.0;
        clamped = true;
    }
    if clamped {
        let after: f64 = values.iter().sum();
        // Clamped mass is bounded by C * support_tol * lambda_max; beyond
        // this the result would no longer describe the input matrix.
        if (after - before).abs() >= SPECTRUM_SUM_TOL {
            let eigenvalue = *values.last().unwrap();
            return Err(Error::IndefiniteKernel { eigenvalue, tolerance: support_tol });
        }
        for v in values.iter_mut() {
            *v /= after;
        }
    }
    Ok(())
}

fn count_support(values: &[f64], support_tol: f64) -> usize {
    let threshold = support_tol * values[0];
    values.iter().take_while(|&&v| v > threshold).count()
}

/// Eigenvalues together with their eigenvectors, both in descending order.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    spectrum: Spectrum,
    /// Column `i` is the eigenvector of `spectrum.eigenvalues()[i]`.
    vectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn into_spectrum(self) -> Spectrum {
        self.spectrum
    }
}

/// Full symmetric eigendecomposition of a normalized kernel.
pub fn decompose(kn: &NormalizedKernel, support_tol: f64) -> Result<SpectralDecomposition> {
    check_support_tol(support_tol)?;
    let (values, vectors) = sorted_eigen(kn.0.clone());
    let spectrum = Spectrum::from_eigenvalues(values, support_tol)?;
    Ok(SpectralDecomposition { spectrum, vectors })
}

pub fn eigenvalues(kn: &NormalizedKernel, support_tol: f64) -> Result<Spectrum> {
    check_support_tol(support_tol)?;
    let values = kn.0.clone().symmetric_eigenvalues().iter().copied().collect();
    Spectrum::from_eigenvalues(values, support_tol)
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BasisKind {
    /// Indicator columns of the selected collection indices.
    Subsample { indices: Vec<usize> },
    EmbeddingOrthogonalized,
}

/// Orthonormal `C x m` basis for Rayleigh-Ritz projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    columns: DMatrix<f64>,
    kind: BasisKind,
}

impl ProjectionBasis {
    /// Wraps caller-provided columns after checking orthonormality.
    pub fn from_columns(columns: DMatrix<f64>) -> Result<Self> {
        check_orthonormal(&columns)?;
        Ok(ProjectionBasis { columns, kind: BasisKind::EmbeddingOrthogonalized })
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }
}

fn check_orthonormal(v: &DMatrix<f64>) -> Result<()> {
    let gram = v.transpose() * v;
    let deviation = (gram - DMatrix::identity(v.ncols(), v.ncols())).amax();
    if deviation > ORTHONORMAL_TOL || !deviation.is_finite() {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// Picks `m` distinct items out of `c`, uniformly without replacement.
pub fn subsample_basis(c: usize, m: usize, seed: u64) -> Result<ProjectionBasis> {
    let indices = subsample_indices(c, m, seed)?;
    let mut columns = DMatrix::zeros(c, m);
    for (col, &row) in indices.iter().enumerate() {
        columns[(row, col)] = 1.0;
    }
    Ok(ProjectionBasis { columns, kind: BasisKind::Subsample { indices } })
}

pub(crate) fn subsample_indices(c: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > c {
        return Err(Error::InvalidParameter(format!(
            "subsample size must be in [1, {c}], got {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, c, m).into_vec())
}

/// Orthonormal basis of the column space of an `N x d` embedding matrix,
/// built by column-pivoted Gram-Schmidt with one reorthogonalization pass.
pub fn orthogonalize_embeddings(e: &DMatrix<f64>, m: usize) -> Result<ProjectionBasis> {
    if m == 0 {
        return Err(Error::InvalidParameter("basis size must be at least 1".into()));
    }
    let (columns, rank) = pivoted_gram_schmidt(e, m.min(e.ncols()))?;
    if rank < m {
        return Err(Error::RankDeficient { requested: m, rank });
    }
    Ok(ProjectionBasis { columns, kind: BasisKind::EmbeddingOrthogonalized })
}

/// Basis of the whole numerical column space of `e`.
pub(crate) fn embedding_range_basis(e: &DMatrix<f64>) -> Result<ProjectionBasis> {
    let (columns, _) = pivoted_gram_schmidt(e, e.ncols())?;
    Ok(ProjectionBasis { columns, kind: BasisKind::EmbeddingOrthogonalized })
}

/// Returns up to `max_cols` orthonormal columns and how many were found
/// before every residual fell below the rank threshold.
fn pivoted_gram_schmidt(e: &DMatrix<f64>, max_cols: usize) -> Result<(DMatrix<f64>, usize)> {
    if e.nrows() == 0 || e.ncols() == 0 {
        return Err(Error::EmptyCollection);
    }
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = e.nrows();
    let mut residual = e.clone();
    let largest = (0..e.ncols()).map(|j| e.column(j).norm()).fold(0.0, f64::max);
    let threshold = RANK_TOL * largest;
    let mut used = vec![false; e.ncols()];
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(max_cols);

    while basis.len() < max_cols {
        let norms: Vec<f64> = (0..e.ncols())
            .map(|j| if used[j] { -1.0 } else { residual.column(j).norm() })
            .collect();
        let best = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best <= threshold {
            break;
        }
        // Lowest index among near-ties keeps the pivot order stable.
        let pivot = norms.iter().position(|&x| x >= best * (1.0 - 1e-12)).unwrap();
        used[pivot] = true;

        let mut q = residual.column(pivot).clone_owned();
        for b in &basis {
            let r = b.dot(&q);
            q.axpy(-r, b, 1.0);
        }
        let norm = q.norm();
        if norm <= threshold {
            continue;
        }
        q /= norm;
        for j in 0..e.ncols() {
            if !used[j] {
                let r = q.dot(&residual.column(j));
                let mut col = residual.column_mut(j);
                col.axpy(-r, &q, 1.0);
            }
        }
        basis.push(q);
    }

    let rank = basis.len();
    let columns = if rank == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&basis)
    };
    Ok((columns, rank))
}

/// Rayleigh-Ritz projection `V^T K V`.
pub fn project(kn: &NormalizedKernel, v: &ProjectionBasis) -> Result<DMatrix<f64>> {
    if v.columns.nrows() != kn.size() {
        return Err(Error::DimensionMismatch { expected: kn.size(), actual: v.columns.nrows() });
    }
    check_orthonormal(&v.columns)?;
    let p = v.columns.transpose() * (&kn.0 * &v.columns);
    Ok(symmetrize(p))
}

/// Spectrum of the projected matrix, rescaled to unit trace so that it
/// can be scored like any other spectrum. For a subsample basis this is
/// exactly the spectrum of the selected sub-collection.
pub fn ritz_spectrum(kn: &NormalizedKernel, v: &ProjectionBasis, support_tol: f64) -> Result<Spectrum> {
    let p = project(kn, v)?;
    spectrum_of_projection(p, support_tol)
}

pub(crate) fn spectrum_of_projection(p: DMatrix<f64>, support_tol: f64) -> Result<Spectrum> {
    check_support_tol(support_tol)?;
    let trace = p.trace();
    if !(trace > 0.0) {
        return Err(Error::InvalidParameter(format!("projected kernel has trace {trace}")));
    }
    let values = (p / trace).symmetric_eigenvalues().iter().copied().collect();
    Spectrum::from_eigenvalues(values, support_tol)
}
