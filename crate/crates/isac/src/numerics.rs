//! Scalar and matrix primitives shared by every other module: Gaussian tail
//! functions, Hermitian eigendecomposition, vectorization/Kronecker helpers,
//! bisection, and seeded complex-Gaussian sampling.
//!
//! All operations here are pure functions of their inputs and safe to call
//! concurrently.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

/// Dense complex matrix used for every channel/beamformer quantity.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Default absolute tolerance for numeric checks.
pub const DEFAULT_TOL: f64 = 1e-9;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("bisection bracket does not change sign: f(lo)={0:.3e}, f(hi)={1:.3e}")]
    NoBracket(f64, f64),
    #[error("argument {0} is outside the open interval (0, 1)")]
    ProbabilityDomain(f64),
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Standard Gaussian right-tail probability Q(x) = P(Z > x).
///
/// Evaluated through the complementary error function so both tails keep
/// full relative accuracy (the detection threshold needs Q at arguments
/// near +-4.4).
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard Gaussian density.
pub fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Inverse of [`q_function`] on (0, 1).
///
/// Seeded from the inverse complementary error function and polished with
/// safeguarded Newton steps until `q_function(x) = p` within 1e-12 relative.
pub fn q_inverse(p: f64) -> Result<f64, NumericsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NumericsError::ProbabilityDomain(p));
    }
    let mut x = SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..4 {
        let f = q_function(x) - p;
        let d = gaussian_pdf(x);
        if d == 0.0 {
            break;
        }
        let step = f / d;
        x += step;
        if step.abs() < 1e-14 * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(x)
}

/// Result of a Hermitian eigendecomposition, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Real eigenvalues in descending order.
    pub values: DVector<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: CMat,
}

impl HermitianEig {
    /// Largest eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        self.values[0]
    }

    /// Eigenvector for the largest eigenvalue.
    pub fn principal_vector(&self) -> CVec {
        self.vectors.column(0).into_owned()
    }
}

/// Eigendecomposition of a Hermitian matrix, M = U diag(values) U^H.
///
/// Ties are resolved deterministically: eigenvalues descend and each
/// eigenvector is phase-normalized so its first significantly nonzero entry
/// is real positive.
pub fn hermitian_eig(m: &CMat) -> Result<HermitianEig, NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare(m.nrows(), m.ncols()));
    }
    let asym = (m - m.adjoint()).norm();
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if asym > 1e-10 * scale.max(1.0) {
        return Err(NumericsError::NotHermitian(asym / scale));
    }
    // Work on the exactly-Hermitian part so round-off in the input cannot leak.
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("eigenvalues are finite")
    });
    let mut values = DVector::zeros(n);
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col: CVec = eig.eigenvectors.column(src).into_owned();
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= Complex64::new(nrm, 0.0);
        }
        if let Some(lead) = col.iter().position(|z| z.norm() > 1e-12) {
            let phase = col[lead] / Complex64::new(col[lead].norm(), 0.0);
            col /= phase;
        }
        vectors.set_column(dst, &col);
    }
    Ok(HermitianEig { values, vectors })
}

/// Column-major vectorization vec(M).
pub fn vec(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`]: reshape a length rows*cols vector into a matrix.
pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "unvec length mismatch");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Kronecker product A (x) B.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Applies the identity vec(A X B) = (B^T (x) A) vec(X) without forming the
/// Kronecker product; returns vec(A X B).
pub fn vec_kron_apply(a: &CMat, x: &CMat, b: &CMat) -> Result<CVec, NumericsError> {
    if a.ncols() != x.nrows() || x.ncols() != b.nrows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "vec_kron_apply: A is {}x{}, X is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            x.nrows(),
            x.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(vec(&(a * x * b)))
}

/// A bracketed root-finding problem for a monotone residual.
#[derive(Debug, Clone, Copy)]
pub struct BisectionProblem {
    pub lower: f64,
    pub upper: f64,
    pub tolerance: f64,
}

/// Bisection on `residual` over the bracket in `problem`.
///
/// Requires residual(lower) and residual(upper) of opposite sign; the
/// returned root satisfies |residual| <= tolerance or the bracket has shrunk
/// below tolerance.
pub fn bisect<F: FnMut(f64) -> f64>(
    problem: BisectionProblem,
    mut residual: F,
) -> Result<f64, NumericsError> {
    let BisectionProblem {
        mut lower,
        mut upper,
        tolerance,
    } = problem;
    assert!(tolerance > 0.0, "bisection tolerance must be positive");
    let mut f_lo = residual(lower);
    let f_hi = residual(upper);
    if f_lo == 0.0 {
        return Ok(lower);
    }
    if f_hi == 0.0 {
        return Ok(upper);
    }
    if f_lo * f_hi > 0.0 {
        return Err(NumericsError::NoBracket(f_lo, f_hi));
    }
    let max_iter = (((upper - lower) / tolerance).log2().ceil() as usize).max(1) + 2;
    let mut mid = 0.5 * (lower + upper);
    for _ in 0..max_iter {
        mid = 0.5 * (lower + upper);
        let f_mid = residual(mid);
        if f_mid.abs() <= tolerance || upper - lower <= tolerance {
            return Ok(mid);
        }
        if f_lo * f_mid <= 0.0 {
            upper = mid;
        } else {
            lower = mid;
            f_lo = f_mid;
        }
    }
    Ok(mid)
}

/// Deterministic generator for a (seed, stream) pair. Distinct streams from
/// one seed are statistically independent, which is how per-realization
/// channels are drawn in parallel.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw of a standard circularly-symmetric complex Gaussian, E|z|^2 = 1.
pub fn standard_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / SQRT_2
}

/// Matrix with i.i.d. CN(0,1) entries.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| standard_complex_gaussian(rng))
}

/// Solves A x = b for Hermitian positive definite A by Cholesky, adding a
/// jitter of 1e-12 * trace(A)/n on the diagonal if the factorization fails.
pub fn solve_hpd(a: &CMat, b: &CMat) -> Result<CMat, NumericsError> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::NotSquare(a.nrows(), a.ncols()));
    }
    if a.nrows() != b.nrows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "solve_hpd: A is {}x{}, b has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    let n = a.nrows() as f64;
    let jitter = 1e-12 * a.trace().re.abs().max(f64::MIN_POSITIVE) / n;
    let mut aj = a.clone();
    for i in 0..a.nrows() {
        aj[(i, i)] += Complex64::new(jitter, 0.0);
    }
    match aj.cholesky() {
        Some(chol) => Ok(chol.solve(b)),
        None => Err(NumericsError::NotHermitian(f64::NAN)),
    }
}

/// Real part of tr(A B), without forming the product A B.
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}
