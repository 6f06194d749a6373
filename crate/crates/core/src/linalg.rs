//! Dense real symmetric linear algebra.
//!
//! Every positive-semidefiniteness test in the crate goes through [`is_psd`],
//! which compares the smallest eigenvalue against `-tol * (1 + ||S||_F)`.
//! Eigendecompositions use cyclic Jacobi rotations, which are accurate and
//! reproducible for the small dense matrices handled here.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default relative tolerance for PSD tests.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Largest number of entries [`kron`] will allocate.
const MAX_ENTRIES: usize = 1 << 28;

/// Absolute symmetry deviation (relative to the largest entry) tolerated by
/// [`SymMat::new`] before it rejects the input.
const SYMMETRY_TOL: f64 = 1e-12;

/// Dense, possibly rectangular real matrix.
pub type RectMat = DMatrix<f64>;

/// Dense real symmetric matrix.
///
/// Symmetry holds exactly: constructors average `S` and `S^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(pub(crate) DMatrix<f64>);

impl SymMat {
    /// Validates and symmetrizes `m`. Asymmetry above `1e-12 * (1 + max|m_ij|)`
    /// is rejected.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        let dev = asymmetry(&m);
        let scale = 1.0 + m.amax();
        if dev > SYMMETRY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric (deviation {dev:e})"
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Averages `m` with its transpose without checking the deviation.
    ///
    /// Panics if `m` is not square.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let t = m.transpose();
        SymMat((m + t) * 0.5)
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        SymMat(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMat(DMatrix::zeros(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMat(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `v v^T`.
    pub fn outer(v: &DVector<f64>) -> Self {
        SymMat::symmetrize(v * v.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scale(&self, a: f64) -> SymMat {
        SymMat(&self.0 * a)
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        SymMat(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        SymMat(&self.0 - &other.0)
    }

    /// `Q^T S Q`.
    pub fn congruence(&self, q: &RectMat) -> SymMat {
        SymMat::symmetrize(q.transpose() * &self.0 * q)
    }
}

impl Deref for SymMat {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Largest `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    dev
}

/// Frobenius inner product `<A, B> = sum_ij A_ij B_ij`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigDecomp {
    /// Eigenvalues, sorted descending.
    pub values: DVector<f64>,
    /// Orthogonal matrix whose columns are the matching eigenvectors.
    pub vectors: DMatrix<f64>,
}

impl EigDecomp {
    pub fn min_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    /// `V diag(f(values)) V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        SymMat::symmetrize(scaled * self.vectors.transpose())
    }
}

/// Eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(s: &SymMat) -> Result<EigDecomp> {
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(jacobi(s.matrix()))
}

fn jacobi(s: &DMatrix<f64>) -> EigDecomp {
    const MAX_SWEEPS: usize = 100;

    let n = s.nrows();
    // row-major working copy
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = s[(i, j)];
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut prev_off = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        let off = (2.0 * off).sqrt();
        if off == 0.0 || off <= f64::EPSILON * 1e-2 * total || off >= prev_off {
            break;
        }
        prev_off = off;

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                let tau = sn / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let nrp = arp - sn * (arq + tau * arp);
                    let nrq = arq + sn * (arp - tau * arq);
                    a[r * n + p] = nrp;
                    a[p * n + r] = nrp;
                    a[r * n + q] = nrq;
                    a[q * n + r] = nrq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = vrp - sn * (vrq + tau * vrp);
                    v[r * n + q] = vrq + sn * (vrp - tau * vrq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep rotation order, which fixes degenerate choices
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| a[k * n + k]));
    let vectors = DMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    EigDecomp { values, vectors }
}

/// Smallest eigenvalue and a unit eigenvector for it.
///
/// When the bottom eigenvalue is degenerate within `1e-10`, the eigenvector
/// returned is the first of the degenerate group in rotation order.
pub fn min_eig_pair(s: &SymMat) -> Result<(f64, DVector<f64>)> {
    let eig = sym_eig(s)?;
    let n = eig.values.len();
    let lmin = eig.values[n - 1];
    let mut pick = n - 1;
    while pick > 0 && eig.values[pick - 1] - lmin <= 1e-10 {
        pick -= 1;
    }
    Ok((lmin, eig.vectors.column(pick).into_owned()))
}

pub fn min_eigenvalue(s: &SymMat) -> Result<f64> {
    Ok(sym_eig(s)?.min_value())
}

/// `true` iff `lambda_min(S) >= -tol * (1 + ||S||_F)`.
pub fn is_psd(s: &SymMat, tol: f64) -> Result<bool> {
    if tol < 0.0 || !tol.is_finite() {
        return Err(Error::InvalidInput(format!("tolerance must be >= 0, got {tol}")));
    }
    let lmin = min_eigenvalue(s)?;
    Ok(lmin >= -tol * (1.0 + s.frobenius()))
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &RectMat, b: &RectMat) -> Result<RectMat> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r.checked_mul(c).is_some_and(|e| e <= MAX_ENTRIES) => {
            Ok(a.kronecker(b))
        }
        _ => Err(Error::DimensionTooLarge {
            rows: a.nrows().saturating_mul(b.nrows()),
            cols: a.ncols().saturating_mul(b.ncols()),
        }),
    }
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to 0.
pub fn psd_project(s: &SymMat) -> SymMat {
    jacobi(s.matrix()).reconstruct_with(|x| x.max(0.0))
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projection onto the spectraplex `{M ⪰ 0, tr M = 1}`.
pub fn spectraplex_project(s: &SymMat) -> SymMat {
    let eig = jacobi(s.matrix());
    let projected = simplex_project(eig.values.as_slice());
    let mut scaled = eig.vectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= projected[k].sqrt();
    }
    let mut m = scaled.clone() * scaled.transpose();
    m = (&m + m.transpose()) * 0.5;
    // re-impose the trace exactly; the PSD factor form keeps it PSD
    let tr = m.trace();
    if tr > 0.0 {
        m /= tr;
    }
    SymMat(m)
}

/// Factor `S = V V^T` keeping eigenvalues above `tol * (1 + ||S||_F)`.
pub fn psd_factor(s: &SymMat, tol: f64) -> Result<RectMat> {
    let eig = sym_eig(s)?;
    let scale = 1.0 + s.frobenius();
    if eig.min_value() < -tol * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min_value(),
        });
    }
    let cutoff = tol * scale;
    let kept: Vec<usize> = (0..eig.values.len())
        .filter(|&k| eig.values[k] > cutoff)
        .collect();
    let mut v = DMatrix::zeros(s.dim(), kept.len());
    for (c, &k) in kept.iter().enumerate() {
        let w = eig.values[k].sqrt();
        v.set_column(c, &(eig.vectors.column(k) * w));
    }
    Ok(v)
}

/// Random symmetric matrix with entries uniform in `[-1, 1]`.
pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> SymMat {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    SymMat::symmetrize(m)
}

/// Concave objective over the spectraplex with a supergradient oracle.
pub trait SpectralObjective {
    /// Objective value at `m` and a symmetric supergradient.
    fn value_and_supergradient(&self, m: &SymMat) -> (f64, SymMat);
}

impl<F> SpectralObjective for F
where
    F: Fn(&SymMat) -> (f64, SymMat),
{
    fn value_and_supergradient(&self, m: &SymMat) -> (f64, SymMat) {
        self(m)
    }
}

/// Starting point of [`maximize_spectral`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartPoint {
    /// `Id / dim`.
    #[default]
    MaximallyMixed,
    /// Spectraplex projection of a seeded random symmetric matrix.
    Seeded(u64),
}

#[derive(Debug, Clone)]
pub struct SpectralOptions {
    pub budget: usize,
    pub tol: f64,
    pub start: StartPoint,
    /// Stop as soon as the objective reaches this value.
    pub stop_at: Option<f64>,
    /// Step scale `a` in `a / sqrt(k)`.
    pub step: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            budget: 5000,
            tol: DEFAULT_TOL,
            start: StartPoint::MaximallyMixed,
            stop_at: None,
            step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStatus {
    /// The projected step left the iterate unchanged.
    Stationary,
    /// `stop_at` was reached.
    TargetReached,
    /// The iteration budget ran out; the best iterate is still reported.
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct SpectralSearch {
    pub point: SymMat,
    pub value: f64,
    pub iterations: usize,
    pub status: SearchStatus,
}

/// Projected supergradient ascent over the spectraplex with steps
/// `a / sqrt(k)` and best-iterate tracking.
pub fn maximize_spectral<O: SpectralObjective + ?Sized>(
    oracle: &O,
    dim: usize,
    opts: &SpectralOptions,
) -> SpectralSearch {
    let mut current = match opts.start {
        StartPoint::MaximallyMixed => SymMat::identity(dim).scale(1.0 / dim as f64),
        StartPoint::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_symmetric(&mut rng, dim);
            spectraplex_project(&SymMat::identity(dim).scale(1.0 / dim as f64).add(&r))
        }
    };
    let (mut value, mut grad) = oracle.value_and_supergradient(&current);
    let mut best = SpectralSearch {
        point: current.clone(),
        value,
        iterations: 0,
        status: SearchStatus::BudgetExhausted,
    };

    for k in 1..=opts.budget {
        best.iterations = k;
        if opts.stop_at.is_some_and(|target| best.value >= target) {
            best.status = SearchStatus::TargetReached;
            return best;
        }
        let gnorm = grad.frobenius();
        if gnorm == 0.0 {
            best.status = SearchStatus::Stationary;
            return best;
        }
        let step = opts.step / (k as f64).sqrt();
        let next = spectraplex_project(&current.add(&grad.scale(step / gnorm)));
        let moved = next.sub(&current).frobenius();
        current = next;
        (value, grad) = oracle.value_and_supergradient(&current);
        if value > best.value {
            best.value = value;
            best.point = current.clone();
        }
        if moved <= opts.tol * 1e-3 {
            best.status = SearchStatus::Stationary;
            return best;
        }
    }
    polish_towards_vertex(oracle, &mut best);
    if opts.stop_at.is_some_and(|target| best.value >= target) {
        best.status = SearchStatus::TargetReached;
    }
    best
}

/// Tries points on the segment from the best iterate to the top eigenprojector
/// of its supergradient (the Frank-Wolfe vertex).
fn polish_towards_vertex<O: SpectralObjective + ?Sized>(oracle: &O, best: &mut SpectralSearch) {
    let (_, grad) = oracle.value_and_supergradient(&best.point);
    if grad.frobenius() == 0.0 {
        return;
    }
    let Ok(e) = sym_eig(&grad) else { return };
    let v = e.vectors.column(0).into_owned();
    let vertex = SymMat::outer(&v);
    let mut t = 1.0;
    for _ in 0..20 {
        let cand = best.point.scale(1.0 - t).add(&vertex.scale(t));
        let (value, _) = oracle.value_and_supergradient(&cand);
        if value > best.value {
            best.value = value;
            best.point = cand;
            return;
        }
        t *= 0.5;
    }
}
