//! The matrix-valued S-lemma: completely positive certificates, separators
//! and the counterexample tuples built from them, plus homogenization.
//!
//! A certificate is a Choi matrix `J ⪰ 0`, `J ≠ 0`, with
//! `A - (1_m ⊗ phi_J) B ⪰ 0`. A separator is `M ⪰ 0` with
//! `sum_ij B_ij ⊗ M_ij ⪰ 0` and `<A, M> < 0`; the two exclude each other.
//! Both are searched for with [`crate::sdp`]; projected supergradient ascent
//! over the spectraplex is the fallback when the interior-point solver does
//! not converge.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cpmap::{BlockLayout, ChoiMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    inner, is_psd, kron, maximize_spectral, min_eig_pair, min_eigenvalue, psd_project, sym_eig, RectMat,
    SpectralOptions, SymMat, DEFAULT_TOL,
};
use crate::ncpoly::{MatTuple, NCQuadPoly, NonHomogeneousPoly, TupleKind};
use crate::positivity::DEFAULT_TOL_STRICT;
use crate::sdp::{LmiOptions, LmiProblem, LmiStatus};

/// Interior-point searches with more scalar unknowns than this go straight to
/// the spectraplex fallback.
const MAX_LMI_VARIABLES: usize = 2500;

/// Rank cutoff for the separator factor, relative to `1 + ||M||_F`.
const RANK_CUTOFF: f64 = 1e-8;

/// Allowed deviation of `P X_i X_j P` from `M_ij`.
const BLOCK_IDENTITY_TOL: f64 = 1e-8;

/// Smallest trace accepted for a nonzero Choi matrix.
const MIN_TRACE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Acceptance tolerance for PSD tests.
    pub tol: f64,
    /// Strictness margin for counterexamples.
    pub tol_strict: f64,
    /// Iteration budget of the spectraplex fallback.
    pub budget: usize,
    pub seed: u64,
    /// Number of searches `decide` may run at once.
    pub threads: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            tol_strict: DEFAULT_TOL_STRICT,
            budget: 5000,
            seed: 42,
            threads: 1,
        }
    }
}

/// How `f` and `g` were brought to a common coefficient size `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reconciliation {
    pub q_f: usize,
    pub q_g: usize,
    /// `g` was replaced by the direct sum of this many copies.
    pub repeat: usize,
    /// Common coefficient size after padding `f`.
    pub q: usize,
}

impl Reconciliation {
    pub fn is_identity(&self) -> bool {
        self.q_f == self.q_g
    }
}

/// Pads `f` when `q_f < q_g`; when `q_f > q_g` replaces `g` by `⊕^k g` with
/// the least `k` such that `k q_g >= q_f` and pads `f` to `k q_g`.
pub fn reconcile(f: &NCQuadPoly, g: &NCQuadPoly) -> Result<(NCQuadPoly, NCQuadPoly, Reconciliation)> {
    check_same_m(f, g)?;
    let (q_f, q_g) = (f.q(), g.q());
    let repeat = if q_f > q_g { q_f.div_ceil(q_g) } else { 1 };
    let q = repeat * q_g;
    let g_new = if repeat > 1 { g.direct_sum_repeat(repeat)? } else { g.clone() };
    let f_new = if q > q_f { f.pad_coefficients(q)? } else { f.clone() };
    Ok((f_new, g_new, Reconciliation { q_f, q_g, repeat, q }))
}

fn check_same_m(f: &NCQuadPoly, g: &NCQuadPoly) -> Result<()> {
    if f.m() != g.m() {
        return Err(Error::ShapeMismatch(format!(
            "f has {} variables, g has {}",
            f.m(),
            g.m()
        )));
    }
    Ok(())
}

/// A completely positive `phi` with `f - phi g` globally PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct CPCertificate {
    pub choi: ChoiMatrix,
    /// `A - (1_m ⊗ phi) B`.
    pub residual: SymMat,
    pub residual_lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertifyOutcome {
    Certificate(CPCertificate),
    /// No certificate was found; `best_value` is the largest residual
    /// eigenvalue seen, per unit trace of the search variable.
    NotFound { best_value: f64 },
}

/// Coefficient matrix of `f - phi g`.
pub fn certificate_residual(f: &NCQuadPoly, g: &NCQuadPoly, choi: &ChoiMatrix) -> Result<SymMat> {
    let image = choi.apply_to_poly(g)?;
    if image.q() != f.q() {
        return Err(Error::ShapeMismatch(format!(
            "map lands in {0}x{0} matrices but f has {1}x{1} coefficients",
            image.q(),
            f.q()
        )));
    }
    Ok(f.coefficient_matrix().sub(&image.coefficient_matrix()))
}

fn norm_or_one(s: &SymMat) -> f64 {
    let n = s.frobenius();
    if n > 0.0 {
        n
    } else {
        1.0
    }
}

/// Index pairs `(p, r)`, `p <= r`, of a symmetric `n x n` unknown.
fn sym_basis(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for p in 0..n {
        for r in p..n {
            out.push((p, r));
        }
    }
    out
}

fn sym_unit(n: usize, p: usize, r: usize) -> SymMat {
    let mut e = DMatrix::zeros(n, n);
    e[(p, r)] = 1.0;
    e[(r, p)] = 1.0;
    SymMat::symmetrize(e)
}

fn unpack_sym(n: usize, basis: &[(usize, usize)], y: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n);
    for (&(p, r), &v) in basis.iter().zip(y) {
        out[(p, r)] = v;
        out[(r, p)] = v;
    }
    out
}

/// `(1_m ⊗ phi_E) B` for the Choi unit `E = E_pr + E_rp`, `phi: s -> t`.
fn choi_unit_image(b: &SymMat, m: usize, s: usize, t: usize, p: usize, r: usize) -> SymMat {
    let (i, a) = (p / s, p % s);
    let (j, bb) = (r / s, r % s);
    let mut out = DMatrix::zeros(m * t, m * t);
    for k in 0..m {
        for l in 0..m {
            out[(k * t + i, l * t + j)] += b[(k * s + a, l * s + bb)];
            if p != r {
                out[(k * t + j, l * t + i)] += b[(k * s + bb, l * s + a)];
            }
        }
    }
    SymMat::symmetrize(out)
}

/// Searches for a certificate `J` with `f - phi_J g` globally PSD.
///
/// The search runs over the PSD cone with a trace bound rather than over
/// trace-one matrices: a certificate only exists up to positive scaling, and
/// fixing the trace would exclude scalings that are needed.
pub fn certify(f: &NCQuadPoly, g: &NCQuadPoly, opts: &SolveOptions) -> Result<CertifyOutcome> {
    check_same_m(f, g)?;
    let (m, s, t) = (f.m(), g.q(), f.q());
    let a = f.coefficient_matrix();
    let b = g.coefficient_matrix();
    let (na, nb) = (norm_or_one(&a), norm_or_one(&b));
    let ah = a.scale(1.0 / na);
    let bh = b.scale(1.0 / nb);
    let nj = s * t;
    let basis = sym_basis(nj);
    let mut best_value = f64::NEG_INFINITY;

    if basis.len() < MAX_LMI_VARIABLES {
        let units: Vec<SymMat> = basis
            .iter()
            .map(|&(p, r)| choi_unit_image(&bh, m, s, t, p, r))
            .collect();
        let mut bound = 10.0 * nj as f64;
        for _ in 0..3 {
            let mut lmi = LmiProblem::new(&[m * t, nj, 1, 1]);
            lmi.set_constant(0, &ah);
            lmi.set_constant(2, &SymMat::from_diagonal(&[bound]));
            lmi.set_constant(3, &SymMat::identity(1));
            lmi.add_variable(1.0, vec![(0, SymMat::identity(m * t)), (3, SymMat::identity(1))]);
            for (&(p, r), unit) in basis.iter().zip(&units) {
                let trace = if p == r { 1.0 } else { 0.0 };
                lmi.add_variable(
                    0.0,
                    vec![
                        (0, unit.clone()),
                        (1, sym_unit(nj, p, r).scale(-1.0)),
                        (2, SymMat::from_diagonal(&[trace])),
                    ],
                );
            }
            let sol = lmi.solve(&LmiOptions::default());
            let jh = unpack_sym(nj, &basis, &sol.y.as_slice()[1..]);
            let trace = jh.trace();
            if let Some(cert) = finalize_certificate(f, g, &a, &b, jh * (na / nb), opts)? {
                return Ok(CertifyOutcome::Certificate(cert));
            }
            best_value = best_value.max(sol.y[0] * na);
            if sol.y[0] < 0.0 && trace >= 0.9 * bound {
                bound *= 100.0;
            } else if sol.status == LmiStatus::Optimal {
                return Ok(CertifyOutcome::NotFound { best_value });
            } else {
                break;
            }
        }
    }

    // spectraplex fallback on the trace-one slice
    let oracle = |j: &SymMat| {
        let choi = ChoiMatrix::new(s, t, j.clone()).expect("dimensions fixed");
        let res = match certificate_residual(f, g, &choi) {
            Ok(r) => r.scale(1.0 / na),
            Err(_) => return (f64::NEG_INFINITY, SymMat::zeros(nj)),
        };
        let (value, w) = min_eig_pair(&res).expect("finite residual");
        (value, choi_supergradient(&bh, &w, m, s, t).scale(nb / na))
    };
    let search = maximize_spectral(
        &oracle,
        nj,
        &SpectralOptions {
            budget: opts.budget,
            tol: opts.tol,
            stop_at: Some(0.0),
            ..Default::default()
        },
    );
    best_value = best_value.max(search.value * na);
    if let Some(cert) = finalize_certificate(f, g, &a, &b, search.point.into_inner(), opts)? {
        return Ok(CertifyOutcome::Certificate(cert));
    }
    Ok(CertifyOutcome::NotFound { best_value })
}

/// Supergradient in `J` of `lambda_min(A - (1 ⊗ phi_J) B)` at bottom
/// eigenvector `w`: `G[(i,a),(j,b)] = -sum_kl w_ki w_lj (B_kl)_ab`.
fn choi_supergradient(b: &SymMat, w: &DVector<f64>, m: usize, s: usize, t: usize) -> SymMat {
    let mut g = DMatrix::zeros(s * t, s * t);
    for k in 0..m {
        for l in 0..m {
            for i in 0..t {
                for j in 0..t {
                    let ww = w[k * t + i] * w[l * t + j];
                    if ww == 0.0 {
                        continue;
                    }
                    for a in 0..s {
                        for bb in 0..s {
                            g[(i * s + a, j * s + bb)] -= ww * b[(k * s + a, l * s + bb)];
                        }
                    }
                }
            }
        }
    }
    SymMat::symmetrize(g)
}

/// Cleans a candidate Choi matrix and returns it if it certifies.
fn finalize_certificate(
    f: &NCQuadPoly,
    g: &NCQuadPoly,
    a: &SymMat,
    b: &SymMat,
    j: DMatrix<f64>,
    opts: &SolveOptions,
) -> Result<Option<CPCertificate>> {
    let (m, s, t) = (f.m(), g.q(), f.q());
    let j = psd_project(&SymMat::symmetrize(j));
    let mut candidates = vec![j];
    // a zero map only certifies when A itself is PSD; then a small multiple
    // of the trace map scaled into every output entry is tried instead
    let lmin_a = min_eigenvalue(a)?;
    if lmin_a > 0.0 {
        let full = SymMat::identity(s * t);
        let image = (0..s * t)
            .map(|p| choi_unit_image(b, m, s, t, p, p))
            .fold(SymMat::zeros(m * t), |acc, u| acc.add(&u.scale(0.5)));
        let spread = sym_eig(&image)?.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let eps = 0.5 * lmin_a / (1.0 + spread);
        candidates.push(full.scale(eps));
    }
    for j in candidates {
        if j.trace() <= MIN_TRACE {
            continue;
        }
        let choi = ChoiMatrix::new(s, t, j)?;
        let residual = certificate_residual(f, g, &choi)?;
        if is_psd(&residual, opts.tol)? {
            let residual_lambda_min = min_eigenvalue(&residual)?;
            return Ok(Some(CPCertificate {
                choi,
                residual,
                residual_lambda_min,
            }));
        }
    }
    Ok(None)
}

/// `sum_ij B_ij ⊗ M_ij` for `M` with `m x m` blocks of size `q_m`.
pub fn separator_constraint(g: &NCQuadPoly, sep: &SymMat) -> Result<SymMat> {
    let m = g.m();
    if sep.dim() % m != 0 {
        return Err(Error::ShapeMismatch(format!(
            "separator of size {} does not split into {m}x{m} blocks",
            sep.dim()
        )));
    }
    let qm = sep.dim() / m;
    let mut out = DMatrix::zeros(g.q() * qm, g.q() * qm);
    for i in 0..m {
        for j in 0..m {
            let mij = sep.view((i * qm, j * qm), (qm, qm)).into_owned();
            out += kron(g.block(i, j), &mij)?;
        }
    }
    Ok(SymMat::symmetrize(out))
}

/// A trace-one separator and its two margins.
#[derive(Debug, Clone, PartialEq)]
pub struct Separator {
    pub matrix: SymMat,
    /// `<A, M>`.
    pub objective: f64,
    /// `lambda_min(sum_ij B_ij ⊗ M_ij)`.
    pub constraint_lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeparatorOutcome {
    Found(Separator),
    /// Smallest `<A, M>` seen over feasible trace-one `M`.
    NotFound { best_value: f64 },
}

/// Checks both separator inequalities for `M`, after trace normalization.
pub fn check_separator(f: &NCQuadPoly, g: &NCQuadPoly, sep: &SymMat, opts: &SolveOptions) -> Result<Option<Separator>> {
    let m_f = f.m() * f.q();
    if sep.dim() != m_f {
        return Err(Error::ShapeMismatch(format!(
            "separator must be {m_f}x{m_f}, got {0}x{0}",
            sep.dim()
        )));
    }
    let tr = sep.trace();
    if tr <= MIN_TRACE || !is_psd(sep, opts.tol)? {
        return Ok(None);
    }
    let matrix = sep.scale(1.0 / tr);
    let objective = inner(&f.coefficient_matrix(), &matrix);
    let constraint = separator_constraint(g, &matrix)?;
    let constraint_lambda_min = min_eigenvalue(&constraint)?;
    if objective <= -opts.tol_strict && is_psd(&constraint, opts.tol)? {
        Ok(Some(Separator {
            matrix,
            objective,
            constraint_lambda_min,
        }))
    } else {
        Ok(None)
    }
}

/// Searches for `M ⪰ 0`, `tr M = 1`, with `sum_ij B_ij ⊗ M_ij ⪰ 0` and
/// `<A, M> <= -tol_strict`.
pub fn find_separator(f: &NCQuadPoly, g: &NCQuadPoly, opts: &SolveOptions) -> Result<SeparatorOutcome> {
    check_same_m(f, g)?;
    let (m, qf, qg) = (f.m(), f.q(), g.q());
    let d = m * qf;
    let a = f.coefficient_matrix();
    let b = g.coefficient_matrix();
    let ah = a.scale(1.0 / norm_or_one(&a));
    let gh = NCQuadPoly::from_coefficient_matrix(m, qg, &b.scale(1.0 / norm_or_one(&b)))?;
    let basis = sym_basis(d);
    let mut best_value = f64::INFINITY;

    if basis.len() < MAX_LMI_VARIABLES {
        let mut lmi = LmiProblem::new(&[qg * qf, 1, d, 1]);
        lmi.set_constant(3, &SymMat::identity(1));
        lmi.add_variable(1.0, vec![(1, SymMat::identity(1))]);
        for &(p, r) in &basis {
            let unit = sym_unit(d, p, r);
            let weight = inner(&ah, &unit);
            let trace = if p == r { 1.0 } else { 0.0 };
            lmi.add_variable(
                0.0,
                vec![
                    (0, separator_constraint(&gh, &unit)?.scale(-1.0)),
                    (1, SymMat::from_diagonal(&[weight])),
                    (2, unit.scale(-1.0)),
                    (3, SymMat::from_diagonal(&[trace])),
                ],
            );
        }
        let sol = lmi.solve(&LmiOptions::default());
        let sep = psd_project(&SymMat::symmetrize(unpack_sym(d, &basis, &sol.y.as_slice()[1..])));
        if let Some(found) = check_separator(f, g, &sep, opts)? {
            return Ok(SeparatorOutcome::Found(found));
        }
        if sep.trace() > MIN_TRACE {
            best_value = inner(&a, &sep) / sep.trace();
        }
        if sol.status == LmiStatus::Optimal {
            return Ok(SeparatorOutcome::NotFound { best_value });
        }
    }

    // spectraplex fallback: maximize min(lambda_min(B-term), -<A,M>/c)
    let c = 1.0 + a.frobenius();
    let oracle = |sep: &SymMat| {
        let constraint = separator_constraint(&gh, sep).expect("dimensions fixed");
        let (lb, u) = min_eig_pair(&constraint).expect("finite constraint");
        let va = -inner(&a, sep) / c;
        if lb <= va {
            (lb, constraint_supergradient(&gh, &u, qf))
        } else {
            (va, a.scale(-1.0 / c))
        }
    };
    let search = maximize_spectral(
        &oracle,
        d,
        &SpectralOptions {
            budget: opts.budget,
            tol: opts.tol,
            ..Default::default()
        },
    );
    if let Some(found) = check_separator(f, g, &search.point, opts)? {
        return Ok(SeparatorOutcome::Found(found));
    }
    best_value = best_value.min(inner(&a, &search.point));
    Ok(SeparatorOutcome::NotFound { best_value })
}

/// Supergradient in `M` of `lambda_min(sum B_ij ⊗ M_ij)` at bottom
/// eigenvector `u`: block `(i,j)` is `sum_ab (B_ij)_ab U_ab` where `U_ab` is
/// the `(a,b)` block of `u u^T`.
fn constraint_supergradient(g: &NCQuadPoly, u: &DVector<f64>, qm: usize) -> SymMat {
    let (m, qg) = (g.m(), g.q());
    let uu = u * u.transpose();
    let mut out = DMatrix::zeros(m * qm, m * qm);
    for i in 0..m {
        for j in 0..m {
            let bij = g.block(i, j);
            let mut blk = out.view_mut((i * qm, j * qm), (qm, qm));
            for a in 0..qg {
                for b in 0..qg {
                    let c = bij[(a, b)];
                    if c != 0.0 {
                        blk += uu.view((a * qm, b * qm), (qm, qm)) * c;
                    }
                }
            }
        }
    }
    SymMat::symmetrize(out)
}

/// A symmetric tuple `X` and projection `P` with `(1 ⊗ P) g(X) (1 ⊗ P) ⪰ 0`
/// but `E^T (1 ⊗ P) f(X) (1 ⊗ P) E < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub separator: SymMat,
    pub rank: usize,
    pub x: MatTuple,
    /// `diag(0_r, Id_q)`.
    pub projection: RectMat,
    /// `sum_a e_a ⊗ e_{r+a}`.
    pub witness: DVector<f64>,
    /// `E^T (1 ⊗ P) f(X) (1 ⊗ P) E`.
    pub violation: f64,
    /// Smallest eigenvalue of the compressed `g(X)`.
    pub compressed_g_lambda_min: f64,
}

/// Columns `v_k` with `M = sum_k v_k v_k^T`, eigenvalues above
/// `cutoff * (1 + ||M||_F)`.
fn separator_factor(sep: &SymMat, cutoff: f64) -> Result<RectMat> {
    let eig = sym_eig(sep)?;
    let thresh = cutoff * (1.0 + sep.frobenius());
    let kept: Vec<usize> = (0..eig.values.len()).filter(|&k| eig.values[k] > thresh).collect();
    let mut v = DMatrix::zeros(sep.dim(), kept.len());
    for (c, &k) in kept.iter().enumerate() {
        v.set_column(c, &(eig.vectors.column(k) * eig.values[k].sqrt()));
    }
    Ok(v)
}

fn check_separator_input(f: &NCQuadPoly, sep: &SymMat, opts: &SolveOptions) -> Result<usize> {
    let m = f.m();
    if sep.dim() % m != 0 || sep.dim() / m < f.q() {
        return Err(Error::ShapeMismatch(format!(
            "separator of size {} does not fit {m} variables with {}x{} coefficients",
            sep.dim(),
            f.q(),
            f.q()
        )));
    }
    if !is_psd(sep, opts.tol)? {
        return Err(Error::PreconditionViolated("separator is not PSD".into()));
    }
    Ok(sep.dim() / m)
}

/// Builds the bordered tuple `X_i = [[0, V_i^T], [V_i, 0]]` from a factor of
/// the separator and verifies it refutes `g(X) ⪰ 0 ⇒ f(X) ⪰ 0` under
/// compression to the last `q` coordinates.
///
/// The separator may be larger than `f`'s coefficients (after padding); `f`
/// is then read as padded with zeros.
pub fn build_counterexample(
    f: &NCQuadPoly,
    g: &NCQuadPoly,
    sep: &SymMat,
    opts: &SolveOptions,
) -> Result<Counterexample> {
    check_same_m(f, g)?;
    let qm = check_separator_input(f, sep, opts)?;
    let m = f.m();
    let mut failure = String::new();
    for cutoff in [RANK_CUTOFF, RANK_CUTOFF / 10.0] {
        let v = separator_factor(sep, cutoff)?;
        let r = v.ncols();
        if r == 0 {
            return Err(Error::VerificationFailed("separator has rank 0".into()));
        }
        let n = r + qm;
        let mats: Vec<DMatrix<f64>> = (0..m)
            .map(|i| {
                let vi = v.rows(i * qm, qm);
                let mut x = DMatrix::zeros(n, n);
                x.view_mut((r, 0), (qm, r)).copy_from(&vi);
                x.view_mut((0, r), (r, qm)).copy_from(&vi.transpose());
                x
            })
            .collect();
        let x = MatTuple::symmetric(mats)?;
        let mut projection = DMatrix::zeros(n, n);
        for k in r..n {
            projection[(k, k)] = 1.0;
        }

        let worst = block_identity_error(&x, sep, qm, |xi, xj| {
            (&projection * xi * xj * &projection).view((r, r), (qm, qm)).into_owned()
        });
        if worst > BLOCK_IDENTITY_TOL {
            failure = format!("block identity off by {worst:e} at rank {r}");
            continue;
        }

        let comp_g = g.evaluate_compressed(&x, &projection)?;
        let comp_f = f.evaluate_compressed(&x, &projection)?;
        let mut witness = DVector::zeros(f.q() * n);
        for a in 0..f.q() {
            witness[a * n + r + a] = 1.0;
        }
        let violation = witness.dot(&(comp_f.matrix() * &witness));
        let compressed_g_lambda_min = min_eigenvalue(&comp_g)?;
        if is_psd(&comp_g, opts.tol)? && violation <= -opts.tol_strict {
            return Ok(Counterexample {
                separator: sep.clone(),
                rank: r,
                x,
                projection,
                witness,
                violation,
                compressed_g_lambda_min,
            });
        }
        failure = format!(
            "compressed g has lambda_min {compressed_g_lambda_min:e}, compressed f gives {violation:e} at rank {r}"
        );
    }
    Err(Error::VerificationFailed(failure))
}

/// Largest Frobenius deviation of `product(X_i, X_j)` from `M_ij`.
fn block_identity_error(
    x: &MatTuple,
    sep: &SymMat,
    qm: usize,
    product: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>,
) -> f64 {
    let m = x.m();
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let got = product(&x.mats()[i], &x.mats()[j]);
            let want = sep.view((i * qm, j * qm), (qm, qm));
            worst = worst.max((got - want).norm());
        }
    }
    worst
}

/// A general tuple `X` with `g(X) ⪰ 0` but `E'^T f(X) E' < 0` in the
/// hereditary evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HereditaryCounterexample {
    pub separator: SymMat,
    pub rank: usize,
    pub x: MatTuple,
    /// `sum_a e_a ⊗ f_a`.
    pub witness: DVector<f64>,
    pub violation: f64,
    pub g_lambda_min: f64,
}

/// Builds `X_i = (v^i_1 ... v^i_r)` zero-padded to `max(r, q)` and verifies
/// it refutes `g(X) ⪰ 0 ⇒ f(X) ⪰ 0` for hereditary evaluation.
pub fn build_hereditary_counterexample(
    f: &NCQuadPoly,
    g: &NCQuadPoly,
    sep: &SymMat,
    opts: &SolveOptions,
) -> Result<HereditaryCounterexample> {
    check_same_m(f, g)?;
    let qm = check_separator_input(f, sep, opts)?;
    let m = f.m();
    let mut failure = String::new();
    for cutoff in [RANK_CUTOFF, RANK_CUTOFF / 10.0] {
        let v = separator_factor(sep, cutoff)?;
        let r = v.ncols();
        if r == 0 {
            return Err(Error::VerificationFailed("separator has rank 0".into()));
        }
        let n = r.max(qm);
        let mats: Vec<DMatrix<f64>> = (0..m)
            .map(|i| {
                let mut x = DMatrix::zeros(n, n);
                x.view_mut((0, 0), (qm, r)).copy_from(&v.rows(i * qm, qm));
                x
            })
            .collect();
        let x = MatTuple::general(mats)?;
        let worst = block_identity_error(&x, sep, qm, |xi, xj| {
            (xi * xj.transpose()).view((0, 0), (qm, qm)).into_owned()
        });
        if worst > BLOCK_IDENTITY_TOL {
            failure = format!("block identity off by {worst:e} at rank {r}");
            continue;
        }
        let gx = g.evaluate_hereditary(&x)?;
        let fx = f.evaluate_hereditary(&x)?;
        let mut witness = DVector::zeros(f.q() * n);
        for a in 0..f.q() {
            witness[a * n + a] = 1.0;
        }
        let violation = witness.dot(&(fx.matrix() * &witness));
        let g_lambda_min = min_eigenvalue(&gx)?;
        if is_psd(&gx, opts.tol)? && violation <= -opts.tol_strict {
            return Ok(HereditaryCounterexample {
                separator: sep.clone(),
                rank: r,
                x,
                witness,
                violation,
                g_lambda_min,
            });
        }
        failure = format!("g(X) has lambda_min {g_lambda_min:e}, f gives {violation:e} at rank {r}");
    }
    Err(Error::VerificationFailed(failure))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision<C> {
    Certificate(CPCertificate),
    Counterexample(C),
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecideReport<C> {
    pub decision: Decision<C>,
    pub reconciliation: Reconciliation,
    /// `lambda_min(g(X_hat))`.
    pub slater_lambda_min: f64,
    /// Best residual eigenvalue seen by the certificate search.
    pub certify_value: Option<f64>,
    /// Best `<A, M>` seen by the separator search.
    pub separator_value: Option<f64>,
}

/// Decides between a CP certificate and a counterexample for symmetric
/// evaluations, given a point with `g(X_hat) ≻ 0`.
pub fn decide(
    f: &NCQuadPoly,
    g: &NCQuadPoly,
    slater: &MatTuple,
    opts: &SolveOptions,
) -> Result<DecideReport<Counterexample>> {
    let slater_lambda_min = check_slater(g, slater, opts, |x| g.evaluate(x))?;
    decide_with(f, g, slater_lambda_min, opts, |sep| build_counterexample(f, g, sep, opts))
}

/// As [`decide`], for hereditary evaluations at general tuples.
pub fn decide_hereditary(
    f: &NCQuadPoly,
    g: &NCQuadPoly,
    slater: &MatTuple,
    opts: &SolveOptions,
) -> Result<DecideReport<HereditaryCounterexample>> {
    let slater_lambda_min = check_slater(g, slater, opts, |x| g.evaluate_hereditary(x))?;
    decide_with(f, g, slater_lambda_min, opts, |sep| {
        build_hereditary_counterexample(f, g, sep, opts)
    })
}

fn check_slater(
    g: &NCQuadPoly,
    slater: &MatTuple,
    opts: &SolveOptions,
    eval: impl Fn(&MatTuple) -> Result<SymMat>,
) -> Result<f64> {
    if slater.m() != g.m() {
        return Err(Error::ShapeMismatch(format!(
            "slater point has {} matrices, g has {} variables",
            slater.m(),
            g.m()
        )));
    }
    let lmin = min_eigenvalue(&eval(slater)?)?;
    if !(lmin > opts.tol_strict) {
        return Err(Error::SlaterViolated { min_eigenvalue: lmin });
    }
    Ok(lmin)
}

fn decide_with<C>(
    f: &NCQuadPoly,
    g: &NCQuadPoly,
    slater_lambda_min: f64,
    opts: &SolveOptions,
    build: impl Fn(&SymMat) -> Result<C>,
) -> Result<DecideReport<C>> {
    let (ft, gt, reconciliation) = reconcile(f, g)?;
    let (cert, sep) = if opts.threads >= 2 {
        std::thread::scope(|scope| {
            let handle = scope.spawn(|| find_separator(&ft, &gt, opts));
            let cert = certify(&ft, &gt, opts);
            let sep = handle.join().expect("separator search panicked");
            (cert, sep)
        })
    } else {
        let cert = certify(&ft, &gt, opts)?;
        if let CertifyOutcome::Certificate(c) = cert {
            return Ok(DecideReport {
                decision: Decision::Certificate(c),
                reconciliation,
                slater_lambda_min,
                certify_value: None,
                separator_value: None,
            });
        }
        (Ok(cert), find_separator(&ft, &gt, opts))
    };
    let mut report = DecideReport {
        decision: Decision::Inconclusive,
        reconciliation,
        slater_lambda_min,
        certify_value: None,
        separator_value: None,
    };
    match cert? {
        CertifyOutcome::Certificate(c) => {
            report.decision = Decision::Certificate(c);
            return Ok(report);
        }
        CertifyOutcome::NotFound { best_value } => report.certify_value = Some(best_value),
    }
    match sep? {
        SeparatorOutcome::Found(s) => {
            report.separator_value = Some(s.objective);
            if let Ok(c) = build(&s.matrix) {
                report.decision = Decision::Counterexample(c);
            }
        }
        SeparatorOutcome::NotFound { best_value } => report.separator_value = Some(best_value),
    }
    Ok(report)
}

/// Recomputes everything a certificate claims from `f` and `g`, or from
/// their reconciled forms when the Choi dimensions call for it.
///
/// Checks `J ⪰ 0`, `tr J > 0`, that the residual coefficient matrix is PSD
/// and that `f(X) - (phi ⊗ 1) g(X) ⪰ 0` at ten random symmetric tuples.
pub fn verify_certificate(cert: &CPCertificate, f: &NCQuadPoly, g: &NCQuadPoly, opts: &SolveOptions) -> bool {
    let choi = &cert.choi;
    let (ft, gt) = if choi.s() == g.q() && choi.t() == f.q() {
        (f.clone(), g.clone())
    } else {
        let Ok((ft, gt, _)) = reconcile(f, g) else { return false };
        if choi.s() != gt.q() || choi.t() != ft.q() {
            return false;
        }
        (ft, gt)
    };
    if choi.matrix().trace() <= MIN_TRACE || !choi.is_completely_positive(opts.tol).unwrap_or(false) {
        return false;
    }
    let Ok(residual) = certificate_residual(&ft, &gt, choi) else { return false };
    if !is_psd(&residual, opts.tol).unwrap_or(false) {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..10 {
        let n = rng.gen_range(1..=4);
        let mats = (0..ft.m())
            .map(|_| {
                let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                (&x + x.transpose()) * 0.5
            })
            .collect();
        let Ok(x) = MatTuple::new(TupleKind::Symmetric, mats) else { return false };
        let (Ok(fx), Ok(gx)) = (ft.evaluate(&x), gt.evaluate(&x)) else { return false };
        let Ok(mapped) = choi.apply_blockwise(gx.matrix(), BlockLayout::Outer { n }) else {
            return false;
        };
        let diff = SymMat::symmetrize(fx.matrix() - mapped);
        if !is_psd(&diff, opts.tol).unwrap_or(false) {
            return false;
        }
    }
    true
}

/// Homogenization `h(x_0, x)` of a nonhomogeneous quadratic.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizationResult {
    /// `H_i0`, with `H_0i = H_i0^T`.
    pub h_blocks: Vec<DMatrix<f64>>,
    /// Polynomial in `(x_0, x_1, ..., x_m)`.
    pub poly: NCQuadPoly,
    pub coefficient_matrix: SymMat,
    pub lambda_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HomogenizeOutcome {
    Success(HomogenizationResult),
    /// No PSD homogenization found; carries the best one seen.
    Infeasible(HomogenizationResult),
}

/// Skew unit `E_ab - E_ba` placed at block `(i+1, 0)` and transposed at
/// `(0, i+1)`.
fn skew_direction(m: usize, q: usize, i: usize, a: usize, b: usize) -> SymMat {
    let d = (m + 1) * q;
    let mut s = DMatrix::zeros(d, d);
    let (row, col) = ((i + 1) * q, 0);
    s[(row + a, col + b)] += 1.0;
    s[(row + b, col + a)] -= 1.0;
    s[(col + b, row + a)] += 1.0;
    s[(col + a, row + b)] -= 1.0;
    SymMat::symmetrize(s)
}

fn homogenization_from(p: &NonHomogeneousPoly, skew: &[DMatrix<f64>]) -> Result<HomogenizationResult> {
    let (m, q) = (p.quadratic.m(), p.quadratic.q());
    let h_blocks: Vec<DMatrix<f64>> = p
        .linear
        .iter()
        .zip(skew)
        .map(|(ai, k)| ai.matrix() * 0.5 + k)
        .collect();
    let mut blocks = vec![DMatrix::zeros(q, q); (m + 1) * (m + 1)];
    blocks[0] = p.constant.matrix().clone();
    for i in 0..m {
        blocks[(i + 1) * (m + 1)] = h_blocks[i].clone();
        blocks[i + 1] = h_blocks[i].transpose();
        for j in 0..m {
            blocks[(i + 1) * (m + 1) + j + 1] = p.quadratic.block(i, j).clone();
        }
    }
    let poly = NCQuadPoly::new(m + 1, q, blocks)?;
    let coefficient_matrix = poly.coefficient_matrix();
    let lambda_min = min_eigenvalue(&coefficient_matrix)?;
    Ok(HomogenizationResult {
        h_blocks,
        poly,
        coefficient_matrix,
        lambda_min,
    })
}

/// Searches for `H_i0 = A_i / 2 + K_i`, `K_i` skew, making the coefficient
/// matrix of `h = sum A_ij x_i x_j + sum (H_i0 x_i x_0 + H_0i x_0 x_i) +
/// A_0 x_0 x_0` PSD, so that `h(Id, X) = f(X)`.
pub fn homogenize(p: &NonHomogeneousPoly, opts: &SolveOptions) -> Result<HomogenizeOutcome> {
    let (m, q) = (p.quadratic.m(), p.quadratic.q());
    let d = (m + 1) * q;
    let dirs: Vec<(usize, usize, usize)> = (0..m)
        .flat_map(|i| (0..q).flat_map(move |a| ((a + 1)..q).map(move |b| (i, a, b))))
        .collect();
    let to_skew = |k: &[f64]| {
        let mut skew = vec![DMatrix::zeros(q, q); m];
        for (&(i, a, b), &v) in dirs.iter().zip(k) {
            skew[i][(a, b)] += v;
            skew[i][(b, a)] -= v;
        }
        skew
    };
    let base = homogenization_from(p, &to_skew(&vec![0.0; dirs.len()]))?;
    let accept = |r: &HomogenizationResult| is_psd(&r.coefficient_matrix, opts.tol);
    if dirs.is_empty() {
        return Ok(if accept(&base)? {
            HomogenizeOutcome::Success(base)
        } else {
            HomogenizeOutcome::Infeasible(base)
        });
    }

    let c0 = base.coefficient_matrix.clone();
    let scale = norm_or_one(&c0);
    let directions: Vec<SymMat> = dirs.iter().map(|&(i, a, b)| skew_direction(m, q, i, a, b)).collect();
    let mut k = vec![0.0; dirs.len()];
    if dirs.len() < MAX_LMI_VARIABLES {
        let mut lmi = LmiProblem::new(&[d, 1]);
        lmi.set_constant(0, &c0.scale(1.0 / scale));
        lmi.set_constant(1, &SymMat::identity(1));
        lmi.add_variable(1.0, vec![(0, SymMat::identity(d)), (1, SymMat::identity(1))]);
        for dir in &directions {
            lmi.add_variable(0.0, vec![(0, dir.scale(-1.0))]);
        }
        let sol = lmi.solve(&LmiOptions::default());
        k = sol.y.iter().skip(1).map(|v| v * scale).collect();
    }
    let mut best = homogenization_from(p, &to_skew(&k))?;
    if best.lambda_min < base.lambda_min {
        best = base;
        k.iter_mut().for_each(|v| *v = 0.0);
    }
    if accept(&best)? {
        return Ok(HomogenizeOutcome::Success(best));
    }

    // supergradient ascent on the skew parameters
    let mut cur = k;
    for it in 1..=opts.budget {
        let res = homogenization_from(p, &to_skew(&cur))?;
        if res.lambda_min > best.lambda_min {
            best = res.clone();
            if accept(&best)? {
                return Ok(HomogenizeOutcome::Success(best));
            }
        }
        let (_, u) = min_eig_pair(&res.coefficient_matrix)?;
        let grad: Vec<f64> = directions.iter().map(|s| u.dot(&(s.matrix() * &u))).collect();
        let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let step = scale / (it as f64).sqrt();
        for (c, gv) in cur.iter_mut().zip(&grad) {
            *c += step * gv / gn;
        }
    }
    Ok(HomogenizeOutcome::Infeasible(best))
}
