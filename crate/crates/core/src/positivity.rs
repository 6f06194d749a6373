//! Global positivity of quadratic NC polynomials and the scalar S-lemma.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    inner, is_psd, maximize_spectral, min_eig_pair, psd_factor, sym_eig, RectMat, SpectralOptions, SymMat,
    DEFAULT_TOL,
};
use crate::ncpoly::{MatTuple, NCQuadPoly, ScalarQuad};

/// Default strictness margin for counterexamples.
pub const DEFAULT_TOL_STRICT: f64 = 1e-6;

/// Eigenvalues below this fraction of `1 + ||A||_F` count as zero when
/// sizing an SOS factor.
const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Psd,
    NotPsd,
}

/// A point `X0` and vector `w` with `w^T f(X0) w < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativityWitness {
    pub point: MatTuple,
    pub vector: DVector<f64>,
    /// `w^T f(X0) w`, recomputed from the evaluation.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub verdict: Verdict,
    /// Eigenvalues of the coefficient matrix, descending.
    pub eigenvalues: DVector<f64>,
    pub witness: Option<NegativityWitness>,
}

/// The test tuple with `X_i = E_{0,i+1} + E_{i+1,0}` of size `m + 1`.
///
/// `f(X0)` is permutation-similar to `diag(sum_i A_ii, A)`.
pub fn witness_point(m: usize) -> MatTuple {
    let mats = (0..m)
        .map(|i| {
            let mut x = DMatrix::zeros(m + 1, m + 1);
            x[(0, i + 1)] = 1.0;
            x[(i + 1, 0)] = 1.0;
            x
        })
        .collect();
    MatTuple::symmetric(mats).expect("witness point is symmetric")
}

/// Decides whether `f(X) ⪰ 0` for every symmetric tuple `X` by testing the
/// coefficient matrix. A negative verdict comes with a verified witness.
pub fn is_globally_psd(f: &NCQuadPoly, tol: f64) -> Result<PositivityReport> {
    let coeff = f.coefficient_matrix();
    let eig = sym_eig(&coeff)?;
    if is_psd(&coeff, tol)? {
        return Ok(PositivityReport {
            verdict: Verdict::Psd,
            eigenvalues: eig.values,
            witness: None,
        });
    }

    let (m, q) = (f.m(), f.q());
    let n = m + 1;
    let v = eig.vectors.column(eig.values.len() - 1).into_owned();
    let mut w = DVector::zeros(q * n);
    for i in 0..m {
        for a in 0..q {
            w[a * n + i + 1] = v[i * q + a];
        }
    }
    let point = witness_point(m);
    let fx = f.evaluate(&point)?;
    let value = w.dot(&(fx.matrix() * &w));
    let expected = eig.min_value();
    if !(value < 0.0) || (value - expected).abs() > 1e-9 * (1.0 + coeff.frobenius()) {
        return Err(Error::WitnessConstructionFailed(format!(
            "w^T f(X0) w = {value:e}, expected {expected:e}"
        )));
    }
    Ok(PositivityReport {
        verdict: Verdict::NotPsd,
        eigenvalues: eig.values,
        witness: Some(NegativityWitness { point, vector: w, value }),
    })
}

/// `f(X) = L(X)^T L(X)` with `L(X) = sum_i W_i ⊗ X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFactor {
    q: usize,
    /// `W_i`, each `r x q`.
    blocks: Vec<RectMat>,
}

impl SosFactor {
    pub fn rank(&self) -> usize {
        self.blocks.first().map_or(0, |w| w.nrows())
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn blocks(&self) -> &[RectMat] {
        &self.blocks
    }

    /// `L(X) = sum_i W_i ⊗ X_i`, of size `rn x qn`.
    pub fn evaluate_linear(&self, x: &MatTuple) -> Result<RectMat> {
        if x.m() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "factor has {} variables, tuple has {}",
                self.blocks.len(),
                x.m()
            )));
        }
        let n = x.n();
        let mut out = DMatrix::zeros(self.rank() * n, self.q * n);
        for (w, xi) in self.blocks.iter().zip(x.mats()) {
            out += crate::linalg::kron(w, xi)?;
        }
        Ok(out)
    }
}

/// SOS factorization of a globally PSD `f` from the spectral decomposition of
/// its coefficient matrix.
pub fn sos_factor(f: &NCQuadPoly, tol: f64) -> Result<SosFactor> {
    let coeff = f.coefficient_matrix();
    let eig = sym_eig(&coeff)?;
    if !is_psd(&coeff, tol)? {
        return Err(Error::NotGloballyPsd {
            min_eigenvalue: eig.min_value(),
        });
    }
    let cutoff = RANK_CUTOFF * (1.0 + coeff.frobenius());
    let kept: Vec<usize> = (0..eig.values.len()).filter(|&k| eig.values[k] > cutoff).collect();
    let (m, q) = (f.m(), f.q());
    // rows of W are sqrt(lambda_k) v_k^T
    let mut w = DMatrix::zeros(kept.len(), m * q);
    for (row, &k) in kept.iter().enumerate() {
        let s = eig.values[k].sqrt();
        for c in 0..m * q {
            w[(row, c)] = s * eig.vectors[(c, k)];
        }
    }
    let blocks = (0..m).map(|i| w.columns(i * q, q).into_owned()).collect();
    Ok(SosFactor { q, blocks })
}

/// Tolerances and search controls for [`scalar_slemma`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptions {
    pub tol: f64,
    pub tol_strict: f64,
    pub budget: usize,
    pub seed: u64,
}

impl Default for ScalarOptions {
    fn default() -> Self {
        ScalarOptions {
            tol: DEFAULT_TOL,
            tol_strict: DEFAULT_TOL_STRICT,
            budget: 5000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarOutcome {
    /// `A - lambda B ⪰ -tol`.
    Certificate { lambda: f64 },
    /// Unit `x` with `x^T B x >= -tol` and `x^T A x <= -tol_strict`.
    Counterexample { x: DVector<f64> },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSLemmaResult {
    pub outcome: ScalarOutcome,
    /// Largest `lambda_min(A - lambda B)` found and where.
    pub best_value: f64,
    pub best_lambda: f64,
    /// Final golden-section bracket.
    pub interval: (f64, f64),
}

/// `lambda_min(A - lambda B)`.
pub fn multiplier_value(a: &SymMat, b: &SymMat, lambda: f64) -> f64 {
    crate::linalg::min_eigenvalue(&a.sub(&b.scale(lambda))).unwrap_or(f64::NEG_INFINITY)
}

/// The scalar S-lemma: either `lambda >= 0` with `A - lambda B ⪰ 0`, or `x`
/// with `x^T B x >= 0` and `x^T A x < 0`.
pub fn scalar_slemma(
    f: &ScalarQuad,
    g: &ScalarQuad,
    slater: &DVector<f64>,
    opts: &ScalarOptions,
) -> Result<ScalarSLemmaResult> {
    let m = f.m();
    if g.m() != m || slater.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "f has {m} variables, g has {}, slater point has {}",
            g.m(),
            slater.len()
        )));
    }
    for (name, p) in [("f", f), ("g", g)] {
        if p.linear.iter().any(|v| *v != 0.0) || p.constant != 0.0 {
            return Err(Error::InvalidInput(format!("{name} must be a homogeneous quadratic form")));
        }
    }
    if slater.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("slater point has non-finite entries".into()));
    }
    let (a, b) = (&f.a, &g.a);
    let gs = slater.dot(&(b.matrix() * slater));
    if !(gs > opts.tol_strict) {
        return Err(Error::SlaterViolated { min_eigenvalue: gs });
    }

    let h = |l: f64| multiplier_value(a, b, l);
    let (lo, hi) = bracket(&h);
    let (best_lambda, best_value, interval) = golden_max(&h, lo, hi);

    let residual = a.sub(&b.scale(best_lambda));
    if is_psd(&residual, opts.tol)? {
        return Ok(ScalarSLemmaResult {
            outcome: ScalarOutcome::Certificate { lambda: best_lambda },
            best_value,
            best_lambda,
            interval,
        });
    }
    let mut result = ScalarSLemmaResult {
        outcome: ScalarOutcome::Inconclusive,
        best_value,
        best_lambda,
        interval,
    };
    if best_value > -opts.tol_strict {
        return Ok(result);
    }

    let separator = eigen_separator(a, b, best_lambda, interval)
        .filter(|s| is_separator(s, a, b, opts))
        .or_else(|| spectral_separator(a, b, opts));
    if let Some(s) = separator {
        if let Ok(x) = rank_one_split(&s, a, b, opts.tol, opts.tol_strict) {
            result.outcome = ScalarOutcome::Counterexample { x };
        }
    }
    Ok(result)
}

/// Bracket containing a maximizer of the concave `h` over `lambda >= 0`.
fn bracket(h: &impl Fn(f64) -> f64) -> (f64, f64) {
    const LIMIT: f64 = 1152921504606846976.0; // 2^60
    let mut prev = 0.0;
    let mut prev_val = h(0.0);
    let mut cur = 1.0;
    let mut cur_val = h(1.0);
    if cur_val < prev_val {
        return (0.0, 1.0);
    }
    while cur < LIMIT {
        let next = 2.0 * cur;
        let next_val = h(next);
        if next_val < cur_val {
            return (prev, next);
        }
        prev = cur;
        prev_val = cur_val;
        cur = next;
        cur_val = next_val;
    }
    let _ = prev_val;
    (prev, cur)
}

/// Golden-section maximization; returns the best sample, its value and the
/// final bracket.
fn golden_max(h: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64, (f64, f64)) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = (lo, h(lo));
    let end = h(hi);
    if end > best.1 {
        best = (hi, end);
    }
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = h(x1);
    let mut f2 = h(x2);
    for _ in 0..300 {
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = h(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = h(x1);
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    (best.0, best.1, (lo, hi))
}

fn is_separator(s: &SymMat, a: &SymMat, b: &SymMat, opts: &ScalarOptions) -> bool {
    is_psd(s, opts.tol).unwrap_or(false)
        && inner(a, s) <= -opts.tol_strict
        && inner(b, s) >= -opts.tol * (1.0 + b.frobenius())
}

/// Separator from bottom eigenvectors of `A - lambda B` on either side of the
/// maximizer, mixed so that `<B, S> = 0`.
fn eigen_separator(a: &SymMat, b: &SymMat, lambda: f64, interval: (f64, f64)) -> Option<SymMat> {
    let step = (1e-7 * (1.0 + lambda)).max(interval.1 - interval.0);
    let bottom = |l: f64| min_eig_pair(&a.sub(&b.scale(l))).ok().map(|p| p.1);
    let u_hi = bottom(lambda + step)?;
    let b_hi = u_hi.dot(&(b.matrix() * &u_hi));
    if lambda <= step || b_hi <= 0.0 {
        let u = if b_hi >= 0.0 { u_hi } else { bottom(0.0)? };
        return Some(SymMat::outer(&u));
    }
    let u_lo = bottom((lambda - step).max(0.0))?;
    let b_lo = u_lo.dot(&(b.matrix() * &u_lo));
    if b_lo >= 0.0 {
        return Some(SymMat::outer(&u_lo));
    }
    let theta = b_hi / (b_hi - b_lo);
    Some(SymMat::outer(&u_lo).scale(theta).add(&SymMat::outer(&u_hi).scale(1.0 - theta)))
}

/// Fallback: maximize `min(-<A,S>, <B,S>)` over the spectraplex.
fn spectral_separator(a: &SymMat, b: &SymMat, opts: &ScalarOptions) -> Option<SymMat> {
    let oracle = |s: &SymMat| {
        let va = -inner(a, s);
        let vb = inner(b, s);
        if va <= vb {
            (va, a.scale(-1.0))
        } else {
            (vb, b.clone())
        }
    };
    let search = maximize_spectral(
        &oracle,
        a.dim(),
        &SpectralOptions {
            budget: opts.budget,
            tol: opts.tol,
            ..Default::default()
        },
    );
    let s = search.point;
    is_separator(&s, a, b, opts).then_some(s)
}

/// Extracts `x` with `x^T A x < 0` and `x^T B x >= 0` from a PSD `S` with
/// `<A,S> < 0 <= <B,S>`.
///
/// Factors `S = sum_k v_k v_k^T` and rotates pairs of columns until every
/// column has the same `B`-value `<B,S>/r`; the column with the most negative
/// normalized `A`-value is returned with unit norm. Falls back to seeded
/// random sign combinations of the columns if the result does not verify.
pub fn rank_one_split(s: &SymMat, a: &SymMat, b: &SymMat, tol: f64, tol_strict: f64) -> Result<DVector<f64>> {
    let n = s.dim();
    if a.dim() != n || b.dim() != n {
        return Err(Error::ShapeMismatch("S, A and B must have equal dimensions".into()));
    }
    if !is_psd(s, tol)? {
        return Err(Error::PreconditionViolated("S is not PSD".into()));
    }
    let sa = inner(a, s);
    let sb = inner(b, s);
    if sa > -tol_strict {
        return Err(Error::PreconditionViolated(format!("<A,S> = {sa:e} is not below -{tol_strict:e}")));
    }
    if sb < -tol * (1.0 + b.frobenius()) {
        return Err(Error::PreconditionViolated(format!("<B,S> = {sb:e} is negative")));
    }

    let v = psd_factor(s, 1e-12)?;
    let cols: Vec<DVector<f64>> = v.column_iter().map(|c| c.into_owned()).collect();
    let accept = |x: &DVector<f64>| {
        let nn = x.norm_squared();
        nn > 0.0
            && x.dot(&(a.matrix() * x)) / nn < 0.0
            && x.dot(&(b.matrix() * x)) / nn >= -tol * (1.0 + b.frobenius())
    };
    let normalize = |x: DVector<f64>| {
        let nrm = x.norm();
        x / nrm
    };

    let split = equalize(cols.clone(), b);
    let best = split
        .into_iter()
        .filter(|x| x.norm_squared() > 0.0)
        .min_by(|x, y| {
            let ax = x.dot(&(a.matrix() * x)) / x.norm_squared();
            let ay = y.dot(&(a.matrix() * y)) / y.norm_squared();
            ax.total_cmp(&ay)
        });
    if let Some(x) = best.filter(|x| accept(x)) {
        return Ok(normalize(x));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..4096 {
        let mut x = DVector::zeros(n);
        for c in &cols {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            x += c * sign;
        }
        if accept(&x) {
            return Ok(normalize(x));
        }
    }
    Err(Error::SplitFailed(format!(
        "no rank-one vector found from rank {} factor (<A,S> = {sa:e}, <B,S> = {sb:e})",
        cols.len()
    )))
}

/// Rotates columns pairwise so each ends with `B`-value equal to the mean
/// `<B, sum v v^T> / r`, preserving `sum v v^T`.
fn equalize(mut cols: Vec<DVector<f64>>, b: &SymMat) -> Vec<DVector<f64>> {
    let r = cols.len();
    if r <= 1 {
        return cols;
    }
    let bval = |x: &DVector<f64>| x.dot(&(b.matrix() * x));
    let delta = cols.iter().map(bval).sum::<f64>() / r as f64;
    let mut done = Vec::with_capacity(r);
    while cols.len() > 1 {
        let vals: Vec<f64> = cols.iter().map(|c| bval(c) - delta).collect();
        let Some(i) = (0..cols.len()).find(|&k| vals[k] > 0.0) else { break };
        let Some(j) = (0..cols.len()).find(|&k| vals[k] < 0.0) else { break };
        // (v_i + t v_j)^T B (v_i + t v_j) = delta (1 + t^2)
        let c = cols[i].dot(&(b.matrix() * &cols[j]));
        let (p, qq) = (vals[i], vals[j]);
        let disc = (c * c - p * qq).max(0.0).sqrt();
        let t = if c >= 0.0 { -p / (c + disc) } else { -p / (c - disc) };
        let norm = (1.0 + t * t).sqrt();
        let new_i = (&cols[i] + &cols[j] * t) / norm;
        let new_j = (&cols[j] - &cols[i] * t) / norm;
        done.push(new_i);
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        cols.swap_remove(hi);
        cols.swap_remove(lo);
        cols.push(new_j);
    }
    done.extend(cols);
    done
}
