//! Small dense semidefinite programs in linear-matrix-inequality form.
//!
//! Solves
//!
//! ```text
//! maximize  b^T y   subject to  C - sum_k y_k A_k ⪰ 0
//! ```
//!
//! where `C` and every `A_k` are block diagonal, with a primal-dual
//! infeasible interior-point method (HKM direction, Mehrotra
//! predictor-corrector). The feasibility searches built on top of it verify
//! their answers independently, so the solver only has to get close.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{sym_eig, SymMat};

/// A symmetric coefficient restricted to one block.
#[derive(Debug, Clone)]
enum Coef {
    Dense(DMatrix<f64>),
    /// `(row, col, value)` triples listing both halves of off-diagonal pairs.
    Sparse(Vec<(usize, usize, f64)>),
}

impl Coef {
    fn from_matrix(m: DMatrix<f64>) -> Coef {
        let nnz = m.iter().filter(|x| **x != 0.0).count();
        if nnz * 4 <= m.nrows() * m.ncols() {
            let mut entries = Vec::with_capacity(nnz);
            for c in 0..m.ncols() {
                for r in 0..m.nrows() {
                    if m[(r, c)] != 0.0 {
                        entries.push((r, c, m[(r, c)]));
                    }
                }
            }
            Coef::Sparse(entries)
        } else {
            Coef::Dense(m)
        }
    }

    fn dot(&self, m: &DMatrix<f64>) -> f64 {
        match self {
            Coef::Dense(a) => a.dot(m),
            Coef::Sparse(e) => e.iter().map(|&(r, c, v)| v * m[(r, c)]).sum(),
        }
    }

    fn add_scaled_to(&self, out: &mut DMatrix<f64>, alpha: f64) {
        match self {
            Coef::Dense(a) => *out += a * alpha,
            Coef::Sparse(e) => {
                for &(r, c, v) in e {
                    out[(r, c)] += alpha * v;
                }
            }
        }
    }

    /// `X A Zinv`.
    fn sandwich(&self, x: &DMatrix<f64>, zinv: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Coef::Dense(a) => x * a * zinv,
            Coef::Sparse(e) => {
                let n = x.nrows();
                let mut out = DMatrix::zeros(n, n);
                for &(r, c, v) in e {
                    out.ger(v, &x.column(r), &zinv.row(c).transpose(), 1.0);
                }
                out
            }
        }
    }
}

/// Block-diagonal linear matrix inequality with a linear objective.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    sizes: Vec<usize>,
    constant: Vec<DMatrix<f64>>,
    objective: Vec<f64>,
    /// Per variable, its nonzero blocks.
    coefs: Vec<Vec<(usize, Coef)>>,
}

/// Stopping rules for [`LmiProblem::solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiOptions {
    pub max_iterations: usize,
    /// Target for relative gap and relative infeasibilities.
    pub tol: f64,
}

impl Default for LmiOptions {
    fn default() -> Self {
        LmiOptions {
            max_iterations: 100,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiStatus {
    Optimal,
    /// Progress stopped before the targets were met; `y` is the last iterate.
    Stalled,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub y: DVector<f64>,
    pub status: LmiStatus,
    pub iterations: usize,
    pub objective: f64,
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
}

impl LmiProblem {
    /// A problem with the given block sizes, `C = 0` and no variables.
    pub fn new(sizes: &[usize]) -> Self {
        assert!(sizes.iter().all(|&s| s > 0), "block sizes must be positive");
        LmiProblem {
            sizes: sizes.to_vec(),
            constant: sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect(),
            objective: Vec::new(),
            coefs: Vec::new(),
        }
    }

    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn set_constant(&mut self, block: usize, c: &SymMat) {
        assert_eq!(c.dim(), self.sizes[block], "constant has the wrong size");
        self.constant[block] = c.matrix().clone();
    }

    /// Adds a variable `y_k` with objective weight `weight` entering block
    /// `b` as `-y_k A_b` for each `(b, A_b)` in `terms`. Returns `k`.
    pub fn add_variable(&mut self, weight: f64, terms: Vec<(usize, SymMat)>) -> usize {
        let mut list = Vec::with_capacity(terms.len());
        for (b, a) in terms {
            assert_eq!(a.dim(), self.sizes[b], "coefficient has the wrong size");
            list.push((b, Coef::from_matrix(a.into_inner())));
        }
        self.objective.push(weight);
        self.coefs.push(list);
        self.num_variables() - 1
    }

    /// `C - sum_k y_k A_k`, blockwise.
    pub fn slack(&self, y: &DVector<f64>) -> Vec<SymMat> {
        self.slack_raw(y).into_iter().map(SymMat::symmetrize).collect()
    }

    fn slack_raw(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut s = self.constant.clone();
        for (k, terms) in self.coefs.iter().enumerate() {
            for (b, a) in terms {
                a.add_scaled_to(&mut s[*b], -y[k]);
            }
        }
        s
    }

    /// `(<A_k, X>)_k`.
    fn apply_adjoint(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.coefs.len(),
            self.coefs
                .iter()
                .map(|terms| terms.iter().map(|(b, a)| a.dot(&x[*b])).sum::<f64>()),
        )
    }

    fn combine(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut s: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (k, terms) in self.coefs.iter().enumerate() {
            if y[k] != 0.0 {
                for (b, a) in terms {
                    a.add_scaled_to(&mut s[*b], y[k]);
                }
            }
        }
        s
    }

    pub fn solve(&self, opts: &LmiOptions) -> LmiSolution {
        let k = self.num_variables();
        let ntot: usize = self.sizes.iter().sum();
        let b = DVector::from_column_slice(&self.objective);
        let norm_b = b.norm();
        let norm_c = block_norm(&self.constant);

        let coef_norms: Vec<f64> = self
            .coefs
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|(_, a)| match a {
                        Coef::Dense(m) => m.norm_squared(),
                        Coef::Sparse(e) => e.iter().map(|t| t.2 * t.2).sum(),
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let sq = (ntot as f64).sqrt();
        let mut xi = 10.0f64.max(sq);
        for (kk, nrm) in coef_norms.iter().enumerate() {
            xi = xi.max(ntot as f64 * (1.0 + b[kk].abs()) / (1.0 + nrm));
        }
        let eta = 10.0f64
            .max(sq)
            .max(norm_c)
            .max(coef_norms.iter().cloned().fold(0.0, f64::max));

        let mut x: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::identity(n, n) * xi).collect();
        let mut z: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::identity(n, n) * eta).collect();
        let mut y = DVector::zeros(k);

        // variables sharing each block, for assembling the Schur complement
        let mut by_block: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.sizes.len()];
        for (kk, terms) in self.coefs.iter().enumerate() {
            for (t, (blk, _)) in terms.iter().enumerate() {
                by_block[*blk].push((kk, t));
            }
        }

        let mut sol = LmiSolution {
            y: y.clone(),
            status: LmiStatus::IterationLimit,
            iterations: 0,
            objective: 0.0,
            gap: f64::INFINITY,
            primal_infeasibility: f64::INFINITY,
            dual_infeasibility: f64::INFINITY,
        };
        let mut slow_steps = 0;

        for iter in 0..=opts.max_iterations {
            let rp = &b - self.apply_adjoint(&x);
            let ay = self.combine(&y);
            let rd: Vec<DMatrix<f64>> = (0..self.sizes.len())
                .map(|i| &self.constant[i] - &z[i] - &ay[i])
                .collect();
            let gap: f64 = x.iter().zip(&z).map(|(a, c)| a.dot(c)).sum();
            let mu = gap / ntot as f64;
            let pobj: f64 = x.iter().zip(&self.constant).map(|(a, c)| a.dot(c)).sum();
            let dobj = b.dot(&y);
            let relgap = gap.abs() / (1.0 + pobj.abs() + dobj.abs());
            let pinf = rp.norm() / (1.0 + norm_b);
            let dinf = block_norm(&rd) / (1.0 + norm_c);

            sol.y = y.clone();
            sol.iterations = iter;
            sol.objective = dobj;
            sol.gap = relgap;
            sol.primal_infeasibility = pinf;
            sol.dual_infeasibility = dinf;
            if relgap.max(pinf).max(dinf) <= opts.tol {
                sol.status = LmiStatus::Optimal;
                return sol;
            }
            if iter == opts.max_iterations {
                break;
            }

            let Some(zinv) = z
                .iter()
                .map(|zb| zb.clone().cholesky().map(|c| c.inverse()))
                .collect::<Option<Vec<_>>>()
            else {
                sol.status = LmiStatus::Stalled;
                return sol;
            };

            // G_k = X A_k Z^{-1} and M_kl = <A_k, G_l>
            let g: Vec<Vec<DMatrix<f64>>> = self
                .coefs
                .iter()
                .map(|terms| terms.iter().map(|(blk, a)| a.sandwich(&x[*blk], &zinv[*blk])).collect())
                .collect();
            let mut schur = DMatrix::zeros(k, k);
            for members in &by_block {
                for &(l, tl) in members {
                    let gl = &g[l][tl];
                    for &(kk, tk) in members {
                        if kk <= l {
                            schur[(kk, l)] += self.coefs[kk][tk].1.dot(gl);
                        }
                    }
                }
            }
            for l in 0..k {
                for kk in 0..l {
                    schur[(l, kk)] = schur[(kk, l)];
                }
            }
            let Some(solver) = SchurSolver::new(schur) else {
                sol.status = LmiStatus::Stalled;
                return sol;
            };

            let x_rd_zinv: Vec<DMatrix<f64>> = (0..self.sizes.len())
                .map(|i| &x[i] * &rd[i] * &zinv[i])
                .collect();

            let direction = |rc_zinv: Vec<DMatrix<f64>>| {
                let h: Vec<DMatrix<f64>> = rc_zinv
                    .into_iter()
                    .zip(&x_rd_zinv)
                    .map(|(a, c)| a - c)
                    .collect();
                let rhs = &rp - self.apply_adjoint(&h);
                let dy = solver.solve(&rhs);
                let mut dx = h;
                for (l, terms) in self.coefs.iter().enumerate() {
                    for (t, (blk, _)) in terms.iter().enumerate() {
                        dx[*blk] += &g[l][t] * dy[l];
                    }
                }
                let dx: Vec<DMatrix<f64>> = dx.into_iter().map(|m| (&m + m.transpose()) * 0.5).collect();
                let ady = self.combine(&dy);
                let dz: Vec<DMatrix<f64>> = (0..self.sizes.len()).map(|i| &rd[i] - &ady[i]).collect();
                (dx, dy, dz)
            };

            // predictor
            let (dxa, _, dza) = direction(x.iter().map(|m| -m).collect());
            let ap = max_step(&x, &dxa).min(1.0);
            let ad = max_step(&z, &dza).min(1.0);
            let mu_aff: f64 = x
                .iter()
                .zip(&dxa)
                .zip(z.iter().zip(&dza))
                .map(|((xb, dxb), (zb, dzb))| (xb + dxb * ap).dot(&(zb + dzb * ad)))
                .sum::<f64>()
                / ntot as f64;
            let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

            // corrector
            let rc_zinv: Vec<DMatrix<f64>> = (0..self.sizes.len())
                .map(|i| &zinv[i] * (sigma * mu) - &x[i] - &dxa[i] * &dza[i] * &zinv[i])
                .collect();
            let (dx, dy, dz) = direction(rc_zinv);
            let gamma = 0.95;
            let ap = (gamma * max_step(&x, &dx)).min(1.0);
            let ad = (gamma * max_step(&z, &dz)).min(1.0);
            for i in 0..self.sizes.len() {
                x[i] += &dx[i] * ap;
                z[i] += &dz[i] * ad;
                x[i] = (&x[i] + x[i].transpose()) * 0.5;
                z[i] = (&z[i] + z[i].transpose()) * 0.5;
            }
            y += &dy * ad;

            if ap.max(ad) < 1e-8 {
                slow_steps += 1;
                if slow_steps >= 3 {
                    sol.status = LmiStatus::Stalled;
                    return sol;
                }
            } else {
                slow_steps = 0;
            }
        }
        sol.status = LmiStatus::IterationLimit;
        sol
    }
}

fn block_norm(blocks: &[DMatrix<f64>]) -> f64 {
    blocks.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

/// Largest `alpha` with `X + alpha dX ⪰ 0`, blockwise; `X` must be positive
/// definite.
fn max_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (xb, dxb) in x.iter().zip(dx) {
        let lam = if xb.nrows() == 1 {
            dxb[(0, 0)] / xb[(0, 0)]
        } else {
            let Some(chol) = xb.clone().cholesky() else { return 0.0 };
            let l = chol.l();
            let Some(linv) = l.try_inverse() else { return 0.0 };
            let w = SymMat::symmetrize(&linv * dxb * linv.transpose());
            match sym_eig(&w) {
                Ok(e) => e.min_value(),
                Err(_) => return 0.0,
            }
        };
        if lam < 0.0 {
            best = best.min(-1.0 / lam);
        }
    }
    best
}

enum SchurSolver {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(c) = m.clone().cholesky() {
            return Some(SchurSolver::Cholesky(c));
        }
        let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut shift = 1e-14 * scale;
        for _ in 0..6 {
            let mut shifted = m.clone();
            for i in 0..m.nrows() {
                shifted[(i, i)] += shift;
            }
            if let Some(c) = shifted.cholesky() {
                return Some(SchurSolver::Cholesky(c));
            }
            shift *= 100.0;
        }
        let lu = m.lu();
        lu.is_invertible().then_some(SchurSolver::Lu(lu))
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurSolver::Cholesky(c) => c.solve(rhs),
            SchurSolver::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}
