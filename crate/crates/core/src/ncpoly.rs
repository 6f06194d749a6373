//! Symmetric quadratic homogeneous matrix-valued noncommutative polynomials
//! `f(x) = sum_ij A_ij x_i x_j` and their evaluations on matrix tuples.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, kron, RectMat, SymMat};

/// Symmetry deviation tolerated (and removed) when building polynomials and
/// tuples.
const SYMMETRY_TOL: f64 = 1e-12;

/// `f(x) = sum_{i,j} A_ij x_i x_j` with `A_ij = A_ji^T` of size `q x q`.
#[derive(Debug, Clone, PartialEq)]
pub struct NCQuadPoly {
    m: usize,
    q: usize,
    /// Row-major `m x m` grid.
    blocks: Vec<DMatrix<f64>>,
}

impl NCQuadPoly {
    /// Validates shapes and the transpose symmetry `A_ij = A_ji^T`.
    ///
    /// Deviations up to `1e-12` (relative to the largest entry) are averaged
    /// away; anything larger is rejected.
    pub fn new(m: usize, q: usize, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if m == 0 || q == 0 {
            return Err(Error::ShapeMismatch(format!(
                "need m >= 1 and q >= 1, got m = {m}, q = {q}"
            )));
        }
        if blocks.len() != m * m {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coefficient blocks, got {}",
                m * m,
                blocks.len()
            )));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != q || b.ncols() != q {
                return Err(Error::ShapeMismatch(format!(
                    "block ({}, {}) is {}x{}, expected {q}x{q}",
                    k / m,
                    k % m,
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "block ({}, {}) has non-finite entries",
                    k / m,
                    k % m
                )));
            }
        }
        let scale = 1.0 + blocks.iter().map(|b| b.amax()).fold(0.0, f64::max);
        let mut blocks = blocks;
        for i in 0..m {
            for j in i..m {
                let dev = (&blocks[i * m + j] - blocks[j * m + i].transpose()).amax();
                if dev > SYMMETRY_TOL * scale {
                    return Err(Error::AsymmetricCoefficients { i, j, deviation: dev });
                }
                let avg = (&blocks[i * m + j] + blocks[j * m + i].transpose()) * 0.5;
                blocks[j * m + i] = avg.transpose();
                blocks[i * m + j] = avg;
            }
        }
        Ok(NCQuadPoly { m, q, blocks })
    }

    /// Splits a symmetric `mq x mq` coefficient matrix into its blocks.
    pub fn from_coefficient_matrix(m: usize, q: usize, coeff: &SymMat) -> Result<Self> {
        if coeff.dim() != m * q {
            return Err(Error::ShapeMismatch(format!(
                "coefficient matrix is {0}x{0}, expected {1}x{1}",
                coeff.dim(),
                m * q
            )));
        }
        let blocks = (0..m * m)
            .map(|k| coeff.view((k / m * q, k % m * q), (q, q)).into_owned())
            .collect();
        Self::new(m, q, blocks)
    }

    pub fn zero(m: usize, q: usize) -> Self {
        NCQuadPoly {
            m,
            q,
            blocks: vec![DMatrix::zeros(q, q); m * m],
        }
    }

    /// Number of variables.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Coefficient dimension.
    pub fn q(&self) -> usize {
        self.q
    }

    /// `A_ij`.
    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.blocks[i * self.m + j]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// The `mq x mq` block matrix with `(i, j)` block `A_ij`.
    pub fn coefficient_matrix(&self) -> SymMat {
        let (m, q) = (self.m, self.q);
        let mut c = DMatrix::zeros(m * q, m * q);
        for i in 0..m {
            for j in 0..m {
                c.view_mut((i * q, j * q), (q, q)).copy_from(self.block(i, j));
            }
        }
        SymMat::symmetrize(c)
    }

    /// `f(X) = sum_ij A_ij ⊗ X_i X_j` for a symmetric tuple.
    pub fn evaluate(&self, x: &MatTuple) -> Result<SymMat> {
        if x.kind() != TupleKind::Symmetric {
            return Err(Error::ShapeMismatch(
                "evaluation needs a symmetric tuple; use evaluate_hereditary for general tuples"
                    .into(),
            ));
        }
        self.check_tuple(x)?;
        Ok(SymMat::symmetrize(self.eval_with(x, |a, b| a * b)))
    }

    /// Hereditary evaluation `sum_ij A_ij ⊗ X_i X_j^T`.
    pub fn evaluate_hereditary(&self, x: &MatTuple) -> Result<SymMat> {
        self.check_tuple(x)?;
        Ok(SymMat::symmetrize(
            self.eval_with(x, |a, b| a * b.transpose()),
        ))
    }

    /// `(Id_q ⊗ Q^T) f(X) (Id_q ⊗ Q)` for `Q` with `n` rows.
    pub fn evaluate_compressed(&self, x: &MatTuple, q_mat: &RectMat) -> Result<SymMat> {
        if q_mat.nrows() != x.n() {
            return Err(Error::ShapeMismatch(format!(
                "compression has {} rows, tuple dimension is {}",
                q_mat.nrows(),
                x.n()
            )));
        }
        let full = self.evaluate(x)?;
        let lift = kron(&DMatrix::identity(self.q, self.q), q_mat)?;
        Ok(full.congruence(&lift))
    }

    fn check_tuple(&self, x: &MatTuple) -> Result<()> {
        if x.m() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "polynomial has {} variables, tuple has {} matrices",
                self.m,
                x.m()
            )));
        }
        Ok(())
    }

    fn eval_with(
        &self,
        x: &MatTuple,
        product: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>,
    ) -> DMatrix<f64> {
        let n = x.n();
        let mut out = DMatrix::zeros(self.q * n, self.q * n);
        for i in 0..self.m {
            for j in 0..self.m {
                let a = self.block(i, j);
                if a.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let xx = product(&x.mats()[i], &x.mats()[j]);
                for r in 0..self.q {
                    for c in 0..self.q {
                        let coef = a[(r, c)];
                        if coef != 0.0 {
                            let mut view = out.view_mut((r * n, c * n), (n, n));
                            view += &xx * coef;
                        }
                    }
                }
            }
        }
        out
    }

    /// `⊕^k f`: every block becomes `Id_k ⊗ A_ij`, so `q` grows to `kq`.
    pub fn direct_sum_repeat(&self, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidRepeat(k));
        }
        let id = DMatrix::identity(k, k);
        let blocks = self
            .blocks
            .iter()
            .map(|b| kron(&id, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(NCQuadPoly {
            m: self.m,
            q: k * self.q,
            blocks,
        })
    }

    /// Embeds every block top-left in a `q_new x q_new` zero matrix.
    pub fn pad_coefficients(&self, q_new: usize) -> Result<Self> {
        if q_new < self.q {
            return Err(Error::ShapeMismatch(format!(
                "cannot pad q = {} down to {q_new}",
                self.q
            )));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut p = DMatrix::zeros(q_new, q_new);
                p.view_mut((0, 0), (self.q, self.q)).copy_from(b);
                p
            })
            .collect();
        Ok(NCQuadPoly {
            m: self.m,
            q: q_new,
            blocks,
        })
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: f64, other: &NCQuadPoly, beta: f64) -> Result<Self> {
        if self.m != other.m || self.q != other.q {
            return Err(Error::ShapeMismatch(format!(
                "cannot combine (m, q) = ({}, {}) with ({}, {})",
                self.m, self.q, other.m, other.q
            )));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a * alpha + b * beta)
            .collect();
        Ok(NCQuadPoly {
            m: self.m,
            q: self.q,
            blocks,
        })
    }
}

/// Whether a tuple lives in `(SR^n)^m` or `(R^{n x n})^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TupleKind {
    Symmetric,
    General,
}

/// An `m`-tuple of `n x n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatTuple {
    n: usize,
    kind: TupleKind,
    mats: Vec<DMatrix<f64>>,
}

impl MatTuple {
    pub fn new(kind: TupleKind, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = mats.first() else {
            return Err(Error::ShapeMismatch("tuple needs at least one matrix".into()));
        };
        let n = first.nrows();
        if n == 0 {
            return Err(Error::ShapeMismatch("tuple matrices must be non-empty".into()));
        }
        let mut mats = mats;
        for (i, x) in mats.iter_mut().enumerate() {
            if x.nrows() != n || x.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "matrix {i} is {}x{}, expected {n}x{n}",
                    x.nrows(),
                    x.ncols()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("matrix {i} has non-finite entries")));
            }
            if kind == TupleKind::Symmetric {
                let dev = asymmetry(x);
                if dev > SYMMETRY_TOL * (1.0 + x.amax()) {
                    return Err(Error::InvalidInput(format!(
                        "matrix {i} of a symmetric tuple deviates from symmetry by {dev:e}"
                    )));
                }
                *x = (&*x + x.transpose()) * 0.5;
            }
        }
        Ok(MatTuple { n, kind, mats })
    }

    pub fn symmetric(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(TupleKind::Symmetric, mats)
    }

    pub fn general(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(TupleKind::General, mats)
    }

    /// A point of `R^m` viewed as a tuple of `1 x 1` matrices.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::symmetric(xs.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect())
    }

    pub fn m(&self) -> usize {
        self.mats.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> TupleKind {
        self.kind
    }

    pub fn mats(&self) -> &[DMatrix<f64>] {
        &self.mats
    }
}

/// Scalar quadratic `x^T A x + a^T x + a0` in `m` commuting variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarQuad {
    pub a: SymMat,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl ScalarQuad {
    /// Homogeneous form `x^T A x`.
    pub fn homogeneous(a: SymMat) -> Self {
        let m = a.dim();
        ScalarQuad {
            a,
            linear: DVector::zeros(m),
            constant: 0.0,
        }
    }

    pub fn m(&self) -> usize {
        self.a.dim()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(self.a.matrix() * x)) + self.linear.dot(x) + self.constant
    }

    /// The `q = 1` noncommutative polynomial `sum_ij a_ij x_i x_j`.
    pub fn to_nc(&self) -> NCQuadPoly {
        let m = self.m();
        let blocks = (0..m * m)
            .map(|k| DMatrix::from_element(1, 1, self.a[(k / m, k % m)]))
            .collect();
        NCQuadPoly { m, q: 1, blocks }
    }
}

/// `f(x) = sum A_ij x_i x_j + sum A_i x_i + A_0`, the input of homogenization.
#[derive(Debug, Clone, PartialEq)]
pub struct NonHomogeneousPoly {
    pub quadratic: NCQuadPoly,
    /// `A_i`, symmetric `q x q`.
    pub linear: Vec<SymMat>,
    /// `A_0`, symmetric `q x q`.
    pub constant: SymMat,
}

impl NonHomogeneousPoly {
    pub fn new(quadratic: NCQuadPoly, linear: Vec<SymMat>, constant: SymMat) -> Result<Self> {
        let q = quadratic.q();
        if linear.len() != quadratic.m() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} linear coefficients, got {}",
                quadratic.m(),
                linear.len()
            )));
        }
        if linear.iter().chain(std::iter::once(&constant)).any(|c| c.dim() != q) {
            return Err(Error::ShapeMismatch(format!(
                "linear and constant coefficients must be {q}x{q}"
            )));
        }
        Ok(NonHomogeneousPoly {
            quadratic,
            linear,
            constant,
        })
    }

    /// `sum A_ij ⊗ X_i X_j + sum A_i ⊗ X_i + A_0 ⊗ Id_n`.
    pub fn evaluate(&self, x: &MatTuple) -> Result<SymMat> {
        let n = x.n();
        let mut out = self.quadratic.evaluate(x)?.into_inner();
        for (a, xi) in self.linear.iter().zip(x.mats()) {
            out += kron(a.matrix(), xi)?;
        }
        out += kron(self.constant.matrix(), &DMatrix::identity(n, n))?;
        Ok(SymMat::symmetrize(out))
    }
}
