//! Linear maps on matrices represented by their Choi matrices.
//!
//! For `phi: R^{s x s} -> R^{t x t}` the Choi matrix is
//! `J(phi) = sum_ab phi(E_ab) ⊗ E_ab`, an `st x st` matrix made of `t x t`
//! blocks `J_ij` of size `s x s`, with `phi(M)_ij = <J_ij, M>`.
//! `phi` is completely positive iff `J(phi)` is PSD.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{inner, is_psd, SymMat};
use crate::ncpoly::{MatTuple, NCQuadPoly};

/// Symmetry deviation allowed for `phi(B_ij)` against `phi(B_ji)^T`.
const MAP_SYMMETRY_TOL: f64 = 1e-10;

/// Choi matrix of a symmetry-preserving linear map `R^{s x s} -> R^{t x t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    s: usize,
    t: usize,
    j: SymMat,
}

impl ChoiMatrix {
    pub fn new(s: usize, t: usize, j: SymMat) -> Result<Self> {
        if s == 0 || t == 0 || j.dim() != s * t {
            return Err(Error::ShapeMismatch(format!(
                "Choi matrix of a map R^{s}x{s} -> R^{t}x{t} must be {0}x{0}, got {1}x{1}",
                s * t,
                j.dim()
            )));
        }
        Ok(ChoiMatrix { s, t, j })
    }

    /// Builds `J(phi)` from the images `phi(E_ab)` of the matrix units.
    ///
    /// Maps whose Choi matrix is not symmetric are rejected.
    pub fn from_map(s: usize, t: usize, phi: impl Fn(usize, usize) -> DMatrix<f64>) -> Result<Self> {
        let mut j = DMatrix::zeros(s * t, s * t);
        for a in 0..s {
            for b in 0..s {
                let img = phi(a, b);
                if img.nrows() != t || img.ncols() != t {
                    return Err(Error::ShapeMismatch(format!(
                        "phi(E_{a}{b}) is {}x{}, expected {t}x{t}",
                        img.nrows(),
                        img.ncols()
                    )));
                }
                for i in 0..t {
                    for jj in 0..t {
                        j[(i * s + a, jj * s + b)] = img[(i, jj)];
                    }
                }
            }
        }
        Self::new(s, t, SymMat::new(j)?)
    }

    pub fn identity(q: usize) -> Self {
        Self::from_map(q, q, |a, b| unit(q, a, b)).expect("identity map is symmetric")
    }

    /// `M -> M^T`; its Choi matrix is the swap operator.
    pub fn transpose_map(q: usize) -> Self {
        Self::from_map(q, q, |a, b| unit(q, b, a)).expect("transpose map is symmetric")
    }

    /// `M -> tr(M)` as a map into `R^{1 x 1}`.
    pub fn trace_map(q: usize) -> Self {
        Self::from_map(q, 1, |a, b| DMatrix::from_element(1, 1, if a == b { 1.0 } else { 0.0 }))
            .expect("trace map is symmetric")
    }

    pub fn zero(s: usize, t: usize) -> Self {
        ChoiMatrix {
            s,
            t,
            j: SymMat::zeros(s * t),
        }
    }

    /// Input dimension.
    pub fn s(&self) -> usize {
        self.s
    }

    /// Output dimension.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn matrix(&self) -> &SymMat {
        &self.j
    }

    pub fn into_matrix(self) -> SymMat {
        self.j
    }

    /// `phi(M)`.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.s || m.ncols() != self.s {
            return Err(Error::ShapeMismatch(format!(
                "map acts on {0}x{0} matrices, got {1}x{2}",
                self.s,
                m.nrows(),
                m.ncols()
            )));
        }
        let s = self.s;
        Ok(DMatrix::from_fn(self.t, self.t, |i, j| {
            inner(&self.j.view((i * s, j * s), (s, s)).into_owned(), m)
        }))
    }

    pub fn apply_sym(&self, m: &SymMat) -> Result<SymMat> {
        Ok(SymMat::symmetrize(self.apply(m.matrix())?))
    }

    pub fn is_completely_positive(&self, tol: f64) -> Result<bool> {
        is_psd(&self.j, tol)
    }

    /// Applies the map across a block matrix.
    ///
    /// [`BlockLayout::Inner`] realizes `(1_m ⊗ phi)` on a grid of `s x s`
    /// blocks; [`BlockLayout::Outer`] realizes `(phi ⊗ 1_n)` on an `s x s`
    /// grid of `n x n` blocks.
    pub fn apply_blockwise(&self, b: &DMatrix<f64>, layout: BlockLayout) -> Result<DMatrix<f64>> {
        match layout {
            BlockLayout::Inner => {
                let s = self.s;
                if b.nrows() != b.ncols() || b.nrows() % s != 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "{}x{} is not a square grid of {s}x{s} blocks",
                        b.nrows(),
                        b.ncols()
                    )));
                }
                let g = b.nrows() / s;
                let t = self.t;
                let mut out = DMatrix::zeros(g * t, g * t);
                for i in 0..g {
                    for j in 0..g {
                        let img = self.apply(&b.view((i * s, j * s), (s, s)).into_owned())?;
                        out.view_mut((i * t, j * t), (t, t)).copy_from(&img);
                    }
                }
                Ok(out)
            }
            BlockLayout::Outer { n } => {
                let s = self.s;
                if b.nrows() != s * n || b.ncols() != s * n {
                    return Err(Error::ShapeMismatch(format!(
                        "expected a {0}x{0} grid of {n}x{n} blocks, got {1}x{2}",
                        s,
                        b.nrows(),
                        b.ncols()
                    )));
                }
                let t = self.t;
                let mut out = DMatrix::zeros(t * n, t * n);
                for i in 0..t {
                    for j in 0..t {
                        let mut acc = out.view_mut((i * n, j * n), (n, n));
                        for a in 0..s {
                            for bb in 0..s {
                                let c = self.j[(i * s + a, j * s + bb)];
                                if c != 0.0 {
                                    acc += b.view((a * n, bb * n), (n, n)) * c;
                                }
                            }
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// `phi g = sum_ij phi(B_ij) x_i x_j`.
    pub fn apply_to_poly(&self, g: &NCQuadPoly) -> Result<NCQuadPoly> {
        if g.q() != self.s {
            return Err(Error::ShapeMismatch(format!(
                "map acts on {0}x{0} matrices, polynomial has {1}x{1} coefficients",
                self.s,
                g.q()
            )));
        }
        let m = g.m();
        let mut blocks = g
            .blocks()
            .iter()
            .map(|b| self.apply(b))
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 + blocks.iter().map(|b| b.amax()).fold(0.0, f64::max);
        for i in 0..m {
            for j in i..m {
                let dev = (&blocks[i * m + j] - blocks[j * m + i].transpose()).amax();
                if dev > MAP_SYMMETRY_TOL * scale {
                    return Err(Error::SymmetryBroken { deviation: dev });
                }
                let avg = (&blocks[i * m + j] + blocks[j * m + i].transpose()) * 0.5;
                blocks[j * m + i] = avg.transpose();
                blocks[i * m + j] = avg;
            }
        }
        NCQuadPoly::new(m, self.t, blocks)
    }
}

/// How [`ChoiMatrix::apply_blockwise`] reads its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLayout {
    /// Replace every `s x s` block `B_ij` by `phi(B_ij)`.
    Inner,
    /// Treat the input as an `s x s` grid of `n x n` blocks and let `phi`
    /// act on the grid index.
    Outer { n: usize },
}

fn unit(q: usize, a: usize, b: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(q, q);
    e[(a, b)] = 1.0;
    e
}

/// The permutation `u = sum_ji (alpha_j ⊗ beta_i)(beta_i ⊗ alpha_j)^T`
/// taking `R^m ⊗ R^q` coordinates to `R^q ⊗ R^m` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleMatrix {
    q: usize,
    m: usize,
    u: DMatrix<f64>,
}

impl ShuffleMatrix {
    pub fn new(q: usize, m: usize) -> Self {
        let mut u = DMatrix::zeros(q * m, q * m);
        for j in 0..q {
            for i in 0..m {
                u[(j * m + i, i * q + j)] = 1.0;
            }
        }
        ShuffleMatrix { q, m, u }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// `u S u^T`.
    pub fn conjugate(&self, s: &SymMat) -> SymMat {
        SymMat::symmetrize(&self.u * s.matrix() * self.u.transpose())
    }

    /// Image of coordinate `i * q + a` (variable-major) under `u`.
    pub fn map_index(&self, i: usize, a: usize) -> usize {
        a * self.m + i
    }
}

pub fn shuffle(q: usize, m: usize) -> ShuffleMatrix {
    ShuffleMatrix::new(q, m)
}

/// The rearranged coefficient matrix `A'`, read as the Choi matrix of
/// `psi_f: R^{m x m} -> R^{q x q}`.
///
/// `A' = u A u^T` for `u = shuffle(q, m)`; with this orientation
/// `f(X) = (psi_f ⊗ 1_n)(gram(X))`.
pub fn rearrange(p: &NCQuadPoly) -> ChoiMatrix {
    let (m, q) = (p.m(), p.q());
    let mut j = DMatrix::zeros(m * q, m * q);
    for i in 0..m {
        for jj in 0..m {
            let a_ij = p.block(i, jj);
            for a in 0..q {
                for b in 0..q {
                    j[(a * m + i, b * m + jj)] = a_ij[(a, b)];
                }
            }
        }
    }
    ChoiMatrix {
        s: m,
        t: q,
        j: SymMat::symmetrize(j),
    }
}

/// Block matrix with `(i, j)` block `X_i X_j^T` (equal to `X_i X_j` for
/// symmetric tuples).
pub fn gram(x: &MatTuple) -> SymMat {
    let n = x.n();
    let mut stacked = DMatrix::zeros(x.m() * n, n);
    for (i, xi) in x.mats().iter().enumerate() {
        stacked.view_mut((i * n, 0), (n, n)).copy_from(xi);
    }
    SymMat::symmetrize(&stacked * stacked.transpose())
}
