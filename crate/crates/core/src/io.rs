//! JSON forms of polynomials, tuples, certificates and counterexamples.
//!
//! Matrices are row-major nested arrays. Reals are written with 17
//! significant digits so that every `f64` survives a round trip.

use std::io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::cpmap::ChoiMatrix;
use crate::error::{Error, Result};
use crate::linalg::{SymMat, DEFAULT_TOL};
use crate::ncpoly::{MatTuple, NCQuadPoly, NonHomogeneousPoly, TupleKind};
use crate::positivity::DEFAULT_TOL_STRICT;
use crate::slemma::{Counterexample, HereditaryCounterexample, Reconciliation, SolveOptions};

pub const FORMAT_TAG: &str = "ncslemma/1";

pub type MatrixJson = Vec<Vec<f64>>;

pub fn matrix_to_json(m: &DMatrix<f64>) -> MatrixJson {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::InvalidInput(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn sym_from_json(rows: &MatrixJson) -> Result<SymMat> {
    let m = matrix_from_json(rows)?;
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    SymMat::new(m)
}

/// A polynomial as `m`, `q` and either the blocks `A_ij` or the assembled
/// coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyJson {
    pub m: usize,
    pub q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<MatrixJson>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficient_matrix: Option<MatrixJson>,
}

impl PolyJson {
    pub fn from_poly(p: &NCQuadPoly) -> Self {
        let m = p.m();
        PolyJson {
            m,
            q: p.q(),
            blocks: Some(
                (0..m)
                    .map(|i| (0..m).map(|j| matrix_to_json(p.block(i, j))).collect())
                    .collect(),
            ),
            coefficient_matrix: None,
        }
    }

    pub fn to_poly(&self) -> Result<NCQuadPoly> {
        let (m, q) = (self.m, self.q);
        match (&self.blocks, &self.coefficient_matrix) {
            (Some(rows), None) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(Error::ShapeMismatch(format!("blocks must form an {m}x{m} grid")));
                }
                let blocks = rows
                    .iter()
                    .flatten()
                    .map(matrix_from_json)
                    .collect::<Result<Vec<_>>>()?;
                NCQuadPoly::new(m, q, blocks)
            }
            (None, Some(c)) => NCQuadPoly::from_coefficient_matrix(m, q, &sym_from_json(c)?),
            _ => Err(Error::InvalidInput(
                "polynomial needs exactly one of \"blocks\" and \"coefficient_matrix\"".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TupleKindJson {
    Symmetric,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleJson {
    pub n: usize,
    pub kind: TupleKindJson,
    pub mats: Vec<MatrixJson>,
}

impl TupleJson {
    pub fn from_tuple(x: &MatTuple) -> Self {
        TupleJson {
            n: x.n(),
            kind: match x.kind() {
                TupleKind::Symmetric => TupleKindJson::Symmetric,
                TupleKind::General => TupleKindJson::General,
            },
            mats: x.mats().iter().map(matrix_to_json).collect(),
        }
    }

    pub fn to_tuple(&self) -> Result<MatTuple> {
        let mats = self.mats.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?;
        if let Some(x) = mats.iter().find(|x| x.nrows() != self.n) {
            return Err(Error::ShapeMismatch(format!(
                "tuple declares n = {} but holds a {}x{} matrix",
                self.n,
                x.nrows(),
                x.ncols()
            )));
        }
        let kind = match self.kind {
            TupleKindJson::Symmetric => TupleKind::Symmetric,
            TupleKindJson::General => TupleKind::General,
        };
        MatTuple::new(kind, mats)
    }
}

/// Options as stored in files; missing fields take the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptionsJson {
    pub tol: f64,
    pub tol_strict: f64,
    pub budget: usize,
    pub seed: u64,
}

impl Default for OptionsJson {
    fn default() -> Self {
        OptionsJson {
            tol: DEFAULT_TOL,
            tol_strict: DEFAULT_TOL_STRICT,
            budget: 5000,
            seed: 42,
        }
    }
}

impl OptionsJson {
    pub fn solve_options(&self, threads: usize) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            tol_strict: self.tol_strict,
            budget: self.budget,
            seed: self.seed,
            threads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) || !(self.tol_strict > 0.0 && self.tol_strict.is_finite()) {
            return Err(Error::InvalidInput("tolerances must be positive and finite".into()));
        }
        if self.budget == 0 {
            return Err(Error::InvalidInput("budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Positivity,
    Slemma,
    SlemmaHereditary,
    ScalarSlemma,
    Homogenize,
}

/// An input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub format: String,
    pub kind: ProblemKind,
    pub f: PolyJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<PolyJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slater: Option<TupleJson>,
    /// `A_i` of a nonhomogeneous polynomial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<MatrixJson>>,
    /// `A_0` of a nonhomogeneous polynomial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<MatrixJson>,
    #[serde(default)]
    pub options: OptionsJson,
}

impl Instance {
    pub fn parse(text: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        check_format(&inst.format)?;
        inst.options.validate()?;
        let needs_g = matches!(
            inst.kind,
            ProblemKind::Slemma | ProblemKind::SlemmaHereditary | ProblemKind::ScalarSlemma
        );
        if needs_g && (inst.g.is_none() || inst.slater.is_none()) {
            return Err(Error::InvalidInput(format!(
                "kind {:?} requires \"g\" and \"slater\"",
                inst.kind
            )));
        }
        if inst.kind == ProblemKind::Homogenize && (inst.linear.is_none() || inst.constant.is_none()) {
            return Err(Error::InvalidInput("kind homogenize requires \"linear\" and \"constant\"".into()));
        }
        Ok(inst)
    }

    pub fn f(&self) -> Result<NCQuadPoly> {
        self.f.to_poly()
    }

    /// `g`, checked to have as many variables as `f`.
    pub fn g(&self) -> Result<NCQuadPoly> {
        let g = self
            .g
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("instance has no \"g\"".into()))?
            .to_poly()?;
        if g.m() != self.f.m {
            return Err(Error::ShapeMismatch(format!("f has {} variables, g has {}", self.f.m, g.m())));
        }
        Ok(g)
    }

    pub fn slater(&self) -> Result<MatTuple> {
        let x = self
            .slater
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("instance has no \"slater\" point".into()))?
            .to_tuple()?;
        if x.m() != self.f.m {
            return Err(Error::ShapeMismatch(format!(
                "slater point has {} matrices, f has {} variables",
                x.m(),
                self.f.m
            )));
        }
        Ok(x)
    }

    pub fn nonhomogeneous(&self) -> Result<NonHomogeneousPoly> {
        let linear = self
            .linear
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("instance has no \"linear\" part".into()))?
            .iter()
            .map(sym_from_json)
            .collect::<Result<Vec<_>>>()?;
        let constant = sym_from_json(
            self.constant
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("instance has no \"constant\" part".into()))?,
        )?;
        NonHomogeneousPoly::new(self.f()?, linear, constant)
    }
}

pub fn check_format(tag: &str) -> Result<()> {
    if tag != FORMAT_TAG {
        return Err(Error::InvalidInput(format!("unsupported format {tag:?}, expected {FORMAT_TAG:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciliationJson {
    pub q_f: usize,
    pub q_g: usize,
    pub repeat: usize,
    pub q: usize,
}

impl From<Reconciliation> for ReconciliationJson {
    fn from(r: Reconciliation) -> Self {
        ReconciliationJson {
            q_f: r.q_f,
            q_g: r.q_g,
            repeat: r.repeat,
            q: r.q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiJson {
    pub s: usize,
    pub t: usize,
    pub matrix: MatrixJson,
}

impl ChoiJson {
    pub fn from_choi(c: &ChoiMatrix) -> Self {
        ChoiJson {
            s: c.s(),
            t: c.t(),
            matrix: matrix_to_json(c.matrix()),
        }
    }

    pub fn to_choi(&self) -> Result<ChoiMatrix> {
        ChoiMatrix::new(self.s, self.t, sym_from_json(&self.matrix)?)
    }
}

/// Counterexample data in either flavour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleJson {
    pub separator: MatrixJson,
    pub rank: usize,
    pub x: TupleJson,
    /// Present for the projected (symmetric) flavour only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<MatrixJson>,
    pub witness: Vec<f64>,
    pub violation: f64,
    pub g_lambda_min: f64,
}

impl From<&Counterexample> for CounterexampleJson {
    fn from(c: &Counterexample) -> Self {
        CounterexampleJson {
            separator: matrix_to_json(&c.separator),
            rank: c.rank,
            x: TupleJson::from_tuple(&c.x),
            projection: Some(matrix_to_json(&c.projection)),
            witness: c.witness.iter().copied().collect(),
            violation: c.violation,
            g_lambda_min: c.compressed_g_lambda_min,
        }
    }
}

impl From<&HereditaryCounterexample> for CounterexampleJson {
    fn from(c: &HereditaryCounterexample) -> Self {
        CounterexampleJson {
            separator: matrix_to_json(&c.separator),
            rank: c.rank,
            x: TupleJson::from_tuple(&c.x),
            projection: None,
            witness: c.witness.iter().copied().collect(),
            violation: c.violation,
            g_lambda_min: c.g_lambda_min,
        }
    }
}

impl CounterexampleJson {
    pub fn witness(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.witness)
    }
}

/// Writes `f64` values as `d.dddddddddddddddde±x`.
#[derive(Debug, Default, Clone, Copy)]
pub struct RoundTripFormatter;

impl Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes with [`RoundTripFormatter`].
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, RoundTripFormatter);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}
