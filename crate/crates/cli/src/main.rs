//! `ncslemma` command-line front end.
//!
//! Machine-readable JSON goes to stdout (and to `-o OUT` when given); a
//! short human report goes to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use ncslemma::io::{
    check_format, matrix_from_json, matrix_to_json, sym_from_json, to_json_string, ChoiJson, CounterexampleJson,
    Instance, OptionsJson, PolyJson, ProblemKind, ReconciliationJson, TupleJson, FORMAT_TAG,
};
use ncslemma::linalg::{is_psd, min_eigenvalue};
use ncslemma::ncpoly::{MatTuple, ScalarQuad, TupleKind};
use ncslemma::positivity::{is_globally_psd, scalar_slemma, sos_factor, ScalarOptions, ScalarOutcome, Verdict};
use ncslemma::slemma::{
    certificate_residual, decide, decide_hereditary, homogenize, reconcile, verify_certificate, CPCertificate,
    DecideReport, Decision, HomogenizeOutcome,
};
use ncslemma::Error;
use serde_json::{json, Value};

const EXIT_OK: u8 = 0;
const EXIT_INTERNAL: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_DIMENSION: u8 = 3;
const EXIT_SLATER: u8 = 4;
const EXIT_NOT_PSD: u8 = 10;
const EXIT_COUNTEREXAMPLE: u8 = 11;
const EXIT_INCONCLUSIVE: u8 = 12;
const EXIT_VERIFICATION: u8 = 13;

#[derive(Parser, Debug)]
#[command(name = "ncslemma", version, about = "S-lemma certificates and counterexamples for quadratic NC matrix polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Debug)]
struct Flags {
    /// PSD acceptance tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Strictness margin for counterexamples
    #[arg(long = "tol-strict", global = true)]
    tol_strict: Option<f64>,
    /// Iteration budget of the fallback searches
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Seed for the randomized fallbacks and spot checks
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Emit an SOS factor when the polynomial is PSD
    #[arg(long, global = true)]
    sos: bool,
    /// Compress evaluations with the projection stored next to the tuple
    #[arg(long, global = true)]
    project: bool,
    /// Also write the JSON result to this file
    #[arg(short = 'o', long = "output", global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide global positivity of f
    CheckPositivity { path: PathBuf },
    /// Matrix S-lemma for symmetric evaluations
    Slemma { path: PathBuf },
    /// Matrix S-lemma for hereditary evaluations
    SlemmaHereditary { path: PathBuf },
    /// Scalar-coefficient S-lemma (q = 1)
    ScalarSlemma { path: PathBuf },
    /// Homogenize a nonhomogeneous polynomial into a PSD one
    Homogenize { path: PathBuf },
    /// Re-check a certificate or counterexample against an instance
    Verify { certificate: PathBuf, instance: PathBuf },
    /// Evaluate f (and g) at a tuple
    Evaluate { instance: PathBuf, tuple: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckPositivity { .. } => "check-positivity",
            Command::Slemma { .. } => "slemma",
            Command::SlemmaHereditary { .. } => "slemma-hereditary",
            Command::ScalarSlemma { .. } => "scalar-slemma",
            Command::Homogenize { .. } => "homogenize",
            Command::Verify { .. } => "verify",
            Command::Evaluate { .. } => "evaluate",
        }
    }
}

/// Result of one command: exit code, JSON payload and a human summary.
struct Outcome {
    code: u8,
    body: Value,
    report: String,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Read(PathBuf, std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Read(..) => EXIT_PARSE,
            Failure::Lib(e) => match e {
                Error::InvalidInput(_) | Error::AsymmetricCoefficients { .. } => EXIT_PARSE,
                Error::ShapeMismatch(_) | Error::DimensionTooLarge { .. } | Error::InvalidRepeat(_) => {
                    EXIT_DIMENSION
                }
                Error::SlaterViolated { .. } => EXIT_SLATER,
                Error::VerificationFailed(_) => EXIT_VERIFICATION,
                _ => EXIT_INTERNAL,
            },
        }
    }

    fn class(&self) -> &'static str {
        match self.code() {
            EXIT_PARSE => "parse",
            EXIT_DIMENSION => "dimension",
            EXIT_SLATER => "slater",
            EXIT_VERIFICATION => "verification",
            _ => "internal",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Read(p, e) => format!("cannot read {}: {e}", p.display()),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

type CmdResult = Result<Outcome, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Read(path.to_path_buf(), e))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    Ok(Instance::parse(&read(path)?)?)
}

fn parse_value(path: &Path) -> Result<Value, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::Lib(Error::InvalidInput(format!("{}: {e}", path.display()))))
}

fn from_value<T: serde::de::DeserializeOwned>(v: &Value, what: &str) -> Result<T, Failure> {
    serde_json::from_value(v.clone()).map_err(|e| Failure::Lib(Error::InvalidInput(format!("{what}: {e}"))))
}

fn merge_options(file: OptionsJson, flags: &Flags) -> Result<OptionsJson, Failure> {
    let opts = OptionsJson {
        tol: flags.tol.unwrap_or(file.tol),
        tol_strict: flags.tol_strict.unwrap_or(file.tol_strict),
        budget: flags.budget.unwrap_or(file.budget),
        seed: flags.seed.unwrap_or(file.seed),
    };
    opts.validate()?;
    Ok(opts)
}

/// Searches `decide` may run at once: two, capped by `NCSLEMMA_THREADS`.
fn thread_cap() -> usize {
    let cap = std::env::var("NCSLEMMA_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(2);
    cap.clamp(1, 2)
}

fn header(kind: &str, opts: &OptionsJson) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("format".into(), json!(FORMAT_TAG));
    m.insert("kind".into(), json!(kind));
    m.insert("options".into(), json!(opts));
    m
}

fn check_positivity(path: &Path, flags: &Flags) -> CmdResult {
    let inst = load_instance(path)?;
    let opts = merge_options(inst.options, flags)?;
    let f = inst.f()?;
    let report = is_globally_psd(&f, opts.tol)?;
    let lambda_min = report.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut body = header("positivity", &opts);
    body.insert("verdict".into(), json!(report.verdict));
    body.insert("lambda_min".into(), json!(lambda_min));
    body.insert("eigenvalues".into(), json!(report.eigenvalues.as_slice()));
    if let Some(w) = &report.witness {
        body.insert(
            "witness".into(),
            json!({"point": TupleJson::from_tuple(&w.point), "vector": w.vector.as_slice(), "value": w.value}),
        );
    }
    if flags.sos && report.verdict == Verdict::Psd {
        let factor = sos_factor(&f, opts.tol)?;
        let blocks: Vec<_> = factor.blocks().iter().map(matrix_to_json).collect();
        body.insert("sos".into(), json!({"rank": factor.rank(), "q": factor.q(), "blocks": blocks}));
    }
    let (code, report) = match report.verdict {
        Verdict::Psd => (EXIT_OK, format!("psd: coefficient matrix lambda_min = {lambda_min:.3e}")),
        Verdict::NotPsd => (
            EXIT_NOT_PSD,
            format!(
                "not psd: coefficient matrix lambda_min = {lambda_min:.3e}; witness value {:.3e}",
                report.witness.as_ref().map_or(f64::NAN, |w| w.value)
            ),
        ),
    };
    Ok(Outcome {
        code,
        body: Value::Object(body),
        report,
    })
}

fn decision_outcome<C>(
    report: DecideReport<C>,
    opts: &OptionsJson,
    hereditary: bool,
    ce_json: impl Fn(&C) -> CounterexampleJson,
) -> Outcome {
    let rec = ReconciliationJson::from(report.reconciliation);
    let (code, mut body, text) = match &report.decision {
        Decision::Certificate(cert) => {
            let mut body = header("certificate", opts);
            body.insert("choi".into(), json!(ChoiJson::from_choi(&cert.choi)));
            body.insert("residual_lambda_min".into(), json!(cert.residual_lambda_min));
            let text = format!(
                "certificate: CP map with Choi trace {:.6e}, residual lambda_min = {:.3e}",
                cert.choi.matrix().trace(),
                cert.residual_lambda_min
            );
            (EXIT_OK, body, text)
        }
        Decision::Counterexample(c) => {
            let cj = ce_json(c);
            let text = format!(
                "counterexample: rank {} separator, n = {}, violation {:.6e}, g lambda_min {:.3e}",
                cj.rank, cj.x.n, cj.violation, cj.g_lambda_min
            );
            let mut body = header("counterexample", opts);
            if let Value::Object(fields) = json!(cj) {
                body.extend(fields);
            }
            (EXIT_COUNTEREXAMPLE, body, text)
        }
        Decision::Inconclusive => {
            let mut body = header("inconclusive", opts);
            body.insert(
                "diagnostics".into(),
                json!({
                    "certify_best_value": report.certify_value,
                    "separator_best_value": report.separator_value,
                }),
            );
            let text = format!(
                "inconclusive: best certificate residual {:?}, best separator objective {:?}",
                report.certify_value, report.separator_value
            );
            (EXIT_INCONCLUSIVE, body, text)
        }
    };
    body.insert("hereditary".into(), json!(hereditary));
    body.insert("reconciliation".into(), json!(rec));
    body.insert("slater_lambda_min".into(), json!(report.slater_lambda_min));
    Outcome {
        code,
        body: Value::Object(body),
        report: text,
    }
}

fn slemma(path: &Path, flags: &Flags, hereditary: bool) -> CmdResult {
    let inst = load_instance(path)?;
    let opts = merge_options(inst.options, flags)?;
    let (f, g, slater) = (inst.f()?, inst.g()?, inst.slater()?);
    let solve = opts.solve_options(thread_cap());
    if hereditary {
        let slater = MatTuple::general(slater.mats().to_vec())?;
        let report = decide_hereditary(&f, &g, &slater, &solve)?;
        Ok(decision_outcome(report, &opts, true, |c| CounterexampleJson::from(c)))
    } else {
        let report = decide(&f, &g, &slater, &solve)?;
        Ok(decision_outcome(report, &opts, false, |c| CounterexampleJson::from(c)))
    }
}

fn scalar(path: &Path, flags: &Flags) -> CmdResult {
    let inst = load_instance(path)?;
    let opts = merge_options(inst.options, flags)?;
    let (f, g, slater) = (inst.f()?, inst.g()?, inst.slater()?);
    if f.q() != 1 || g.q() != 1 || slater.n() != 1 {
        return Err(Error::ShapeMismatch("scalar-slemma needs q = 1 and a slater point of 1x1 matrices".into()).into());
    }
    let fs = ScalarQuad::homogeneous(f.coefficient_matrix());
    let gs = ScalarQuad::homogeneous(g.coefficient_matrix());
    let x_hat = DVector::from_iterator(slater.m(), slater.mats().iter().map(|x| x[(0, 0)]));
    let res = scalar_slemma(
        &fs,
        &gs,
        &x_hat,
        &ScalarOptions {
            tol: opts.tol,
            tol_strict: opts.tol_strict,
            budget: opts.budget,
            seed: opts.seed,
        },
    )?;
    let (code, kind, text) = match &res.outcome {
        ScalarOutcome::Certificate { lambda } => (EXIT_OK, "certificate", format!("certificate: lambda = {lambda:.12e}")),
        ScalarOutcome::Counterexample { x } => (
            EXIT_COUNTEREXAMPLE,
            "counterexample",
            format!("counterexample: x^T A x = {:.6e}", x.dot(&(fs.a.matrix() * x))),
        ),
        ScalarOutcome::Inconclusive => (
            EXIT_INCONCLUSIVE,
            "inconclusive",
            format!("inconclusive: best lambda_min(A - lambda B) = {:.3e}", res.best_value),
        ),
    };
    let mut body = header(kind, &opts);
    body.insert("scalar".into(), json!(true));
    match &res.outcome {
        ScalarOutcome::Certificate { lambda } => {
            body.insert("lambda".into(), json!(lambda));
        }
        ScalarOutcome::Counterexample { x } => {
            body.insert("x".into(), json!(x.as_slice()));
            body.insert("f_value".into(), json!(x.dot(&(fs.a.matrix() * x))));
            body.insert("g_value".into(), json!(x.dot(&(gs.a.matrix() * x))));
        }
        ScalarOutcome::Inconclusive => {}
    }
    body.insert("best_value".into(), json!(res.best_value));
    body.insert("best_lambda".into(), json!(res.best_lambda));
    body.insert("interval".into(), json!([res.interval.0, res.interval.1]));
    Ok(Outcome {
        code,
        body: Value::Object(body),
        report: text,
    })
}

fn cmd_homogenize(path: &Path, flags: &Flags) -> CmdResult {
    let inst = load_instance(path)?;
    if inst.kind != ProblemKind::Homogenize {
        return Err(Error::InvalidInput(format!("expected an instance of kind homogenize, got {:?}", inst.kind)).into());
    }
    let opts = merge_options(inst.options, flags)?;
    let p = inst.nonhomogeneous()?;
    let (code, res) = match homogenize(&p, &opts.solve_options(1))? {
        HomogenizeOutcome::Success(r) => (EXIT_OK, r),
        HomogenizeOutcome::Infeasible(r) => (EXIT_INCONCLUSIVE, r),
    };
    let mut body = header(if code == EXIT_OK { "homogenization" } else { "homogenization-infeasible" }, &opts);
    body.insert("h".into(), json!(PolyJson::from_poly(&res.poly)));
    body.insert("h_blocks".into(), json!(res.h_blocks.iter().map(matrix_to_json).collect::<Vec<_>>()));
    body.insert("coefficient_matrix".into(), json!(matrix_to_json(&res.coefficient_matrix)));
    body.insert("lambda_min".into(), json!(res.lambda_min));
    let report = if code == EXIT_OK {
        format!("homogenized: coefficient matrix lambda_min = {:.3e}", res.lambda_min)
    } else {
        format!("no PSD homogenization found: best lambda_min = {:.3e}", res.lambda_min)
    };
    Ok(Outcome {
        code,
        body: Value::Object(body),
        report,
    })
}

fn verify(cert_path: &Path, inst_path: &Path, flags: &Flags) -> CmdResult {
    let cert = parse_value(cert_path)?;
    let inst = load_instance(inst_path)?;
    check_format(cert.get("format").and_then(Value::as_str).unwrap_or(""))?;
    let file_opts: OptionsJson = match cert.get("options") {
        Some(v) => from_value(v, "options")?,
        None => inst.options,
    };
    let opts = merge_options(file_opts, flags)?;
    let (f, g) = (inst.f()?, inst.g()?);
    let kind = cert.get("kind").and_then(Value::as_str).unwrap_or("");
    let scalar = cert.get("scalar").and_then(Value::as_bool).unwrap_or(false);
    let (passed, detail) = match kind {
        "certificate" if scalar => {
            let lambda: f64 = from_value(cert.get("lambda").unwrap_or(&Value::Null), "lambda")?;
            let res = f.coefficient_matrix().sub(&g.coefficient_matrix().scale(lambda));
            let lmin = min_eigenvalue(&res)?;
            (lambda >= 0.0 && is_psd(&res, opts.tol)?, format!("lambda_min(A - lambda B) = {lmin:.3e}"))
        }
        "counterexample" if scalar => {
            let x: Vec<f64> = from_value(cert.get("x").unwrap_or(&Value::Null), "x")?;
            let x = DVector::from_vec(x);
            let (a, b) = (f.coefficient_matrix(), g.coefficient_matrix());
            if x.len() != a.dim() {
                return Err(Error::ShapeMismatch("counterexample vector does not match the instance".into()).into());
            }
            let (fv, gv) = (x.dot(&(a.matrix() * &x)), x.dot(&(b.matrix() * &x)));
            (gv >= -opts.tol && fv <= -opts.tol_strict, format!("x^T B x = {gv:.3e}, x^T A x = {fv:.3e}"))
        }
        "certificate" => {
            let choi: ChoiJson = from_value(cert.get("choi").unwrap_or(&Value::Null), "choi")?;
            let choi = choi.to_choi()?;
            let (ft, gt) = if choi.s() == g.q() && choi.t() == f.q() {
                (f.clone(), g.clone())
            } else {
                let (ft, gt, _) = reconcile(&f, &g)?;
                if choi.s() != gt.q() || choi.t() != ft.q() {
                    return Err(Error::ShapeMismatch("certificate does not match the instance".into()).into());
                }
                (ft, gt)
            };
            let residual = certificate_residual(&ft, &gt, &choi)?;
            let residual_lambda_min = min_eigenvalue(&residual)?;
            let c = CPCertificate {
                choi,
                residual,
                residual_lambda_min,
            };
            (
                verify_certificate(&c, &f, &g, &opts.solve_options(1)),
                format!("residual lambda_min = {residual_lambda_min:.3e}"),
            )
        }
        "counterexample" => verify_counterexample(&cert, &f, &g, &opts)?,
        other => return Err(Error::InvalidInput(format!("cannot verify a file of kind {other:?}")).into()),
    };
    let mut body = header("verification", &opts);
    body.insert("subject".into(), json!(kind));
    body.insert("passed".into(), json!(passed));
    body.insert("detail".into(), json!(detail));
    Ok(Outcome {
        code: if passed { EXIT_OK } else { EXIT_VERIFICATION },
        body: Value::Object(body),
        report: format!("{}: {detail}", if passed { "verified" } else { "verification failed" }),
    })
}

fn verify_counterexample(
    cert: &Value,
    f: &ncslemma::ncpoly::NCQuadPoly,
    g: &ncslemma::ncpoly::NCQuadPoly,
    opts: &OptionsJson,
) -> Result<(bool, String), Failure> {
    let ce: CounterexampleJson = from_value(cert, "counterexample")?;
    let x = ce.x.to_tuple()?;
    let w = ce.witness();
    let (gx, fx) = match &ce.projection {
        Some(p) => {
            let p = matrix_from_json(p)?;
            (g.evaluate_compressed(&x, &p)?, f.evaluate_compressed(&x, &p)?)
        }
        None => {
            let x = MatTuple::general(x.mats().to_vec())?;
            (g.evaluate_hereditary(&x)?, f.evaluate_hereditary(&x)?)
        }
    };
    if w.len() != fx.dim() {
        return Err(Error::ShapeMismatch(format!(
            "witness has length {}, f(X) is {}x{}",
            w.len(),
            fx.dim(),
            fx.dim()
        ))
        .into());
    }
    let violation = w.dot(&(fx.matrix() * &w));
    let g_min = min_eigenvalue(&gx)?;
    let passed = is_psd(&gx, opts.tol)? && violation <= -opts.tol_strict;
    Ok((passed, format!("g lambda_min = {g_min:.3e}, violation = {violation:.6e}")))
}

fn evaluate(inst_path: &Path, tuple_path: &Path, flags: &Flags) -> CmdResult {
    let inst = load_instance(inst_path)?;
    let opts = merge_options(inst.options, flags)?;
    let f = inst.f()?;
    let g = match inst.g {
        Some(_) => Some(inst.g()?),
        None => None,
    };
    let value = parse_value(tuple_path)?;
    // counterexample files hold the tuple under "x"
    let (tuple_v, proj_v) = match value.get("x") {
        Some(x) => (x.clone(), value.get("projection").cloned()),
        None => (value.clone(), value.get("projection").cloned()),
    };
    let tuple: TupleJson = from_value(&tuple_v, "tuple")?;
    let x = tuple.to_tuple()?;
    let projection = if flags.project {
        let p = proj_v.ok_or_else(|| Error::InvalidInput("--project needs a \"projection\" next to the tuple".into()))?;
        let p = sym_from_json(&from_value(&p, "projection")?)?;
        Some(p.into_inner())
    } else {
        None
    };
    let eval = |p: &ncslemma::ncpoly::NCQuadPoly| -> Result<ncslemma::linalg::SymMat, Failure> {
        Ok(match (&projection, x.kind()) {
            (Some(proj), TupleKind::Symmetric) => p.evaluate_compressed(&x, proj)?,
            (Some(_), TupleKind::General) => {
                return Err(Error::InvalidInput("--project applies to symmetric tuples only".into()).into())
            }
            (None, TupleKind::Symmetric) => p.evaluate(&x)?,
            (None, TupleKind::General) => p.evaluate_hereditary(&x)?,
        })
    };
    let fx = eval(&f)?;
    let mut body = header("evaluation", &opts);
    body.insert("projected".into(), json!(projection.is_some()));
    body.insert("f".into(), json!(matrix_to_json(&fx)));
    let f_min = min_eigenvalue(&fx)?;
    body.insert("f_lambda_min".into(), json!(f_min));
    let mut report = format!("f(X): {0}x{0}, lambda_min = {f_min:.6e}", fx.dim());
    if let Some(g) = &g {
        let gx = eval(g)?;
        let g_min = min_eigenvalue(&gx)?;
        body.insert("g".into(), json!(matrix_to_json(&gx)));
        body.insert("g_lambda_min".into(), json!(g_min));
        report.push_str(&format!("; g(X) lambda_min = {g_min:.6e}"));
    }
    Ok(Outcome {
        code: EXIT_OK,
        body: Value::Object(body),
        report,
    })
}

fn run(cli: &Cli) -> CmdResult {
    let flags = &cli.flags;
    match &cli.command {
        Command::CheckPositivity { path } => check_positivity(path, flags),
        Command::Slemma { path } => slemma(path, flags, false),
        Command::SlemmaHereditary { path } => slemma(path, flags, true),
        Command::ScalarSlemma { path } => scalar(path, flags),
        Command::Homogenize { path } => cmd_homogenize(path, flags),
        Command::Verify { certificate, instance } => verify(certificate, instance, flags),
        Command::Evaluate { instance, tuple } => evaluate(instance, tuple, flags),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let body = json!({
                "format": FORMAT_TAG,
                "kind": "error",
                "error": {"class": "parse", "message": e.kind().to_string()},
            });
            println!("{}", to_json_string(&body));
            let _ = e.print();
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let command = cli.command.name();
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(fail) => {
            let body = json!({
                "format": FORMAT_TAG,
                "kind": "error",
                "command": command,
                "error": {"class": fail.class(), "message": fail.message()},
            });
            Outcome {
                code: fail.code(),
                body,
                report: format!("error: {}", fail.message()),
            }
        }
    };
    let mut text = to_json_string(&outcome.body);
    text.push('\n');
    print!("{text}");
    eprintln!("{command}: {}", outcome.report);
    let mut code = outcome.code;
    if let Some(out) = &cli.flags.output {
        if let Err(e) = fs::write(out, &text) {
            eprintln!("error: cannot write {}: {e}", out.display());
            code = EXIT_INTERNAL;
        }
    }
    ExitCode::from(code)
}
