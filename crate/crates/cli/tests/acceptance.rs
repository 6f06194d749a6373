//! Acceptance suite. Each test writes one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) and then asserts.
//!
//! Oracles are computed here from first principles: evaluations by explicit
//! Kronecker sums, eigenvalues by nalgebra's symmetric solver, map
//! application from the Choi entries.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ncslemma::cpmap::ChoiMatrix;
use ncslemma::linalg::SymMat;
use ncslemma::ncpoly::{MatTuple, NCQuadPoly, ScalarQuad};
use ncslemma::positivity::{is_globally_psd, scalar_slemma, sos_factor, ScalarOptions, ScalarOutcome, Verdict};
use ncslemma::slemma::{
    build_counterexample, certificate_residual, certify, find_separator, verify_certificate, CertifyOutcome,
    SeparatorOutcome, SolveOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;

fn report(id: u32, name: &str, started: Instant, limit: Option<Duration>, check: Check) {
    let elapsed = started.elapsed();
    let check = match (check, limit) {
        (Ok(_), Some(l)) if elapsed > l => Err(format!("runtime {elapsed:.2?} exceeds {l:?}")),
        (c, _) => c,
    };
    let line = match &check {
        Ok(detail) => format!("PASS criterion {id} ({name}): {detail} [{elapsed:.2?}]"),
        Err(why) => format!("FAIL criterion {id} ({name}): {why} [{elapsed:.2?}]"),
    };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
    assert!(check.is_ok(), "{line}");
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------- oracles ----------

fn eig_min(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

fn psd_within(m: &DMatrix<f64>, tol: f64) -> bool {
    eig_min(m) >= -tol * (1.0 + m.norm())
}

/// `sum_ij A_ij ⊗ X_i X_j` from the blocks.
fn eval_oracle(p: &NCQuadPoly, x: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (m, q, n) = (p.m(), p.q(), x[0].nrows());
    let mut out = DMatrix::zeros(q * n, q * n);
    for i in 0..m {
        for j in 0..m {
            out += p.block(i, j).kronecker(&(&x[i] * &x[j]));
        }
    }
    out
}

fn coeff_oracle(p: &NCQuadPoly) -> DMatrix<f64> {
    let (m, q) = (p.m(), p.q());
    let mut out = DMatrix::zeros(m * q, m * q);
    for i in 0..m {
        for j in 0..m {
            out.view_mut((i * q, j * q), (q, q)).copy_from(p.block(i, j));
        }
    }
    out
}

/// `phi(M)_ij = sum_ab J[(i,a),(j,b)] M_ab` for `phi: s x s -> t x t`.
fn choi_apply_oracle(j: &DMatrix<f64>, s: usize, t: usize, mm: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(t, t, |i, jj| {
        let mut acc = 0.0;
        for a in 0..s {
            for b in 0..s {
                acc += j[(i * s + a, jj * s + b)] * mm[(a, b)];
            }
        }
        acc
    })
}

/// `(1_m ⊗ phi) B` for `B` with `m x m` blocks of size `s`.
fn blockwise_oracle(j: &DMatrix<f64>, s: usize, t: usize, m: usize, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m * t, m * t);
    for k in 0..m {
        for l in 0..m {
            let blk = b.view((k * s, l * s), (s, s)).into_owned();
            out.view_mut((k * t, l * t), (t, t)).copy_from(&choi_apply_oracle(j, s, t, &blk));
        }
    }
    out
}

fn rand_sym<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn rand_psd<R: Rng>(rng: &mut R, d: usize, ranks: std::ops::RangeInclusive<usize>) -> DMatrix<f64> {
    let rank = rng.gen_range(ranks);
    let g = DMatrix::from_fn(d, rank, |_, _| rng.gen_range(-1.0..1.0));
    &g * g.transpose()
}

fn rand_tuple<R: Rng>(rng: &mut R, m: usize, n: usize) -> Vec<DMatrix<f64>> {
    (0..m).map(|_| rand_sym(rng, n)).collect()
}

fn poly(m: usize, q: usize, coeff: &DMatrix<f64>) -> NCQuadPoly {
    NCQuadPoly::from_coefficient_matrix(m, q, &SymMat::symmetrize(coeff.clone())).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cli(args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_ncslemma")).args(args).output().unwrap();
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap_or(-1), json)
}

fn diag(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(d))
}

// ---------- criteria ----------

#[test]
fn criterion_1_diagonal_pair_certificate() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        let (code, json) = cli(&["slemma", fixture("diagonal_pair.json").to_str().unwrap()]);
        ensure(code == 0 && json["kind"] == "certificate", || format!("slemma exited {code}: {json}"))?;
        let resid = json["residual_lambda_min"].as_f64().ok_or("no residual")?;
        ensure(resid >= -1e-6, || format!("residual lambda_min {resid:e}"))?;

        let z = DMatrix::zeros(2, 2);
        let f = NCQuadPoly::new(2, 2, vec![diag(&[1.0, 1.0]), z.clone(), z.clone(), diag(&[0.0, -1.0])]).unwrap();
        let g = NCQuadPoly::new(2, 2, vec![diag(&[1.0, 1.0]), z.clone(), z, diag(&[-1.0, 0.0])]).unwrap();

        // the stated map (a b; c d) -> diag(d, a) leaves residual exactly 0
        let phi2 = ChoiMatrix::new(2, 2, SymMat::from_diagonal(&[0.0, 1.0, 1.0, 0.0])).unwrap();
        let stated = certificate_residual(&f, &g, &phi2).unwrap();
        ensure(stated.frobenius() <= 1e-12, || format!("stated map residual norm {:e}", stated.frobenius()))?;
        let oracle = coeff_oracle(&f) - blockwise_oracle(phi2.matrix(), 2, 2, 2, &coeff_oracle(&g));
        ensure(oracle.norm() <= 1e-12, || "oracle residual of stated map nonzero".into())?;

        let x = MatTuple::from_scalars(&[1.0, 2.0]).unwrap();
        let v = DVector::from_column_slice(&[0.0, 1.0]);
        let gv = v.dot(&(g.evaluate(&x).unwrap().matrix() * &v));
        let fv = v.dot(&(f.evaluate(&x).unwrap().matrix() * &v));
        let xs = [diag(&[1.0]), diag(&[2.0])];
        let gv_o = v.dot(&(eval_oracle(&g, &xs) * &v));
        let fv_o = v.dot(&(eval_oracle(&f, &xs) * &v));
        ensure((gv - 1.0).abs() <= 1e-12 && (gv_o - 1.0).abs() <= 1e-12, || format!("v^T g v = {gv}"))?;
        ensure((fv + 3.0).abs() <= 1e-12 && (fv_o + 3.0).abs() <= 1e-12, || format!("v^T f v = {fv}"))?;
        Ok(format!("certificate residual lambda_min {resid:.2e}; v^T g v = {gv}, v^T f v = {fv}"))
    })();
    report(1, "diagonal pair certificate", t0, Some(Duration::from_secs(5)), check);
}

#[test]
fn criterion_2_compressed_evaluations() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        let e = |q: usize, a: usize, b: usize| {
            let mut m = DMatrix::zeros(q, q);
            m[(a, b)] = 1.0;
            m
        };
        let z = DMatrix::zeros(4, 4);
        let f = NCQuadPoly::new(2, 4, vec![z.clone(), e(4, 0, 0), e(4, 0, 0), -e(4, 0, 0)]).unwrap();
        let b12 = e(4, 1, 1) + e(4, 2, 3) - e(4, 3, 2);
        let g = NCQuadPoly::new(2, 4, vec![e(4, 0, 0), b12.clone(), b12.transpose(), -e(4, 0, 0)]).unwrap();

        let r2 = 2f64.sqrt();
        let mut x1 = DMatrix::zeros(6, 6);
        x1[(1, 2)] = r2;
        x1[(2, 1)] = r2;
        let x2 = e(6, 0, 2) + e(6, 2, 0);
        let p = diag(&[0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let x = MatTuple::symmetric(vec![x1.clone(), x2.clone()]).unwrap();
        let gc = g.evaluate_compressed(&x, &p).unwrap();
        let fc = f.evaluate_compressed(&x, &p).unwrap();

        let lift = DMatrix::<f64>::identity(4, 4).kronecker(&p);
        let xs = [x1, x2];
        let gc_o = &lift * eval_oracle(&g, &xs) * &lift;
        let fc_o = &lift * eval_oracle(&f, &xs) * &lift;
        // displayed: one nonzero entry in the top-left 6x6 block at (2,2)
        let mut g_want = DMatrix::zeros(24, 24);
        g_want[(2, 2)] = 1.0;
        let f_want = -g_want.clone();
        for (name, got, want) in [
            ("g", gc.matrix().clone(), &g_want),
            ("g oracle", gc_o, &g_want),
            ("f", fc.matrix().clone(), &f_want),
            ("f oracle", fc_o, &f_want),
        ] {
            let dev = (got - want).amax();
            ensure(dev <= 1e-12, || format!("compressed {name} deviates entrywise by {dev:e}"))?;
        }
        ensure(psd_within(gc.matrix(), 1e-12), || "compressed g not PSD".into())?;
        Ok("compressed g has the single entry 1, compressed f the single entry -1".into())
    })();
    report(2, "compressed evaluations", t0, None, check);
}

#[test]
fn criterion_3_homogenization() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        let (c1, j1) = cli(&["check-positivity", fixture("h1.json").to_str().unwrap()]);
        ensure(c1 == 0 && j1["verdict"] == "psd", || format!("h1: exit {c1}, {j1}"))?;
        let (c2, j2) = cli(&["check-positivity", fixture("h2.json").to_str().unwrap()]);
        ensure(c2 == 10 && j2["verdict"] == "not-psd", || format!("h2: exit {c2}, {j2}"))?;
        let l2 = j2["lambda_min"].as_f64().ok_or("no lambda_min")?;
        let h2 = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        );
        let l2_o = eig_min(&h2);
        ensure((l2 + 1.0).abs() <= 1e-12 && (l2_o + 1.0).abs() <= 1e-12, || format!("h2 lambda_min {l2}"))?;

        let (c3, j3) = cli(&["homogenize", fixture("homogenize.json").to_str().unwrap()]);
        ensure(c3 == 0, || format!("homogenize exit {c3}: {j3}"))?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(j3["coefficient_matrix"].clone()).map_err(|e| e.to_string())?;
        let cm = DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j]);
        let l3 = eig_min(&cm);
        ensure(l3 >= -1e-8, || format!("homogenization lambda_min {l3:e}"))?;
        // H_10 + H_01 must equal the linear coefficient [[0,1],[1,0]]
        let sum = cm.view((2, 0), (2, 2)) + cm.view((0, 2), (2, 2));
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        ensure((sum - &want).norm() <= 1e-10, || "H_i0 + H_0i != A_i".into())?;
        Ok(format!("h1 psd, h2 lambda_min {l2}, homogenization lambda_min {l3:.2e}"))
    })();
    report(3, "homogenization", t0, Some(Duration::from_secs(5)), check);
}

#[test]
fn criterion_4_positivity_oracle() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut psd, mut evals) = (0, 0);
        for k in 0..240 {
            let m = rng.gen_range(1..=3);
            let q = rng.gen_range(1..=3);
            let d = m * q;
            let coeff = match k % 3 {
                0 => rand_sym(&mut rng, d),
                1 => rand_psd(&mut rng, d, 1..=d),
                _ => rand_psd(&mut rng, d, d..=d) - DMatrix::identity(d, d) * rng.gen_range(0.0..0.2),
            };
            let f = poly(m, q, &coeff);
            let report = is_globally_psd(&f, 1e-8).map_err(|e| e.to_string())?;

            // diag(sum_i A_ii, A) from the blocks, and f at the test point
            let mut sum = DMatrix::zeros(q, q);
            for i in 0..m {
                sum += f.block(i, i);
            }
            let mut dg = DMatrix::zeros(q + d, q + d);
            dg.view_mut((0, 0), (q, q)).copy_from(&sum);
            dg.view_mut((q, q), (d, d)).copy_from(&coeff_oracle(&f));
            let x0: Vec<DMatrix<f64>> = (0..m)
                .map(|i| {
                    let mut x = DMatrix::zeros(m + 1, m + 1);
                    x[(0, i + 1)] = 1.0;
                    x[(i + 1, 0)] = 1.0;
                    x
                })
                .collect();
            let fx0 = eval_oracle(&f, &x0);
            let oracle_psd = psd_within(&dg, 1e-8);
            ensure(psd_within(&fx0, 1e-8) == oracle_psd, || format!("instance {k}: f(X0) and diag test disagree"))?;
            ensure((report.verdict == Verdict::Psd) == oracle_psd, || format!("instance {k}: verdict disagrees"))?;
            if let Some(w) = &report.witness {
                let val = w.vector.dot(&(&fx0 * &w.vector));
                ensure(val < 0.0, || format!("instance {k}: witness value {val:e}"))?;
            }
            if oracle_psd {
                psd += 1;
                for _ in 0..100 {
                    let n = rng.gen_range(1..=4);
                    let fx = eval_oracle(&f, &rand_tuple(&mut rng, m, n));
                    let lmin = eig_min(&fx);
                    ensure(lmin >= -1e-8 * (1.0 + fx.norm()), || format!("instance {k}: lambda_min {lmin:e}"))?;
                    evals += 1;
                }
            }
        }
        ensure(psd >= 50, || format!("only {psd} psd instances"))?;
        Ok(format!("240 instances agree ({psd} psd, {evals} random evaluations nonnegative)"))
    })();
    report(4, "positivity oracle equivalence", t0, Some(Duration::from_secs(60)), check);
}

#[test]
fn criterion_5_sos_factorization() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        for k in 0..100 {
            let m = rng.gen_range(1..=3);
            let q = rng.gen_range(1..=3);
            let d = m * q;
            let f = poly(m, q, &rand_psd(&mut rng, d, 1..=d));
            let factor = sos_factor(&f, 1e-8).map_err(|e| format!("instance {k}: {e}"))?;
            for _ in 0..20 {
                let n = rng.gen_range(1..=4);
                let xs = rand_tuple(&mut rng, m, n);
                let fx = eval_oracle(&f, &xs);
                let l = factor.evaluate_linear(&MatTuple::symmetric(xs).unwrap()).unwrap();
                let rel = (&fx - l.transpose() * &l).norm() / (1.0 + fx.norm());
                worst = worst.max(rel);
                ensure(rel <= 1e-8, || format!("instance {k}: relative residual {rel:e}"))?;
            }
        }
        Ok(format!("2000 evaluations, worst relative residual {worst:.2e}"))
    })();
    report(5, "SOS factorization", t0, None, check);
}

#[test]
fn criterion_6_planted_certificates() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let opts = SolveOptions::default();
        let mut worst = f64::INFINITY;
        for k in 0..50 {
            let m = rng.gen_range(2..=3);
            let qmax = 12 / m;
            let (s, t) = (rng.gen_range(1..=qmax.min(4)), rng.gen_range(1..=qmax.min(4)));
            let b = rand_sym(&mut rng, m * s);
            let j0 = rand_psd(&mut rng, s * t, 1..=s * t);
            let j0 = &j0 / j0.trace();
            let noise = rand_psd(&mut rng, m * t, 0..=m * t) * 0.1;
            let a = blockwise_oracle(&j0, s, t, m, &b) + noise;
            let (f, g) = (poly(m, t, &a), poly(m, s, &b));
            let CertifyOutcome::Certificate(cert) = certify(&f, &g, &opts).map_err(|e| e.to_string())? else {
                return Err(format!("instance {k} (m={m}, s={s}, t={t}): no certificate"));
            };
            ensure(verify_certificate(&cert, &f, &g, &opts), || format!("instance {k} (m={m}, s={s}, t={t}): verification failed, residual lambda_min {:e}, trace {:e}, J lambda_min {:e}", cert.residual_lambda_min, cert.choi.matrix().trace(), eig_min(cert.choi.matrix())))?;
            let j = cert.choi.matrix().matrix().clone();
            ensure(j.trace() > 0.0 && psd_within(&j, 1e-8), || format!("instance {k}: J not PSD/nonzero"))?;
            let resid = coeff_oracle(&f) - blockwise_oracle(&j, s, t, m, &coeff_oracle(&g));
            let lmin = eig_min(&resid);
            worst = worst.min(lmin / (1.0 + resid.norm()));
            ensure(psd_within(&resid, 1e-8), || format!("instance {k}: oracle residual lambda_min {lmin:e}"))?;
        }
        Ok(format!("50/50 certified and verified, worst relative residual lambda_min {worst:.2e}"))
    })();
    report(6, "planted certificate recovery", t0, Some(Duration::from_secs(120)), check);
}

/// A random instance with a planted trace-one separator.
fn planted_separator<R: Rng>(rng: &mut R, m: usize, q: usize) -> (NCQuadPoly, NCQuadPoly) {
    let d = m * q;
    let m0 = rand_psd(rng, d, 1..=d);
    let m0 = &m0 / m0.trace();
    let b = rand_psd(rng, d, 1..=d);
    let r = rand_sym(rng, d);
    let shift = (r.dot(&m0) + 0.5) / m0.norm_squared();
    let a = r - &m0 * shift;
    (poly(m, q, &a), poly(m, q, &b))
}

#[test]
fn criterion_7_counterexamples() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let opts = SolveOptions::default();
        let mut done = 0;
        let mut worst_block = 0.0f64;
        for k in 0..400 {
            if done == 50 {
                break;
            }
            let (f, g) = if k % 10 == 0 {
                let fa = SymMat::from_row_slice(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
                (ScalarQuad::homogeneous(fa).to_nc(), ScalarQuad::homogeneous(SymMat::from_diagonal(&[1.0, 0.0])).to_nc())
            } else {
                let m = rng.gen_range(1..=3);
                let q = rng.gen_range(1..=3);
                planted_separator(&mut rng, m, q)
            };
            let SeparatorOutcome::Found(sep) = find_separator(&f, &g, &opts).map_err(|e| e.to_string())? else {
                continue;
            };
            let ce = build_counterexample(&f, &g, &sep.matrix, &opts).map_err(|e| format!("instance {k}: {e}"))?;
            let (m, q, r) = (f.m(), f.q(), ce.rank);
            let n = r + q;
            let p = &ce.projection;
            let lift = DMatrix::<f64>::identity(q, q).kronecker(p);
            let xs = ce.x.mats().to_vec();
            let gc = &lift * eval_oracle(&g, &xs) * &lift;
            let fc = &lift * eval_oracle(&f, &xs) * &lift;
            ensure(psd_within(&gc, opts.tol), || format!("instance {k}: compressed g lambda_min {:e}", eig_min(&gc)))?;
            let mut e = DVector::zeros(q * n);
            for a in 0..q {
                e[a * n + r + a] = 1.0;
            }
            let viol = e.dot(&(&fc * &e));
            ensure(viol <= -opts.tol_strict, || format!("instance {k}: violation {viol:e}"))?;
            let mm = sep.matrix.matrix();
            for i in 0..m {
                for j in 0..m {
                    let pxx = (p * &xs[i] * &xs[j] * p).view((r, r), (q, q)).into_owned();
                    let dev = (pxx - mm.view((i * q, j * q), (q, q))).norm();
                    worst_block = worst_block.max(dev);
                    ensure(dev <= 1e-8, || format!("instance {k}: block ({i},{j}) off by {dev:e}"))?;
                }
            }
            done += 1;
        }
        ensure(done == 50, || format!("only {done} instances with separators"))?;
        Ok(format!("50 counterexamples verified, worst block identity error {worst_block:.2e}"))
    })();
    report(7, "counterexample construction", t0, None, check);
}

#[test]
fn criterion_8_mutual_exclusion() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let opts = SolveOptions::default();
        let (mut certs, mut seps) = (0, 0);
        for k in 0..210 {
            let m = rng.gen_range(1..=3);
            let q = rng.gen_range(1..=3);
            let d = m * q;
            let (f, g) = match k % 3 {
                0 => {
                    let b = rand_sym(&mut rng, d);
                    let j0 = rand_psd(&mut rng, q * q, 1..=q * q);
                    let a = blockwise_oracle(&j0, q, q, m, &b) + rand_psd(&mut rng, d, 1..=1) * 0.1;
                    (poly(m, q, &a), poly(m, q, &b))
                }
                1 => planted_separator(&mut rng, m, q),
                _ => (poly(m, q, &rand_sym(&mut rng, d)), poly(m, q, &rand_sym(&mut rng, d))),
            };
            let cert = match certify(&f, &g, &opts).map_err(|e| e.to_string())? {
                CertifyOutcome::Certificate(c) if verify_certificate(&c, &f, &g, &opts) => Some(c),
                _ => None,
            };
            let sep = match find_separator(&f, &g, &opts).map_err(|e| e.to_string())? {
                SeparatorOutcome::Found(s) => Some(s),
                SeparatorOutcome::NotFound { .. } => None,
            };
            if let Some(s) = &sep {
                // independent recheck of both separator margins
                let mm = s.matrix.matrix();
                let mut bt = DMatrix::zeros(q * q, q * q);
                for i in 0..m {
                    for j in 0..m {
                        bt += g.block(i, j).kronecker(&mm.view((i * q, j * q), (q, q)).into_owned());
                    }
                }
                let obj = coeff_oracle(&f).dot(mm);
                ensure(obj <= -1e-6 && psd_within(&bt, opts.tol), || format!("instance {k}: bad separator"))?;
            }
            ensure(!(cert.is_some() && sep.is_some()), || format!("instance {k}: certificate and separator"))?;
            certs += cert.is_some() as usize;
            seps += sep.is_some() as usize;
        }
        ensure(certs > 0 && seps > 0, || format!("degenerate sample: {certs} certificates, {seps} separators"))?;
        Ok(format!("210 instances: {certs} certificates, {seps} separators, never both"))
    })();
    report(8, "mutual exclusion", t0, None, check);
}

/// `lambda_min` of a symmetric 2x2 in closed form.
fn lmin2(a: f64, b: f64, c: f64) -> f64 {
    0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt()
}

#[test]
fn criterion_9_scalar_brute_force() {
    let t0 = Instant::now();
    let check = (|| -> Check {
        const DEAD_ZONE: f64 = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let opts = ScalarOptions::default();
        let (mut compared, mut skipped, mut certs) = (0, 0, 0);
        while compared + skipped < 100 {
            let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let b = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let bm = DMatrix::from_row_slice(2, 2, &[b[0], b[1], b[1], b[2]]);
            let eig = SymmetricEigen::new(bm.clone());
            let top = eig.eigenvalues.imax();
            if eig.eigenvalues[top] < 0.05 {
                continue;
            }
            let slater = eig.eigenvectors.column(top).into_owned();

            // grid over [0, 2^10] with step 2^-10, refined around the best point
            let h = |l: f64| lmin2(a[0] - l * b[0], a[1] - l * b[1], a[2] - l * b[2]);
            let step = 2f64.powi(-10);
            let (mut best_l, mut best_h) = (0.0, h(0.0));
            for k in 1..=(1u32 << 20) {
                let l = f64::from(k) * step;
                let v = h(l);
                if v > best_h {
                    best_h = v;
                    best_l = l;
                }
            }
            let fine = step / 1024.0;
            for k in -1024i32..=1024 {
                let l = best_l + f64::from(k) * fine;
                if l >= 0.0 && h(l) > best_h {
                    best_h = h(l);
                }
            }
            // counterexamples on the unit circle
            let mut refuted = false;
            for k in 0..20000 {
                let th = std::f64::consts::TAU * f64::from(k) / 20000.0;
                let (c, s) = (th.cos(), th.sin());
                let xa = a[0] * c * c + 2.0 * a[1] * c * s + a[2] * s * s;
                let xb = b[0] * c * c + 2.0 * b[1] * c * s + b[2] * s * s;
                if xb >= 0.0 && xa < -DEAD_ZONE {
                    refuted = true;
                    break;
                }
            }
            if best_h.abs() <= DEAD_ZONE || (best_h < 0.0) != refuted {
                skipped += 1;
                continue;
            }

            let f = ScalarQuad::homogeneous(SymMat::from_row_slice(2, &[a[0], a[1], a[1], a[2]]).unwrap());
            let g = ScalarQuad::homogeneous(SymMat::from_row_slice(2, &[b[0], b[1], b[1], b[2]]).unwrap());
            let res = scalar_slemma(&f, &g, &slater, &opts).map_err(|e| e.to_string())?;
            match (&res.outcome, best_h > 0.0) {
                (ScalarOutcome::Certificate { lambda }, true) => {
                    ensure(*lambda >= 0.0 && h(*lambda) >= -1e-8, || format!("bad lambda {lambda}"))?;
                    certs += 1;
                }
                (ScalarOutcome::Counterexample { x }, false) => {
                    let xa = x.dot(&(f.a.matrix() * x));
                    let xb = x.dot(&(g.a.matrix() * x));
                    ensure(xb >= -1e-8 && xa <= -1e-6, || format!("bad counterexample {x}"))?;
                }
                (out, expect_cert) => {
                    return Err(format!("A = {a:?}, B = {b:?}: got {out:?}, brute force certificate = {expect_cert}"))
                }
            }
            compared += 1;
        }
        ensure(compared >= 90, || format!("only {compared} instances outside the dead zone"))?;
        Ok(format!(
            "{compared} instances match ({certs} certificates), {skipped} in dead zone |max h| <= {DEAD_ZONE:e}"
        ))
    })();
    report(9, "scalar S-lemma vs brute force", t0, None, check);
}
