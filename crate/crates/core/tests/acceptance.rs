//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line to stderr
//! (bypassing libtest's capture) and the test fails if any criterion does.
//!
//! Run with `cargo test -p fmean-core --test acceptance --release`.

use std::f64::consts::PI;
use std::io::Write;

use fmean_core::eigsolve::jacobi_eigen;
use fmean_core::experiment::table_a_grid;
use fmean_core::meantest::{analyze, projections};
use fmean_core::simgen::bridge_sample;
use fmean_core::{
    far1_sample, fourier_basis, longrun_cov, make_grid, project_surface, pvalue_chisq, pvalue_mc, run_experiment,
    run_two_sample_test, symmetric_eig, Bandwidth, ErrorModel, ExperimentSpec, Far1Config, FunctionalSample,
    PChoice, PowerTable, RngSeed, Surface, TestConfig, WeightKernel,
};
use ndarray::{array, Array2};

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    let line = format!("[{tag}] {:>2}: {} | {}\n", o.id, o.name, o.detail);
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn power_table(model: ErrorModel, a_grid: Vec<f64>) -> PowerTable {
    let spec = ExperimentSpec {
        error_model: model,
        a_grid,
        reps: 1000,
        ..ExperimentSpec::default()
    };
    run_experiment(&spec).expect("power experiment")
}

fn size(id: &'static str, name: &'static str, t: &PowerTable, lo: f64, hi: f64) -> Outcome {
    let (u1, u2) = (t.rate(0.0, 0.05, 1).unwrap(), t.rate(0.0, 0.05, 2).unwrap());
    Outcome {
        id,
        name,
        pass: within(u1, lo, hi) && within(u2, lo, hi),
        detail: format!("U1={u1:.1}% U2={u2:.1}% (allowed [{lo}, {hi}]%)"),
    }
}

fn power(id: &'static str, name: &'static str, t: &PowerTable, target: (f64, f64), tol: f64) -> Outcome {
    let (u1, u2) = (t.rate(0.8, 0.01, 1).unwrap(), t.rate(0.8, 0.01, 2).unwrap());
    Outcome {
        id,
        name,
        pass: (u1 - target.0).abs() <= tol && (u2 - target.1).abs() <= tol,
        detail: format!(
            "U1={u1:.1}% (target {:.1}) U2={u2:.1}% (target {:.1}), tolerance ±{tol}",
            target.0, target.1
        ),
    }
}

fn monotone(t: &PowerTable) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut pass = true;
    for j in 0..t.alphas.len() {
        for w in t.rows.windows(2) {
            for (a, b) in [(w[0].u1[j], w[1].u1[j]), (w[0].u2[j], w[1].u2[j])] {
                let se = t.std_error(a).hypot(t.std_error(b));
                let slack = b - a + 3.0 * se;
                worst = worst.min(slack);
                pass &= slack >= 0.0;
            }
        }
    }
    Outcome {
        id: "5",
        name: "power nondecreasing in a (3 SE)",
        pass,
        detail: format!("smallest slack {worst:.2} points"),
    }
}

fn consistency() -> Outcome {
    let g = make_grid(100).unwrap();
    let truth = Surface::from_fn(g, |t, s| t.min(s) - t * s).unwrap();
    let d: Vec<f64> = (0..20)
        .map(|seed| {
            let s = bridge_sample(g, 2000, RngSeed::new(seed, 0)).unwrap();
            let c = longrun_cov(&s, WeightKernel::FlatTop, Bandwidth::CubeRoot).unwrap();
            c.l2_distance(&truth).unwrap().powi(2)
        })
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    Outcome {
        id: "6",
        name: "long-run estimator consistency N=2000",
        pass: mean < 0.01,
        detail: format!("mean integrated squared error {mean:.2e} over 20 seeds (limit 0.01)"),
    }
}

fn flat_top(u: f64) -> f64 {
    let u = u.abs();
    if u < 0.1 {
        1.0
    } else if u < 1.1 {
        1.1 - u
    } else {
        0.0
    }
}

/// Direct evaluation of the kernel-weighted autocovariance sum, entry by
/// entry, with no shared code paths.
fn brute_longrun(x: &[[f64; 3]], h: f64) -> [[f64; 3]; 3] {
    let n = x.len();
    let mut mean = [0.0; 3];
    for row in x {
        for k in 0..3 {
            mean[k] += row[k] / n as f64;
        }
    }
    let gamma = |lag: usize, t: usize, s: usize| -> f64 {
        let mut acc = 0.0;
        for j in lag..n {
            acc += (x[j][t] - mean[t]) * (x[j - lag][s] - mean[s]);
        }
        acc / n as f64
    };
    let mut c = [[0.0; 3]; 3];
    for t in 0..3 {
        for s in 0..3 {
            c[t][s] = gamma(0, t, s);
            for lag in 1..n {
                let w = flat_top(lag as f64 / h);
                c[t][s] += w * (gamma(lag, t, s) + gamma(lag, s, t));
            }
        }
    }
    c
}

fn oracles() -> Outcome {
    let rows = [[0.3, -1.2, 0.5], [1.1, 0.4, -0.7], [-0.6, 0.9, 1.3], [0.2, -0.1, 0.8]];
    let g = make_grid(3).unwrap();
    let data = Array2::from_shape_fn((4, 3), |(i, j)| rows[i][j]);
    let s = FunctionalSample::new(g, data).unwrap();
    let mut err_c = 0.0f64;
    for h in [4f64.cbrt(), 2.0, 3.5] {
        let est = longrun_cov(&s, WeightKernel::FlatTop, Bandwidth::Fixed(h)).unwrap();
        let oracle = brute_longrun(&rows, h);
        for t in 0..3 {
            for u in 0..3 {
                err_c = err_c.max((est.values()[[t, u]] - oracle[t][u]).abs());
            }
        }
    }

    let t_len = 41;
    let g = make_grid(t_len).unwrap();
    let surf = Surface::from_fn(g, |t, s| (t.min(s) - t * s) + 0.3 * (2.0 * PI * (t - s)).cos()).unwrap();
    let k = 9;
    let op = project_surface(&surf, &fourier_basis(g, k).unwrap()).unwrap();
    let hstep = 1.0 / (t_len - 1) as f64;
    let w = |i: usize| if i == 0 || i == t_len - 1 { hstep / 2.0 } else { hstep };
    let e = |idx: usize, t: f64| -> f64 {
        if idx == 0 {
            return 1.0;
        }
        let freq = ((idx + 1) / 2) as f64;
        if idx % 2 == 1 {
            2f64.sqrt() * (2.0 * PI * freq * t).sin()
        } else {
            2f64.sqrt() * (2.0 * PI * freq * t).cos()
        }
    };
    let mut err_d = 0.0f64;
    for a in 0..k {
        for b in 0..k {
            let mut acc = 0.0;
            for i in 0..t_len {
                for j in 0..t_len {
                    let (ti, tj) = (i as f64 * hstep, j as f64 * hstep);
                    acc += w(i) * w(j) * surf.values()[[i, j]] * e(a, ti) * e(b, tj);
                }
            }
            err_d = err_d.max((op.matrix[[a, b]] - acc).abs());
        }
    }
    Outcome {
        id: "7",
        name: "oracle equivalence",
        pass: err_c <= 1e-12 && err_d <= 1e-8,
        detail: format!("c_N max error {err_c:.2e} (1e-12), d_kl max error {err_d:.2e} (1e-8)"),
    }
}

fn eigensolver() -> Outcome {
    let g = make_grid(100).unwrap();
    let s = bridge_sample(g, 300, RngSeed::new(77, 0)).unwrap();
    let c = longrun_cov(&s, WeightKernel::FlatTop, Bandwidth::CubeRoot).unwrap();
    let op = project_surface(&c, &fourier_basis(g, 49).unwrap()).unwrap();
    let d = &op.matrix;
    let (vals, vecs) = jacobi_eigen(d).unwrap();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut resid = 0.0f64;
    for m in 0..vals.len() {
        let v = vecs.column(m);
        let r = d.dot(&v) - &v * vals[m];
        resid = resid.max(r.dot(&r).sqrt());
    }
    let trace_err = (d.diag().sum() - vals.sum()).abs();
    let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
    let recon_err = (&recon - d).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sorted = symmetric_eig(&op).unwrap();
    let sorted_ok = sorted.eigenvalues.windows(2).all(|w| w[0] >= w[1]);

    let (small, _) = jacobi_eigen(&array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
    let mut small = small.to_vec();
    small.sort_by(|a, b| b.total_cmp(a));
    let small_ok = (small[0] - 3.0).abs() <= 1e-12 && (small[1] - 1.0).abs() <= 1e-12;
    Outcome {
        id: "8",
        name: "eigensolver",
        pass: resid <= 1e-10 * norm && trace_err <= 1e-10 && recon_err <= 1e-10 && sorted_ok && small_ok,
        detail: format!(
            "residual {resid:.1e} (≤ {:.1e}), trace {trace_err:.1e}, reconstruction {recon_err:.1e}, [[2,1],[1,2]] -> ({:.12}, {:.12})",
            1e-10 * norm,
            small[0],
            small[1]
        ),
    }
}

fn null_machinery() -> Outcome {
    let reps = 10_000;
    let se = |p: f64| (p * (1.0 - p) / reps as f64).sqrt();
    let mut worst_chi = 0.0f64;
    let mut pass = true;
    for (i, x) in [0.1, 0.5, 1.0, 2.0, 3.84, 6.63].into_iter().enumerate() {
        let exact = pvalue_chisq(x, 1).unwrap();
        let mc = pvalue_mc(x, &[1.0], reps, RngSeed::new(900 + i as u64, 0)).unwrap();
        let z = (mc - exact).abs() / se(exact);
        worst_chi = worst_chi.max(z);
        pass &= z <= 3.0;
    }
    let mut worst_exp = 0.0f64;
    for (i, x) in [0.1, 0.5, 1.0, 2.0, 3.0].into_iter().enumerate() {
        let exact = (-x as f64).exp();
        let mc = pvalue_mc(x, &[0.5, 0.5], reps, RngSeed::new(950 + i as u64, 0)).unwrap();
        let z = (mc - exact).abs() / se(exact);
        worst_exp = worst_exp.max(z);
        pass &= z <= 3.0;
    }
    // For two degrees of freedom the chi-square tail is exactly exp(-x/2).
    let closed = (0..50)
        .map(|i| {
            let x = 0.2 * i as f64;
            (pvalue_chisq(2.0 * x, 2).unwrap() - (-x).exp()).abs()
        })
        .fold(0.0f64, f64::max);
    pass &= closed <= 1e-12;
    Outcome {
        id: "9",
        name: "null distributions",
        pass,
        detail: format!(
            "λ=(1) worst {worst_chi:.2} SE, λ=(0.5,0.5) worst {worst_exp:.2} SE (limit 3), chi2(2) closed form {closed:.1e}"
        ),
    }
}

fn invariants() -> Outcome {
    let g = make_grid(100).unwrap();
    let far = Far1Config::gaussian(g);
    let x = far1_sample(80, &far, RngSeed::new(5, 1)).unwrap();
    let y = far1_sample(120, &far, RngSeed::new(5, 2)).unwrap();
    let y = fmean_core::add_alternative_mean(&y, 0.3);
    let cfg = TestConfig {
        p: PChoice::Fixed(4),
        mc_reps: 2000,
        ..TestConfig::default()
    };
    let base = run_two_sample_test(&x, &y, &cfg).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let mut failures: Vec<&str> = Vec::new();

    let shift = fmean_core::Curve::from_fn(g, |t| (3.0 * t).sin() + 2.0).unwrap();
    let sh = run_two_sample_test(&x.shifted_by(&shift).unwrap(), &y.shifted_by(&shift).unwrap(), &cfg).unwrap();
    if rel(sh.u_full, base.u_full) > 1e-9 || rel(sh.u1, base.u1) > 1e-9 || rel(sh.u2, base.u2) > 1e-9 {
        failures.push("shift");
    }

    let kappa = 2.5;
    let sc = run_two_sample_test(&x.scaled(kappa), &y.scaled(kappa), &cfg).unwrap();
    let k2 = kappa * kappa;
    if rel(sc.u_full, k2 * base.u_full) > 1e-9 || rel(sc.u1, k2 * base.u1) > 1e-9 || rel(sc.u2, base.u2) > 1e-9 {
        failures.push("scale");
    }

    let sw = run_two_sample_test(&y, &x, &cfg).unwrap();
    if rel(sw.u_full, base.u_full) > 1e-9 || rel(sw.u1, base.u1) > 1e-9 || rel(sw.u2, base.u2) > 1e-9 {
        failures.push("swap");
    }

    let mut an = analyze(&x, &y, &cfg).unwrap();
    let before = an.statistics(4).unwrap();
    an.eig.flip_sign(1);
    an.eig.flip_sign(3);
    let after = an.statistics(4).unwrap();
    if rel(after.u1, before.u1) > 1e-12 || rel(after.u2, before.u2) > 1e-12 {
        failures.push("sign flip");
    }
    let a_direct = projections(&x, &y, &an.eig, 4).unwrap();
    if a_direct.iter().zip(&after.ahat).any(|(p, q)| (p - q).abs() > 1e-12) {
        failures.push("projections");
    }

    let full_k = an.eig.len();
    let all = an.statistics(full_k).unwrap();
    if all.u1 > base.u_full * (1.0 + 1e-10) || base.u1 > all.u1 * (1.0 + 1e-12) {
        failures.push("bessel");
    }

    let shifted = fmean_core::add_alternative_mean(&y, 0.9);
    let fast = an.with_shifted_samples(&x, &shifted).unwrap().statistics(4).unwrap();
    let slow = analyze(&x, &shifted, &cfg).unwrap().statistics(4).unwrap();
    if rel(fast.u1, slow.u1) > 1e-9 || rel(fast.u2, slow.u2) > 1e-9 {
        failures.push("shifted reuse");
    }

    let on = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let r = run_two_sample_test(&x, &y, &cfg).unwrap();
                let spec = ExperimentSpec {
                    n: 30,
                    m: 40,
                    grid_len: 40,
                    basis_count: 15,
                    reps: 12,
                    mc_reps: 200,
                    a_grid: vec![0.0, 0.5],
                    ..ExperimentSpec::default()
                };
                (r.u1, r.u2, r.pvalue_u1, run_experiment(&spec).unwrap())
            })
    };
    let (one, four) = (on(1), on(4));
    if one.0.to_bits() != four.0.to_bits() || one.1.to_bits() != four.1.to_bits() || one.2 != four.2 || one.3 != four.3
    {
        failures.push("parallel determinism");
    }

    Outcome {
        id: "10",
        name: "invariant suite",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "shift, scale, swap, sign flip, Bessel, shifted reuse, parallel determinism".into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    }
}

#[test]
fn primary_criteria() {
    let mut outcomes = Vec::new();
    let mut run = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };

    run(oracles());
    run(eigensolver());
    run(null_machinery());
    run(invariants());
    run(consistency());

    let iid = power_table(ErrorModel::IidBridge, table_a_grid());
    run(size("1", "size, iid bridges, alpha=.05", &iid, 4.5, 8.5));
    let far = power_table(ErrorModel::Far1, vec![0.0, 0.8]);
    run(size("2", "size, FAR(1), alpha=.05", &far, 4.8, 9.5));
    run(power("3", "power a=0.8, iid bridges, alpha=.01", &iid, (88.0, 78.0), 4.0));
    run(power("4", "power a=0.8, FAR(1), alpha=.01", &far, (68.6, 53.8), 5.0));
    run(monotone(&iid));
    let (iid5, far5) = (iid.rate(0.0, 0.05, 1).unwrap(), far.rate(0.0, 0.05, 1).unwrap());
    run(Outcome {
        id: "ex",
        name: "FAR(1) size not below iid size minus 1 point",
        pass: far5 >= iid5 - 1.0,
        detail: format!("U1 at alpha=.05: FAR {far5:.1}% vs iid {iid5:.1}%"),
    });

    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("{} ({})", o.id, o.name))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
