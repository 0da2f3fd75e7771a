//! Acceptance suite: every criterion runs and prints one PASS/FAIL line.

use std::time::{Duration, Instant};

use lvgm::covariance::{estimate_lags, CovSequence, DataMatrix};
use lvgm::io::to_json_string;
use lvgm::linalg::{herm_eigenvalues, log_det_pd, CMatrix};
use lvgm::maxent::{solve_fixed, FixedOptions};
use lvgm::model::{assemble_joint, mean_abs_coherence, partial_coherence};
use lvgm::scoring::{model_report, sweep, sweep_report, RegPath, SweepConfig};
use lvgm::simulate::{gen_model, log_det_integral, sample};
use lvgm::slsolve::{phi_star, solve_sl, yule_walker, LatentStructure, RegParams, SolverOptions};
use lvgm::specpoly::{
    adjoint_d, delta_quadratic, eval, integrate, shift_operator, spectrum_lags, toeplitz, BlockRow,
    EdgeSet, FreqGrid, PseudoPoly,
};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    gating: bool,
    detail: String,
}

fn gating(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        gating: true,
        detail,
    }
}

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn random_block_row(rng: &mut ChaCha8Rng, m: usize, n: usize) -> BlockRow {
    let mut blocks = vec![];
    for j in 0..=n {
        let b = randn(rng, m, m);
        blocks.push(if j == 0 {
            (&b + b.transpose()) * 0.5
        } else {
            b
        });
    }
    BlockRow::new(blocks).unwrap()
}

fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> DMatrix<f64> {
    let f = randn(rng, dim, rank);
    &f * f.transpose()
}

fn random_cov(rng: &mut ChaCha8Rng, m: usize, n: usize, samples: usize) -> CovSequence {
    // Moving-average data so that lags beyond zero are non-trivial.
    let e = randn(rng, samples + 1, m);
    let mix = randn(rng, m, m) * 0.5;
    let x = DMatrix::from_fn(samples, m, |t, i| e[(t + 1, i)] + (e.row(t) * &mix)[(0, i)]);
    estimate_lags(&DataMatrix::new(x, None).unwrap(), n, true).unwrap()
}

fn cmax(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Criterion 1: `⟨T(Y),X⟩ = ⟨Y,D(X)⟩` and `ΔXΔ* = Σ e^{-ijθ} Dⱼ(X)`-type evaluation.
fn operator_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_adj = 0.0f64;
    let mut worst_delta = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(0..=3);
        let dim = m * (n + 1);
        let y = random_block_row(&mut rng, m, n);
        let x0 = randn(&mut rng, dim, dim);
        let x = (&x0 + x0.transpose()) * 0.5;
        let lhs = toeplitz(&y).component_mul(&x).sum();
        let rhs = y.inner(&adjoint_d(&x, m).unwrap());
        worst_adj = worst_adj.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        let p = delta_quadratic(&x, m).unwrap();
        for k in 0..7 {
            let theta = -3.0 + k as f64;
            let d = shift_operator(theta, m, n);
            let direct = &d * x.map(|v| Complex::new(v, 0.0)) * d.adjoint();
            worst_delta = worst_delta.max(cmax(&(direct - p.value(theta))));
        }
    }
    let elapsed = start.elapsed();
    gating(
        worst_adj <= 1e-10 && worst_delta <= 1e-10 && elapsed < Duration::from_secs(1),
        format!(
            "adjoint err {worst_adj:.2e}, Δ identity err {worst_delta:.2e}, {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Criterion 2: `∫Δ*Φ̂Δ = T(R̂)`.
fn correlogram_toeplitz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = FreqGrid::new(64).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(0..=3);
        let cov = random_cov(&mut rng, m, n, 200);
        let phi = PseudoPoly::new(cov.lags().clone());
        let vals: Vec<CMatrix> = grid
            .thetas()
            .iter()
            .map(|&t| {
                let d = shift_operator(t, m, n);
                d.adjoint() * phi.value(t) * d
            })
            .collect();
        let lhs = integrate(&vals);
        let t = toeplitz(cov.lags());
        worst = worst.max(cmax(&(lhs - t.map(|v| Complex::new(v, 0.0)))));
    }
    gating(worst <= 1e-10, format!("max |∫Δ*Φ̂Δ − T(R̂)| = {worst:.2e}"))
}

/// Whittle's multichannel Levinson recursion for `x(t) = Σ Aₖ x(t−k) + e(t)`
/// with `Γ(j) = E[x(t+j)x(t)ᵀ]`. Returns the forward coefficients.
fn whittle(gamma: &[DMatrix<f64>], n: usize) -> Vec<DMatrix<f64>> {
    let g = |j: isize| -> DMatrix<f64> {
        if j >= 0 {
            gamma[j as usize].clone()
        } else {
            gamma[(-j) as usize].transpose()
        }
    };
    let mut a: Vec<DMatrix<f64>> = vec![];
    let mut b: Vec<DMatrix<f64>> = vec![];
    let mut vf = g(0);
    let mut vb = g(0);
    for p in 1..=n {
        let mut delta = g(p as isize);
        for (k, ak) in a.iter().enumerate() {
            delta -= ak * g((p - k - 1) as isize);
        }
        let ap = &delta * vb.clone().try_inverse().unwrap();
        let bp = delta.transpose() * vf.clone().try_inverse().unwrap();
        let mut a_new = vec![];
        let mut b_new = vec![];
        for k in 0..p - 1 {
            a_new.push(&a[k] - &ap * &b[p - 2 - k]);
            b_new.push(&b[k] - &bp * &a[p - 2 - k]);
        }
        vf -= &ap * delta.transpose();
        vb -= &bp * &delta;
        a_new.push(ap);
        b_new.push(bp);
        a = a_new;
        b = b_new;
    }
    a
}

/// Criterion 3: complete graph, no latents, against the Whittle AR estimate.
fn levinson_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = FreqGrid::new(1024).unwrap();
    let mut worst_moment = 0.0f64;
    let mut worst_ext = 0.0f64;
    let mut worst_yw = 0.0f64;
    for _ in 0..10 {
        let m = rng.random_range(1..=5);
        let n = rng.random_range(1..=3);
        let cov = random_cov(&mut rng, m, n, 400);
        let sol = solve_fixed(
            &cov,
            &LatentStructure::sparse_only(EdgeSet::complete(m), n),
            &FixedOptions::default(),
        )
        .unwrap();
        let spec = sol.spectrum(&grid).unwrap();
        let ext = n + 2;
        let lags = spectrum_lags(&spec, &grid, ext).unwrap();
        for j in 0..=n {
            worst_moment = worst_moment.max((lags.block(j) - cov.lags().block(j)).abs().max());
        }
        // Oracle: the AR model reproduces R̂ up to order n and extends it by
        // the Yule-Walker recursion.
        let a = whittle(cov.lags().blocks(), n);
        let mut gamma: Vec<DMatrix<f64>> = cov.lags().blocks().to_vec();
        let gget = |g: &Vec<DMatrix<f64>>, j: isize| -> DMatrix<f64> {
            if j >= 0 {
                g[j as usize].clone()
            } else {
                g[(-j) as usize].transpose()
            }
        };
        for j in 1..=n {
            let mut pred = DMatrix::zeros(m, m);
            for (k, ak) in a.iter().enumerate() {
                pred += ak * gget(&gamma, j as isize - k as isize - 1);
            }
            worst_yw = worst_yw.max((pred - &gamma[j]).abs().max());
        }
        for j in (n + 1)..=ext {
            let mut next = DMatrix::zeros(m, m);
            for (k, ak) in a.iter().enumerate() {
                next += ak * gget(&gamma, j as isize - k as isize - 1);
            }
            gamma.push(next);
        }
        let scale = cov.lags().max_abs();
        for j in 0..=ext {
            worst_ext = worst_ext.max((lags.block(j) - &gamma[j]).abs().max() / scale);
        }
    }
    gating(
        worst_moment <= 1e-6 && worst_ext <= 1e-6 && worst_yw <= 1e-10,
        format!(
            "moment err {worst_moment:.2e}, extension vs Whittle {worst_ext:.2e} (oracle YW residual {worst_yw:.1e}), {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

/// Criterion 4: certified subspace estimates on random instances.
fn kkt_certification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = SolverOptions::default();
    let mut failures = vec![];
    let mut worst_gap = 0.0f64;
    let mut worst_ux = 0.0f64;
    let mut worst_vl = 0.0f64;
    for i in 0..20u64 {
        let m = rng.random_range(2..=6);
        let n = rng.random_range(0..=2);
        let l = rng.random_range(0..=1);
        let model = gen_model(m, l, n, 0.3, 100 + i).unwrap();
        let data = sample(&model, 400, None, 200 + i).unwrap();
        let cov = estimate_lags(&data, n, true).unwrap();
        let reg = RegParams::new(rng.random_range(0.1..1.0), rng.random_range(0.2..1.0)).unwrap();
        match solve_sl(&cov, &reg, &opts) {
            Ok(sol) => {
                let c = &sol.certificate;
                let rel_gap = c.gap.abs() / (1.0 + c.dual_objective.abs());
                worst_gap = worst_gap.max(rel_gap);
                worst_ux = worst_ux.max(c.ux);
                worst_vl = worst_vl.max(c.vl);
                let ok = rel_gap <= 1e-6
                    && c.ux <= 1e-6
                    && c.vl <= 1e-6
                    && c.rank_x == m
                    && c.min_eig_x_spectrum > 0.0;
                if !ok {
                    failures.push(format!("#{i}"));
                }
            }
            Err(e) => failures.push(format!("#{i}: {e}")),
        }
    }
    gating(
        failures.is_empty(),
        format!(
            "20 instances, rel gap ≤ {worst_gap:.1e}, ⟨U,X⟩ ≤ {worst_ux:.1e}, ⟨V,L⟩ ≤ {worst_vl:.1e}, failures {failures:?}"
        ),
    )
}

/// Criterion 5: grid singular-value integral of `ΔLΔ*` equals `tr L`.
fn phi_star_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = FreqGrid::new(64).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(1..=5);
        let n = rng.random_range(0..=3);
        let dim = m * (n + 1);
        let rank = rng.random_range(1..=dim);
        let l = random_psd(&mut rng, dim, rank);
        let p = delta_quadratic(&l, m).unwrap();
        let sv: Vec<f64> = eval(&p, &grid)
            .iter()
            .map(|v| herm_eigenvalues(v).iter().map(|e| e.abs()).sum())
            .collect();
        let integral = sv.iter().sum::<f64>() / sv.len() as f64;
        let tr = phi_star(&l).unwrap();
        worst = worst.max((integral - tr).abs() / (1.0 + tr.abs()));
    }
    gating(worst <= 1e-8, format!("max rel err {worst:.2e}"))
}

/// Criterion 6: Jensen's formula on Yule-Walker solutions.
fn jensen_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = FreqGrid::new(2048).unwrap();
    let mut worst = 0.0f64;
    let mut worst_yw = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(1..=3);
        let cov = random_cov(&mut rng, m, n, 300);
        let t = toeplitz(cov.lags());
        let (b, w) = yule_walker(&t, m).unwrap();
        // Certificate: T Bᵀ = [W; 0].
        let mut target = DMatrix::zeros(t.nrows(), m);
        target.view_mut((0, 0), (m, m)).copy_from(&w);
        worst_yw = worst_yw.max((&t * b.transpose() - target).abs().max());
        let x = b.transpose() * w.clone().try_inverse().unwrap() * &b;
        let lhs = log_det_integral(&delta_quadratic(&x, m).unwrap(), &grid).unwrap();
        let rhs = log_det_pd(&x.view((0, 0), (m, m)).into_owned()).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    gating(
        worst <= 1e-6 && worst_yw <= 1e-10,
        format!("max |∫log det ΔXΔ* − log det X₀₀| = {worst:.2e} (YW residual {worst_yw:.1e})"),
    )
}

fn synthetic_path() -> RegPath {
    RegPath::log_grid_lambda_gamma((0.51, 2.04), 5, (0.265, 1.06), 5).unwrap()
}

struct SyntheticRun {
    success_n1: Vec<bool>,
    edges_n0: Vec<EdgeSet>,
    truths: Vec<EdgeSet>,
}

/// Criterion 7 (and the data for criterion 8).
fn synthetic_recovery() -> (Outcome, SyntheticRun) {
    let start = Instant::now();
    let path = synthetic_path();
    let mut run = SyntheticRun {
        success_n1: vec![],
        edges_n0: vec![],
        truths: vec![],
    };
    let mut lines = vec![];
    for seed in 0..10u64 {
        let model = gen_model(15, 1, 1, 0.1, seed).unwrap();
        let data = sample(&model, 500, None, 10_000 + seed).unwrap();
        let sw = sweep(&data, &path, &SweepConfig::new(1)).unwrap();
        let sel = sw.selected_model();
        let diff = sel.edges().symmetric_difference(model.edges()).len();
        run.success_n1.push(diff == 0 && sel.l() == 1);
        lines.push(format!(
            "seed {seed}: |E|={} selected |E|={} diff={diff} l={} λ={:.2} λγ={:.2}",
            model.edges().len(),
            sel.edges().len(),
            sel.l(),
            sel.reg.lambda(),
            sel.reg.lambda_gamma()
        ));
        let sw0 = sweep(&data, &path, &SweepConfig::new(0)).unwrap();
        run.edges_n0.push(sw0.selected_model().edges().clone());
        run.truths.push(model.edges().clone());
    }
    for line in &lines {
        println!("    {line}");
    }
    let hits = run.success_n1.iter().filter(|s| **s).count();
    let elapsed = start.elapsed();
    (
        gating(
            hits >= 7 && elapsed < Duration::from_secs(1800),
            format!(
                "exact E and l=1 in {hits}/10 seeds, {:.0}s (includes n=0 runs)",
                elapsed.as_secs_f64()
            ),
        ),
        run,
    )
}

/// Criterion 8: soft comparison with the static (n=0) pipeline.
fn static_comparison(run: &SyntheticRun) -> Outcome {
    let mut differs = 0;
    let mut eligible = 0;
    for i in 0..run.truths.len() {
        if run.success_n1[i] {
            eligible += 1;
            if run.edges_n0[i] != run.truths[i] {
                differs += 1;
            }
        }
    }
    let n0_exact = (0..run.truths.len())
        .filter(|&i| run.edges_n0[i] == run.truths[i])
        .count();
    Outcome {
        pass: differs >= 1,
        gating: false,
        detail: format!(
            "n=0 differs from truth in {differs} of {eligible} seeds where n=1 succeeds; n=0 exact in {n0_exact}/10"
        ),
    }
}

/// Criterion 9: stock-scale problem on synthetic data of the same shape.
fn stock_scale() -> Outcome {
    let start = Instant::now();
    let model = gen_model(22, 1, 1, 0.08, 42).unwrap();
    let data = sample(&model, 518, None, 4242).unwrap();
    let path = RegPath::log_grid_lambda_gamma((0.5, 2.0), 3, (0.25, 1.0), 3).unwrap();
    let sw = sweep(&data, &path, &SweepConfig::new(1)).unwrap();
    let sel = sw.selected_model();
    let joint = assemble_joint(&sel.solution).unwrap();
    let pc = partial_coherence(&joint, &FreqGrid::new(256).unwrap()).unwrap();
    let table = mean_abs_coherence(&pc);
    let elapsed = start.elapsed();
    let ok_points = sw.outcomes.iter().filter(|o| o.is_ok()).count();
    gating(
        path.len() >= 9 && elapsed < Duration::from_secs(1800) && table.nrows() == 22 + joint.l(),
        format!(
            "{ok_points}/{} points solved, selected edges={} l={} D={:.3}, coherence table {}×{}, {:.0}s",
            path.len(),
            sel.edges().len(),
            sel.l(),
            sel.d,
            table.nrows(),
            table.ncols(),
            elapsed.as_secs_f64()
        ),
    )
}

fn pipeline_json(seed: u64) -> (String, String, String) {
    let model = gen_model(6, 1, 1, 0.2, seed).unwrap();
    let data = sample(&model, 300, None, seed + 1).unwrap();
    let path = RegPath::log_grid_lambda_gamma((0.3, 1.2), 3, (0.15, 0.6), 3).unwrap();
    let sw = sweep(&data, &path, &SweepConfig::new(1)).unwrap();
    (
        to_json_string(&model.to_json()).unwrap(),
        to_json_string(&sweep_report(&path, &sw)).unwrap(),
        to_json_string(&model_report(sw.selected_model())).unwrap(),
    )
}

/// Criterion 10: bit-identical JSON across two runs.
fn determinism() -> Outcome {
    let a = pipeline_json(77);
    let b = pipeline_json(77);
    gating(
        a == b,
        format!(
            "model/sweep/selected JSON identical: {}/{}/{}",
            a.0 == b.0,
            a.1 == b.1,
            a.2 == b.2
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "operator algebra", operator_algebra()),
        (2, "correlogram/Toeplitz identity", correlogram_toeplitz()),
        (3, "maximum-entropy vs Levinson", levinson_oracle()),
        (4, "duality/KKT certification", kkt_certification()),
        (5, "φ* identity", phi_star_identity()),
        (6, "Jensen identity", jensen_identity()),
    ];
    let (c7, run) = synthetic_recovery();
    results.push((7, "synthetic recovery", c7));
    results.push((8, "n=0 degradation (soft)", static_comparison(&run)));
    results.push((9, "stock-scale feasibility", stock_scale()));
    results.push((10, "determinism", determinism()));

    for (id, name, o) in &results {
        let tag = match (o.pass, o.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-FAIL",
        };
        println!("criterion {id:>2} [{tag}] {name}: {}", o.detail);
    }
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, _, o)| o.gating && !o.pass)
        .map(|(id, _, _)| *id)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
