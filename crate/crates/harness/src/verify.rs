//! The acceptance checks.
//!
//! Criteria 1–7 are property and oracle checks on small random problems.
//! Criteria 8–13 run full-size Monte Carlo cells and compare medians over
//! replicates against fixed thresholds.

use std::time::Instant;

use dhsqr::baselines::pooled_dhsqr;
use dhsqr::datagen::{gen_dataset, ModelKind, ModelSpec, NoiseLaw};
use dhsqr::engine::{ledger_check, run_dhsqr, DhsqrConfig, InitLambda, LambdaSchedule};
use dhsqr::init::{smoothed_check_loss, smoothed_check_loss_derivative};
use dhsqr::kernel::{gaussian_kernel, BandwidthPlan};
use dhsqr::lasso::{kkt_residual, solve, PenalizedQuadratic, SolverOptions};
use dhsqr::transform::{pseudo_pair, shard_aggregates, KERNEL_FLOOR};
use dhsqr::{CoefficientVector, DatasetShard};
use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::config::{ExperimentConfig, Method, Model, Noise};
use crate::grid::{run_experiment_grid, GridOutput};
use crate::output::{describe, write_traces};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Replicates per Monte Carlo cell.
    pub replicates: usize,
    pub seed: u64,
    /// Skip criteria 8–13.
    pub fast: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            replicates: 10,
            seed: 1,
            fast: false,
        }
    }
}

pub const FAST_IDS: [u8; 7] = [1, 2, 3, 4, 5, 6, 7];
pub const DESK_IDS: [u8; 6] = [8, 9, 10, 11, 12, 13];

fn rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha20Rng) -> f64 {
    r.sample(StandardNormal)
}

fn timed(id: u8, name: &'static str, f: impl FnOnce() -> (bool, String)) -> CriterionResult {
    let clock = Instant::now();
    let (passed, detail) = f();
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds: clock.elapsed().as_secs_f64(),
    }
}

/// Runs criteria 1–7, then (unless `fast`) 8–13, calling `report` as each
/// finishes.
pub fn run_all(
    opts: VerifyOptions,
    mut report: impl FnMut(&CriterionResult),
) -> Vec<CriterionResult> {
    let mut out = Vec::new();
    let mut push = |r: CriterionResult| {
        report(&r);
        out.push(r);
    };
    for id in FAST_IDS {
        push(run_fast(id, opts.seed));
    }
    if !opts.fast {
        let mut desk = DeskRuns::new(opts);
        for id in DESK_IDS {
            push(desk.criterion(id));
        }
    }
    out
}

/// One of criteria 1–7.
pub fn run_fast(id: u8, seed: u64) -> CriterionResult {
    match id {
        1 => timed(1, "solver oracle equivalence", || solver_oracle(seed)),
        2 => timed(2, "pooled equivalence", || pooled_equivalence(seed)),
        3 => timed(3, "division-free identity", || division_free(seed)),
        4 => timed(4, "aggregation linearity", || linearity(seed)),
        5 => timed(5, "communication ledger", || ledger_exactness(seed)),
        6 => timed(6, "smoothed-loss gradient", smoothed_gradient),
        7 => timed(7, "determinism", || determinism(seed)),
        _ => panic!("criterion {id} is not a fast check"),
    }
}

/// Minimizes `½βᵀAβ − aᵀβ + Σ w_j|β_j|` by trying every support and sign
/// pattern. Each candidate is a feasible point, and the minimizer is among
/// them whenever `A` is positive definite.
pub fn brute_force_lasso(q: &PenalizedQuadratic) -> Array1<f64> {
    let d = q.dim();
    let mut best = Array1::zeros(d);
    let mut best_obj = q.objective(&best);
    for mask in 1u32..(1 << d) {
        let support: Vec<usize> = (0..d).filter(|j| mask >> j & 1 == 1).collect();
        let k = support.len();
        for signs in 0u32..(1 << k) {
            let mut m = Array2::zeros((k, k));
            let mut rhs = Array1::zeros(k);
            for (r, &i) in support.iter().enumerate() {
                let s = if signs >> r & 1 == 1 { 1.0 } else { -1.0 };
                rhs[r] = q.a_vec[i] - q.penalty_weight(i) * s;
                for (c, &j) in support.iter().enumerate() {
                    m[[r, c]] = q.a_mat[[i, j]];
                }
            }
            let Some(sol) = gauss_solve(m, rhs) else {
                continue;
            };
            let mut beta = Array1::zeros(d);
            for (r, &i) in support.iter().enumerate() {
                beta[i] = sol[r];
            }
            let obj = q.objective(&beta);
            if obj < best_obj {
                best_obj = obj;
                best = beta;
            }
        }
    }
    best
}

fn gauss_solve(mut m: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let k = b.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))?;
        if m[[piv, col]].abs() < 1e-14 {
            return None;
        }
        for c in 0..k {
            m.swap([col, c], [piv, c]);
        }
        b.swap(col, piv);
        for r in (col + 1)..k {
            let f = m[[r, col]] / m[[col, col]];
            for c in col..k {
                m[[r, c]] -= f * m[[col, c]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(k);
    for r in (0..k).rev() {
        let tail: f64 = ((r + 1)..k).map(|c| m[[r, c]] * x[c]).sum();
        x[r] = (b[r] - tail) / m[[r, r]];
    }
    Some(x)
}

fn random_quadratic(r: &mut ChaCha20Rng) -> PenalizedQuadratic {
    let d = r.random_range(1..=4);
    let b = Array2::from_shape_fn((d, d), |_| normal(r));
    let mut a_mat = b.t().dot(&b) / d as f64;
    for j in 0..d {
        a_mat[[j, j]] += 0.05;
    }
    let a_vec = Array1::from_shape_fn(d, |_| 2.0 * normal(r));
    let mut q = PenalizedQuadratic::new(a_mat, a_vec, 0.0);
    q.penalize_intercept = r.random_bool(0.5);
    q.lambda = r.random_range(0.0..1.5) * q.lambda_max().max(0.1);
    q
}

fn solver_oracle(seed: u64) -> (bool, String) {
    let mut r = rng(seed, 101);
    let opts = SolverOptions {
        tol: 1e-10,
        ..SolverOptions::default()
    };
    let (mut worst_gap, mut worst_kkt, mut failures) = (0.0f64, 0.0f64, 0);
    for _ in 0..100 {
        let q = random_quadratic(&mut r);
        let oracle = brute_force_lasso(&q);
        match solve(&q, &CoefficientVector::zeros(q.dim()), opts) {
            Ok(rep) => {
                worst_gap = worst_gap.max(q.objective(rep.beta.as_array()) - q.objective(&oracle));
                if rep.converged {
                    worst_kkt = worst_kkt.max(kkt_residual(&q, &rep.beta).unwrap_or(f64::INFINITY));
                }
            }
            Err(_) => failures += 1,
        }
    }
    (
        failures == 0 && worst_gap <= 1e-6 && worst_kkt <= 1e-8,
        format!("100 instances, worst objective gap {worst_gap:.2e}, worst KKT {worst_kkt:.2e}, errors {failures}"),
    )
}

fn small_config(tau: f64, n_total: usize, n_local: usize, iterations: usize) -> DhsqrConfig {
    let mut cfg = DhsqrConfig::new(tau, BandwidthPlan::new(3, n_total, n_local), iterations);
    cfg.init.lambda0 = InitLambda::Fixed(0.05);
    cfg
}

fn pooled_equivalence(seed: u64) -> (bool, String) {
    let mut r = rng(seed, 102);
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    for trial in 0..20 {
        let noise = [NoiseLaw::Normal, NoiseLaw::StudentT3, NoiseLaw::Cauchy][trial % 3];
        let spec = ModelSpec::simulation_default(ModelKind::Heteroscedastic, noise, 20);
        let data_seed: u64 = r.random();
        let (data, val) = match gen_dataset(&spec, 250, data_seed) {
            Ok(d) => (d.slice_rows(0, 200), d.slice_rows(200, 250)),
            Err(e) => {
                problems.push(e.to_string());
                continue;
            }
        };
        let tau = r.random_range(0.2..0.8);
        let cfg = small_config(tau, 200, 200, 5);
        let mut tied = cfg.clone();
        tied.plan.tie_local_to_global = true;
        let shard = data.clone().into_shard(0);
        let a = run_dhsqr(
            std::slice::from_ref(&shard),
            Some(&val),
            None,
            &tied,
            data_seed,
        );
        let b = pooled_dhsqr(&data, Some(&val), None, &cfg, data_seed);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let b = b.run.expect("pooled keeps its run");
                if a.traces.len() != 5 || b.traces.len() != 5 {
                    problems.push(format!("trial {trial}: incomplete traces"));
                }
                for (ta, tb) in a.traces.iter().zip(&b.traces) {
                    let d = (ta.beta.as_array() - tb.beta.as_array())
                        .fold(0.0f64, |m, v| m.max(v.abs()));
                    worst = worst.max(d);
                }
            }
            (a, b) => problems.push(format!("trial {trial}: {:?} / {:?}", a.err(), b.err())),
        }
    }
    (
        problems.is_empty() && worst <= 1e-12,
        format!(
            "20 datasets, max coordinate gap {worst:.2e}{}",
            note(&problems)
        ),
    )
}

fn note(problems: &[String]) -> String {
    if problems.is_empty() {
        String::new()
    } else {
        format!(", {} problems: {}", problems.len(), problems[0])
    }
}

fn random_row(r: &mut ChaCha20Rng, d: usize) -> Array1<f64> {
    Array1::from_shape_fn(d, |j| if j == 0 { 1.0 } else { normal(r) })
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn division_free(seed: u64) -> (bool, String) {
    let mut r = rng(seed, 103);
    let (mut worst, mut used, mut skipped) = (0.0f64, 0usize, 0usize);
    for _ in 0..10_000 {
        let d = r.random_range(2..=6);
        let x = random_row(&mut r, d);
        let beta = CoefficientVector::from_vec((0..d).map(|_| normal(&mut r)).collect());
        let y = x.dot(beta.as_array()) + 2.0 * normal(&mut r);
        let tau = r.random_range(0.05..0.95);
        let h = r.random_range(0.1..3.0);
        let e = y - x.dot(beta.as_array());
        if gaussian_kernel(e / h) / h < KERNEL_FLOOR {
            skipped += 1;
            continue;
        }
        let Ok((xt, yt)) = pseudo_pair(x.view(), y, &beta, tau, h) else {
            return (
                false,
                "pseudo_pair refused a row above the kernel floor".into(),
            );
        };
        let shard = DatasetShard::new(0, x.clone().insert_axis(Axis(0)), Array1::from_elem(1, y))
            .expect("one row");
        let Ok(agg) = shard_aggregates(&shard, &beta, tau, h, true) else {
            return (false, "shard_aggregates failed".into());
        };
        let gram = agg.gram.expect("requested");
        let fit = xt.dot(beta.as_array());
        for i in 0..d {
            worst = worst.max(rel_gap(agg.z[i], xt[i] * yt));
            worst = worst.max(rel_gap(agg.g[i], xt[i] * fit));
            for j in 0..d {
                worst = worst.max(rel_gap(gram[[i, j]], xt[i] * xt[j]));
            }
        }
        used += 1;
    }
    (
        used > 0 && worst <= 1e-10,
        format!(
            "{used} rows checked ({skipped} below the kernel floor), max relative gap {worst:.2e}"
        ),
    )
}

fn linearity(seed: u64) -> (bool, String) {
    let mut r = rng(seed, 104);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let d = r.random_range(2..=8);
        let k = r.random_range(2..=5);
        let beta = CoefficientVector::from_vec((0..d).map(|_| 0.5 * normal(&mut r)).collect());
        let tau = r.random_range(0.1..0.9);
        let h = r.random_range(0.3..3.0);
        let shards: Vec<DatasetShard> = (0..k)
            .map(|id| {
                let n = r.random_range(5..300);
                let x = Array2::from_shape_fn(
                    (n, d),
                    |(_, j)| if j == 0 { 1.0 } else { normal(&mut r) },
                );
                let y = x.dot(beta.as_array()) + Array1::from_shape_fn(n, |_| normal(&mut r));
                DatasetShard::new(id, x, y).expect("valid shard")
            })
            .collect();
        let xs: Vec<_> = shards.iter().map(|s| s.x.view()).collect();
        let ys: Vec<_> = shards.iter().map(|s| s.y.view()).collect();
        let merged = DatasetShard::new(
            0,
            concatenate(Axis(0), &xs).expect("same width"),
            concatenate(Axis(0), &ys).expect("vectors"),
        )
        .expect("valid shard");
        let whole = shard_aggregates(&merged, &beta, tau, h, true).expect("finite");
        let total = merged.n() as f64;
        let mut z = Array1::<f64>::zeros(d);
        let mut g = Array1::<f64>::zeros(d);
        let mut gram = Array2::<f64>::zeros((d, d));
        for s in &shards {
            let a = shard_aggregates(s, &beta, tau, h, true).expect("finite");
            let w = s.n() as f64 / total;
            z.scaled_add(w, &a.z);
            g.scaled_add(w, &a.g);
            gram.scaled_add(w, a.gram.as_ref().expect("requested"));
        }
        let gap = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        for i in 0..d {
            worst = worst.max(gap(z[i], whole.z[i])).max(gap(g[i], whole.g[i]));
            for j in 0..d {
                worst = worst.max(gap(gram[[i, j]], whole.gram.as_ref().unwrap()[[i, j]]));
            }
        }
    }
    (
        worst <= 1e-12,
        format!("50 trials, max relative gap {worst:.2e}"),
    )
}

fn ledger_exactness(seed: u64) -> (bool, String) {
    let mut parts = Vec::new();
    let mut ok = true;
    for (m, p, t) in [(2usize, 10usize, 3usize), (5, 500, 10), (40, 500, 10)] {
        let n = 20;
        let spec = ModelSpec::simulation_default(ModelKind::Homoscedastic, NoiseLaw::Normal, p);
        let outcome = gen_dataset(&spec, m * n, seed).and_then(|data| {
            let shards = dhsqr::datagen::shard_dataset(&data, m, seed)?;
            let mut cfg = small_config(0.5, m * n, n, t);
            cfg.schedule = LambdaSchedule::Fixed(0.1);
            cfg.init.start = Some(CoefficientVector::zeros(p + 1));
            run_dhsqr(&shards, None, None, &cfg, seed)
        });
        match outcome {
            Ok(run) => {
                let want = t * (m - 1) * 3 * (p + 1);
                let got = run.ledger.total_values();
                let exact =
                    run.error.is_none() && got == want && ledger_check(&run.ledger, m, p, t);
                ok &= exact;
                parts.push(format!("(m={m}, p={p}, T={t}) {got}/{want}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("(m={m}, p={p}, T={t}) failed: {e}"));
            }
        }
    }
    (ok, parts.join(", "))
}

fn smoothed_gradient() -> (bool, String) {
    let mut worst = 0.0f64;
    for h0 in [0.05, 0.5, 2.0] {
        let step = 1e-4 * h0;
        for tau in [0.1, 0.5, 0.9] {
            for i in 0..=400 {
                let u = -5.0 * h0 + 10.0 * h0 * i as f64 / 400.0;
                let fd = (smoothed_check_loss(u + step, tau, h0)
                    - smoothed_check_loss(u - step, tau, h0))
                    / (2.0 * step);
                let d = smoothed_check_loss_derivative(u, tau, h0);
                // the derivative crosses zero; measure those points against 1e-3
                worst = worst.max((d - fd).abs() / d.abs().max(1e-3));
            }
        }
    }
    (worst <= 1e-6, format!("max relative error {worst:.2e}"))
}

fn determinism_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n_total: vec![2000],
        n_local: vec![200],
        p: 50,
        iterations: 5,
        replicates: 2,
        seed,
        methods: vec![Method::Dhsqr, Method::Pooled],
        ..ExperimentConfig::default()
    }
}

fn determinism(seed: u64) -> (bool, String) {
    let cfg = determinism_config(seed);
    let render = || -> Result<Vec<u8>, String> {
        let out = run_experiment_grid(&cfg).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_traces(&mut buf, &out.traces).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    match (render(), render()) {
        (Ok(a), Ok(b)) => (
            a == b && !a.is_empty(),
            format!("two runs, {} trace bytes, identical: {}", a.len(), a == b),
        ),
        (a, b) => (false, format!("run failed: {:?} / {:?}", a.err(), b.err())),
    }
}

/// Settings shared by the Monte Carlo cells.
pub fn desk_config(
    opts: VerifyOptions,
    model: Model,
    noise: Noise,
    tau: f64,
    n_total: usize,
    methods: Vec<Method>,
) -> ExperimentConfig {
    ExperimentConfig {
        models: vec![model],
        noises: vec![noise],
        taus: vec![tau],
        n_total: vec![n_total],
        n_local: vec![500],
        p: 500,
        iterations: 10,
        replicates: opts.replicates,
        seed: opts.seed,
        methods,
        ..ExperimentConfig::default()
    }
}

/// Monte Carlo cells, each run at most once and shared between criteria.
pub struct DeskRuns {
    opts: VerifyOptions,
    main: Option<Result<GridOutput, String>>,
    small: Option<Result<GridOutput, String>>,
}

fn median_of(out: &GridOutput, method: Method, f: impl Fn(&crate::grid::RunRecord) -> f64) -> f64 {
    let v: Vec<f64> = out
        .records
        .iter()
        .filter(|r| r.method == method)
        .map(f)
        .filter(|v| v.is_finite())
        .collect();
    describe(&v).2
}

fn failures(out: &GridOutput) -> usize {
    out.records.iter().filter(|r| r.error.is_some()).count()
}

impl DeskRuns {
    pub fn new(opts: VerifyOptions) -> Self {
        DeskRuns {
            opts,
            main: None,
            small: None,
        }
    }

    fn run(cfg: &ExperimentConfig) -> Result<GridOutput, String> {
        run_experiment_grid(cfg).map_err(|e| e.to_string())
    }

    /// Model 2, normal noise, τ = 0.5, N = 20000 with all three methods.
    fn main(&mut self) -> Result<&GridOutput, String> {
        let opts = self.opts;
        self.main
            .get_or_insert_with(|| {
                Self::run(&desk_config(
                    opts,
                    Model::Heteroscedastic,
                    Noise::Normal,
                    0.5,
                    20_000,
                    vec![Method::Dhsqr, Method::AvgDc, Method::Pooled],
                ))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn small(&mut self) -> Result<&GridOutput, String> {
        let opts = self.opts;
        self.small
            .get_or_insert_with(|| {
                Self::run(&desk_config(
                    opts,
                    Model::Heteroscedastic,
                    Noise::Normal,
                    0.5,
                    5_000,
                    vec![Method::Dhsqr],
                ))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn criterion(&mut self, id: u8) -> CriterionResult {
        let opts = self.opts;
        let wrap = |r: Result<(bool, String), String>| {
            r.unwrap_or_else(|e| (false, format!("grid failed: {e}")))
        };
        match id {
            8 => timed(8, "reference cell, DHSQR accuracy", || {
                wrap(self.main().map(|out| {
                    let l2 = median_of(out, Method::Dhsqr, |r| r.l2_error);
                    let f1 = median_of(out, Method::Dhsqr, |r| r.f1);
                    (
                        failures(out) == 0 && l2 <= 0.12 && f1 >= 0.90,
                        format!("median l2 {l2:.4} (<= 0.12), median F1 {f1:.3} (>= 0.90), failed runs {}", failures(out)),
                    )
                }))
            }),
            9 => timed(9, "reference cell, Avg-DC support", || {
                wrap(self.main().map(|out| {
                    let avg = median_of(out, Method::AvgDc, |r| r.f1);
                    let ours = median_of(out, Method::Dhsqr, |r| r.f1);
                    (
                        avg <= 0.30 && ours - avg >= 0.5,
                        format!("median Avg-DC F1 {avg:.3} (<= 0.30), DHSQR minus Avg-DC {:.3} (>= 0.5)", ours - avg),
                    )
                }))
            }),
            10 => timed(10, "sample-size monotonicity", || {
                let big = self
                    .main()
                    .map(|out| median_of(out, Method::Dhsqr, |r| r.l2_error));
                let small = self
                    .small()
                    .map(|out| median_of(out, Method::Dhsqr, |r| r.l2_error));
                wrap(big.and_then(|b| {
                    small.map(|s| {
                        (
                            b < s,
                            format!("median l2 {s:.4} at N=5000, {b:.4} at N=20000"),
                        )
                    })
                }))
            }),
            11 => timed(11, "iteration convergence", || {
                wrap(self.main().map(iteration_trend))
            }),
            12 => timed(12, "heavy-tail robustness", || {
                wrap(
                    Self::run(&desk_config(
                        opts,
                        Model::Homoscedastic,
                        Noise::Cauchy,
                        0.5,
                        10_000,
                        vec![Method::Dhsqr],
                    ))
                    .map(|out| {
                        let complete = out.records.iter().all(|r| {
                            r.error.is_none() && r.l2_error.is_finite() && r.f1.is_finite()
                        }) && out.traces.iter().filter(|t| t.t == 10).count()
                            == out.records.len()
                            && out.traces.iter().all(|t| t.l2_error.is_finite());
                        let f1 = median_of(&out, Method::Dhsqr, |r| r.f1);
                        (
                            complete && f1 >= 0.8,
                            format!(
                                "all iterations finite: {complete}, median F1 {f1:.3} (>= 0.8)"
                            ),
                        )
                    }),
                )
            }),
            13 => timed(13, "quantile level 0.7", || {
                wrap(
                    Self::run(&desk_config(
                        opts,
                        Model::Heteroscedastic,
                        Noise::Normal,
                        0.7,
                        20_000,
                        vec![Method::Dhsqr],
                    ))
                    .map(|out| {
                        let l2 = median_of(&out, Method::Dhsqr, |r| r.l2_error);
                        let f1 = median_of(&out, Method::Dhsqr, |r| r.f1);
                        (
                            failures(&out) == 0 && l2 <= 0.25 && f1 >= 0.90,
                            format!("median l2 {l2:.4} (<= 0.25), median F1 {f1:.3} (>= 0.90)"),
                        )
                    }),
                )
            }),
            _ => panic!("criterion {id} is not a Monte Carlo check"),
        }
    }
}

/// Median ℓ₂ at each iteration; after t = 3 no step may rise by more than
/// 10%, and the last value must be within 1.5× the pooled baseline.
fn iteration_trend(out: &GridOutput) -> (bool, String) {
    let at = |method: Method, t: usize| {
        let v: Vec<f64> = out
            .traces
            .iter()
            .filter(|r| r.method == method && r.t == t)
            .map(|r| r.l2_error)
            .collect();
        describe(&v).2
    };
    let Some(last) = out
        .traces
        .iter()
        .filter(|r| r.method == Method::Dhsqr)
        .map(|r| r.t)
        .max()
    else {
        return (false, "no DHSQR traces".into());
    };
    let curve: Vec<f64> = (0..=last).map(|t| at(Method::Dhsqr, t)).collect();
    let monotone = (3..last).all(|t| curve[t + 1] <= 1.1 * curve[t]);
    let pooled = at(Method::Pooled, last);
    let close = curve[last] <= 1.5 * pooled;
    let shown: Vec<String> = curve.iter().map(|v| format!("{v:.4}")).collect();
    (
        monotone && close && last == 10,
        format!(
            "median l2 by iteration [{}], pooled at T {pooled:.4}, ratio {:.2} (<= 1.5)",
            shown.join(" "),
            curve[last] / pooled
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn brute_force_matches_closed_forms() {
        // one coordinate: β = S(a, λ)/A
        let q = PenalizedQuadratic::new(array![[2.0]], array![3.0], 1.0);
        assert!((brute_force_lasso(&q)[0] - 1.0).abs() < 1e-15);
        let q = PenalizedQuadratic::new(array![[2.0]], array![0.5], 1.0);
        assert_eq!(brute_force_lasso(&q)[0], 0.0);
        // diagonal problem separates per coordinate
        let q = PenalizedQuadratic::new(array![[1.0, 0.0], [0.0, 4.0]], array![-3.0, 6.0], 2.0);
        let b = brute_force_lasso(&q);
        assert!((b[0] + 1.0).abs() < 1e-15 && (b[1] - 1.0).abs() < 1e-15);
        // unpenalized intercept is the least-squares value
        let mut q = PenalizedQuadratic::new(array![[1.0]], array![0.3], 5.0);
        q.penalize_intercept = false;
        assert!((brute_force_lasso(&q)[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn gauss_solve_solves() {
        let x = gauss_solve(array![[0.0, 2.0], [3.0, 1.0]], array![4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(gauss_solve(array![[1.0, 2.0], [2.0, 4.0]], array![1.0, 1.0]).is_none());
    }
}
