//! The acceptance suite: Monte Carlo recovery and size, oracle comparisons for
//! the numerical kernels, diagnostic power, calibration and determinism.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::employability::{match_nearest_neighbors, score_dataset, Candidate, ScoreOptions};
use crate::error::{Error, Result};
use crate::fe::{cluster_vcov, ols_absorbed, t_critical, FESpec, Factor, Regressor};
use crate::logit::{fit_logit, log_likelihood, score_vector};
use crate::model::{filter_estimation_sample, Dataset, FilterRules, ProgramType};
use crate::peer::{compute_peer_table, PeerOptions};
use crate::suite::{interacted_model, linear_in_means, monthly_dynamics, InteractionLevel, Sample, PEER_MEAN};
use crate::synth::{generate, DgpConfig, GroundTruth};
use crate::validity::{derived_rng, guryan_test, resampling_test, variance_decomposition, GuryanOptions};

const OUTCOME: &str = "emp_days_60";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<22} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceptOptions {
    pub seed: u64,
    /// Parameters of the full-size institution; Monte Carlo criteria run it scaled down.
    pub dgp: DgpConfig,
    pub recovery_reps: usize,
    pub null_reps: usize,
    pub oracle_instances: usize,
    pub matching_instances: usize,
    pub resampling_runs: usize,
    pub resampling_sims: usize,
    pub guryan_runs: usize,
    pub runtime_budget_secs: f64,
    /// Truth to test recovery against; defaults to each replicate's own ground truth.
    pub truth_theta: Option<f64>,
    /// Scratch space for the determinism runs.
    pub work_dir: PathBuf,
    /// Restrict to these criteria; empty runs all.
    pub only: Vec<u8>,
}

impl Default for AcceptOptions {
    fn default() -> Self {
        AcceptOptions {
            seed: crate::config::DEFAULT_SEED,
            dgp: DgpConfig::default(),
            recovery_reps: 200,
            null_reps: 200,
            oracle_instances: 25,
            matching_instances: 100,
            resampling_runs: 50,
            resampling_sims: 200,
            guryan_runs: 100,
            runtime_budget_secs: 900.0,
            truth_theta: None,
            work_dir: std::env::temp_dir().join("peerfx-accept"),
            only: Vec::new(),
        }
    }
}

impl AcceptOptions {
    fn rng(&self, stream: u64, index: u64) -> ChaCha8Rng {
        derived_rng(self.seed, (stream << 32) | index)
    }

    fn replicate_cfg(&self, stream: u64, r: usize) -> DgpConfig {
        DgpConfig { seed: self.rng(stream, r as u64).next_u64(), ..self.dgp.clone().scaled_down() }
    }
}

/// Generated, scored and filtered data ready for estimation.
pub fn prepared(cfg: &DgpConfig) -> Result<(Dataset, GroundTruth)> {
    let (ds, truth) = generate(cfg)?;
    let scored = score_dataset(&ds, &ScoreOptions::default())?.dataset;
    Ok((filter_estimation_sample(&scored, &FilterRules::default())?, truth))
}

fn with_sample<T>(ds: &Dataset, f: impl FnOnce(&Sample) -> Result<T>) -> Result<T> {
    let table = compute_peer_table(ds, PeerOptions::default())?;
    let sample = Sample::build(ds, &table, ProgramType::Short)?;
    f(&sample)
}

fn share(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&b| b).count() as f64 / flags.len().max(1) as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn recovery(o: &AcceptOptions) -> Result<(bool, String)> {
    let start = Instant::now();
    let hits: Vec<(bool, f64)> = (0..o.recovery_reps)
        .into_par_iter()
        .map(|r| {
            let (ds, truth) = prepared(&o.replicate_cfg(1, r))?;
            let theta = o.truth_theta.unwrap_or(truth.theta);
            with_sample(&ds, |s| {
                let rep = linear_in_means(s, OUTCOME)?;
                let row = rep.row(PEER_MEAN).ok_or_else(|| Error::Numerical("peer mean dropped".into()))?;
                let crit = t_critical(0.95, (rep.n_clusters - 1) as f64);
                Ok(((row.coef - theta).abs() <= crit * row.coef_se, row.coef))
            })
        })
        .collect::<Result<_>>()?;
    let secs = start.elapsed().as_secs_f64();
    let cover = share(&hits.iter().map(|h| h.0).collect::<Vec<_>>());
    let est = mean(&hits.iter().map(|h| h.1).collect::<Vec<_>>());
    let theta = o.truth_theta.unwrap_or(o.dgp.theta);
    Ok((
        cover >= 0.90 && secs < o.runtime_budget_secs,
        format!("coverage {cover:.3} over {} reps (>= 0.90), mean estimate {est:.1} vs {theta}, {secs:.0}s", hits.len()),
    ))
}

fn null_size(o: &AcceptOptions) -> Result<(bool, String)> {
    let rejections: Vec<(bool, bool)> = (0..o.null_reps)
        .into_par_iter()
        .map(|r| {
            let cfg = DgpConfig { theta: 0.0, theta_sd: 0.0, ..o.replicate_cfg(2, r) };
            let (ds, _) = prepared(&cfg)?;
            with_sample(&ds, |s| {
                let lim = linear_in_means(s, OUTCOME)?;
                let t = lim.row(PEER_MEAN).is_some_and(|row| row.p < 0.05);
                let inter = interacted_model(s, OUTCOME, InteractionLevel::MeanSd)?;
                let w = inter.joint_test.ok_or_else(|| Error::Numerical("joint test missing".into()))?;
                Ok((t, w.p < 0.05))
            })
        })
        .collect::<Result<_>>()?;
    let t = share(&rejections.iter().map(|r| r.0).collect::<Vec<_>>());
    let w = share(&rejections.iter().map(|r| r.1).collect::<Vec<_>>());
    let ok = |x: f64| (0.03..=0.08).contains(&x);
    Ok((ok(t) && ok(w), format!("t-test rejects {t:.3}, joint Wald rejects {w:.3} over {} reps (in [0.03, 0.08])", rejections.len())))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Least squares on an explicit design via SVD; the reference for the absorbed solver.
fn dense_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    x.clone().svd(true, true).solve(y, 1e-10).ok()
}

fn hdfe_oracle(o: &AcceptOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for inst in 0..o.oracle_instances {
        let mut rng = o.rng(3, inst as u64);
        let n = rng.random_range(80..=500);
        let (la, lb) = (rng.random_range(3..=15), rng.random_range(3..=12));
        let a: Vec<u32> = (0..n).map(|i| if i < la { i as u32 } else { rng.random_range(0..la as u32) }).collect();
        let b: Vec<u32> = (0..n).map(|i| if i < lb { i as u32 } else { rng.random_range(0..lb as u32) }).collect();
        let k = rng.random_range(1..=3);
        let x: Vec<Vec<f64>> =
            (0..k).map(|_| (0..n).map(|i| normal(&mut rng) + 0.3 * a[i] as f64 - 0.2 * b[i] as f64).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                x.iter().enumerate().map(|(j, c)| (j as f64 + 1.0) * c[i]).sum::<f64>()
                    + a[i] as f64
                    + (b[i] as f64).sqrt()
                    + normal(&mut rng)
            })
            .collect();
        let fa = Factor::from_keys("a", &a);
        let fb = Factor::from_keys("b", &b);
        let cluster = Factor::from_keys("obs", &(0..n).collect::<Vec<_>>());
        let mut spec = FESpec::new(vec![fa, fb], cluster);
        spec.tol = 1e-12;
        spec.drop_singletons = false;
        let regs: Vec<Regressor> = x.iter().enumerate().map(|(j, c)| Regressor::new(format!("x{j}"), c.clone())).collect();
        let res = ols_absorbed(&y, &regs, &spec)?;
        // dummies: intercept, a levels 1.., b levels 1..
        let cols = k + 1 + (la - 1) + (lb - 1);
        let xd = DMatrix::from_fn(n, cols, |i, j| {
            if j < k {
                x[j][i]
            } else if j == k {
                1.0
            } else if j < k + la {
                f64::from(a[i] as usize == j - k)
            } else {
                f64::from(b[i] as usize == j - k - la + 1)
            }
        });
        let beta = dense_ols(&xd, &DVector::from_vec(y.clone()))
            .ok_or_else(|| Error::Singular("dummy-variable design".into()))?;
        for j in 0..k {
            let rel = (res.coef[j] - beta[j]).abs() / beta[j].abs().max(1e-300);
            worst = worst.max(rel);
        }
    }
    Ok((worst <= 1e-6, format!("max relative coefficient error {worst:.2e} over {} instances (<= 1e-6)", o.oracle_instances)))
}

/// CR1 written out observation by observation with an explicit inverse.
fn literal_cr1(x: &[Vec<f64>], e: &[f64], cl: &[usize], k_dof: usize) -> Vec<Vec<f64>> {
    let n = e.len();
    let k = x[0].len();
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    for row in x {
        for a in 0..k {
            for b in 0..k {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    let inv = xtx.try_inverse().expect("invertible test design");
    let g = cl.iter().max().map_or(0, |m| m + 1);
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for c in 0..g {
        let mut s = vec![0.0; k];
        for i in (0..n).filter(|&i| cl[i] == c) {
            for a in 0..k {
                s[a] += x[i][a] * e[i];
            }
        }
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += s[a] * s[b];
            }
        }
    }
    let gf = g as f64;
    let factor = gf / (gf - 1.0) * (n as f64 - 1.0) / (n as f64 - k_dof as f64);
    let v = &inv * meat * &inv * factor;
    (0..k).map(|a| (0..k).map(|b| v[(a, b)]).collect()).collect()
}

fn vcov_oracle(o: &AcceptOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for inst in 0..o.oracle_instances {
        let mut rng = o.rng(4, inst as u64);
        let n = 30;
        let g = rng.random_range(3..=8);
        let k = rng.random_range(1..=4);
        let cl: Vec<usize> = (0..n).map(|i| if i < g { i } else { rng.random_range(0..g) }).collect();
        let x: Vec<Vec<f64>> =
            (0..n).map(|_| std::iter::once(1.0).chain((1..k).map(|_| normal(&mut rng))).collect()).collect();
        let e: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let xm = DMatrix::from_fn(n, k, |i, j| x[i][j]);
        let got = cluster_vcov(&xm, &e, &Factor::from_keys("c", &cl), k)?;
        let want = literal_cr1(&x, &e, &cl, k);
        for a in 0..k {
            for b in 0..k {
                worst = worst.max((got[(a, b)] - want[a][b]).abs());
            }
        }
    }
    Ok((worst <= 1e-10, format!("max absolute difference {worst:.2e} over {} instances (<= 1e-10)", o.oracle_instances)))
}

fn logit_checks(o: &AcceptOptions) -> Result<(bool, String)> {
    let mut rng = o.rng(5, 0);
    let n = 400;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| normal(&mut rng)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| f64::from(rng.random::<f64>() < crate::logit::sigmoid(0.3 + r[0] - 0.5 * r[1]))).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(1..=3) as f64).collect();
    let beta: Vec<f64> = (0..4).map(|_| 0.5 * normal(&mut rng)).collect();
    let g = score_vector(&beta, &rows, &y, &w);
    let mut fd_err: f64 = 0.0;
    for j in 0..4 {
        let h = 1e-5;
        let mut up = beta.clone();
        let mut dn = beta.clone();
        up[j] += h;
        dn[j] -= h;
        let fd = (log_likelihood(&up, &rows, &y, &w) - log_likelihood(&dn, &rows, &y, &w)) / (2.0 * h);
        fd_err = fd_err.max((fd - g[j]).abs() / g[j].abs().max(1.0));
    }

    let closed = |ones: usize, total: usize| -> Result<f64> {
        let r: Vec<Vec<f64>> = vec![Vec::new(); total];
        let yy: Vec<f64> = (0..total).map(|i| f64::from(i < ones)).collect();
        Ok(fit_logit(&[], &r, &yy, &vec![1.0; total])?.beta[0])
    };
    let half = closed(50, 100)?;
    let three = closed(75, 100)?;
    let closed_err = half.abs().max((three - 3f64.ln()).abs());

    let sep_rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
    let sep_y: Vec<f64> = (0..40).map(|i| f64::from(i >= 20)).collect();
    let separated =
        matches!(fit_logit(&["x".into()], &sep_rows, &sep_y, &[1.0; 40]), Err(Error::Separation { .. }));

    Ok((
        fd_err < 1e-6 && closed_err <= 1e-10 && separated,
        format!(
            "score vs finite differences {fd_err:.2e} (< 1e-6), closed forms {closed_err:.2e} (<= 1e-10), separation {}",
            if separated { "detected" } else { "missed" }
        ),
    ))
}

/// Every pool member ranked by (distance, id); the first k.
fn exhaustive_matches(p: f64, pool: &[Candidate], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        (pool[a].score - p).abs().total_cmp(&(pool[b].score - p).abs()).then(pool[a].id.cmp(&pool[b].id))
    });
    order.truncate(k);
    order
}

fn matching_oracle(o: &AcceptOptions) -> Result<(bool, String)> {
    let mut bad = 0;
    for inst in 0..o.matching_instances {
        let mut rng = o.rng(6, inst as u64);
        let k = rng.random_range(1..=4);
        let n_pool = rng.random_range(k..=40);
        // a coarse grid forces exact ties
        let grid = |rng: &mut ChaCha8Rng| f64::from(rng.random_range(0..=32u32)) / 32.0;
        let mut ids: Vec<u64> = (0..n_pool as u64).map(|i| i * 7 + 3).collect();
        ids.reverse();
        let pool: Vec<Candidate> = ids.iter().map(|&id| Candidate { id, score: grid(&mut rng) }).collect();
        let parts: Vec<f64> = (0..rng.random_range(1..=20)).map(|_| grid(&mut rng)).collect();
        let got = match_nearest_neighbors(&parts, &pool, k)?;
        let same = parts.iter().enumerate().all(|(i, &p)| {
            let want: Vec<u64> = exhaustive_matches(p, &pool, k).iter().map(|&j| pool[j].id).collect();
            let have: Vec<u64> = got.matches[i].iter().map(|&j| pool[j].id).collect();
            want == have
        });
        bad += usize::from(!same);
    }
    Ok((bad == 0, format!("{bad} of {} instances differ from exhaustive search", o.matching_instances)))
}

fn resampling(o: &AcceptOptions) -> Result<(bool, String)> {
    let run = |stream: u64, sorting: f64| -> Result<Vec<f64>> {
        (0..o.resampling_runs)
            .into_par_iter()
            .map(|r| {
                let cfg = DgpConfig { sorting_strength: sorting, ..o.replicate_cfg(stream, r) };
                let (ds, _) = prepared(&cfg)?;
                let sim_seed = o.rng(stream + 100, r as u64).next_u64();
                with_sample(&ds, |s| Ok(resampling_test(s, o.resampling_sims, sim_seed, 3.0)?.z_net))
            })
            .collect()
    };
    let random = run(7, 0.0)?;
    let sorted = run(8, DgpConfig::engineered_sorting().sorting_strength)?;
    let calm = share(&random.iter().map(|z| z.abs() < 3.0).collect::<Vec<_>>());
    let flagged = share(&sorted.iter().map(|&z| z > 3.0).collect::<Vec<_>>());
    Ok((
        calm >= 0.95 && flagged >= 0.95,
        format!(
            "random: |z| < 3 in {calm:.2}, engineered sorting: z > 3 in {flagged:.2} ({} runs each, >= 0.95)",
            o.resampling_runs
        ),
    ))
}

fn guryan(o: &AcceptOptions) -> Result<(bool, String)> {
    let out: Vec<(bool, f64, f64)> = (0..o.guryan_runs)
        .into_par_iter()
        .map(|r| {
            let (ds, _) = prepared(&o.replicate_cfg(9, r))?;
            with_sample(&ds, |s| {
                let g = guryan_test(s, GuryanOptions::default())?;
                Ok((g.p >= 0.05, g.coef_peer_mean, g.coef_without_control))
            })
        })
        .collect::<Result<_>>()?;
    let insignificant = share(&out.iter().map(|x| x.0).collect::<Vec<_>>());
    let with = mean(&out.iter().map(|x| x.1).collect::<Vec<_>>());
    let without = mean(&out.iter().map(|x| x.2).collect::<Vec<_>>());
    Ok((
        insignificant >= 0.90 && without < 0.0 && without < with,
        format!("insignificant in {insignificant:.2} (>= 0.90), mean coefficient {with:.4} with pool control, {without:.4} without"),
    ))
}

fn calibration(o: &AcceptOptions) -> Result<(bool, String)> {
    let cfg = DgpConfig { seed: o.seed, ..o.dgp.clone() };
    let lockin = cfg.lockin_months[ProgramType::Short.index()] as usize;
    let (ds, _) = prepared(&cfg)?;
    with_sample(&ds, |s| {
        let vd = variance_decomposition(s)?;
        let pm = vd.iter().find(|r| r.variable == PEER_MEAN).ok_or_else(|| Error::Numerical("peer mean row".into()))?;
        let dyn_ = monthly_dynamics(s)?;
        let during: Vec<_> = dyn_.entries.iter().filter(|e| e.month <= lockin).collect();
        let quiet = during
            .iter()
            .all(|e| e.degenerate || !e.significant_5pct || e.effect_pp.is_some_and(|x| x.abs() < 0.5));
        let after: Vec<f64> = dyn_.entries.iter().filter(|e| e.month > lockin).filter_map(|e| e.effect_pp).collect();
        let post = mean(&after);
        let ok = (0.07..=0.09).contains(&pm.raw_sd)
            && (0.04..=0.06).contains(&pm.net_sd)
            && quiet
            && (0.3..=3.0).contains(&post);
        Ok((
            ok,
            format!(
                "peer mean SD raw {:.4} [0.07, 0.09], net {:.4} [0.04, 0.06], lock-in months quiet: {quiet}, mean post-lock-in effect {post:.2}pp [0.3, 3]",
                pm.raw_sd, pm.net_sd
            ),
        ))
    })
}

fn files_in(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        out.push((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), bytes));
    }
    out.sort();
    Ok(out)
}

fn determinism(o: &AcceptOptions) -> Result<(bool, String)> {
    let base = RunConfig {
        seed: o.seed,
        dgp: Some(o.dgp.clone().scaled_down()),
        validity: crate::config::ValidityConfig { n_sims: 50, ..Default::default() },
        ..RunConfig::default()
    };
    let mut runs = Vec::new();
    for (name, jobs) in [("a", 1), ("b", 1), ("c", 8)] {
        let dir = o.work_dir.join(format!("determinism_{name}"));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut cfg = base.clone();
        cfg.paths.out_dir = dir.clone();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
        pool.install(|| crate::pipeline::run_all(&cfg))?;
        runs.push(files_in(&dir)?);
    }
    let n_files = runs[0].len();
    let same_runs = runs[0] == runs[1];
    let same_jobs = runs[0] == runs[2];
    Ok((
        same_runs && same_jobs && n_files > 0,
        format!("{n_files} files; repeat run identical: {same_runs}, 1 vs 8 workers identical: {same_jobs}"),
    ))
}

type Check = fn(&AcceptOptions) -> Result<(bool, String)>;

pub const CRITERIA: [(u8, &str, Check); 10] = [
    (1, "theta recovery", recovery),
    (2, "null size", null_size),
    (3, "hdfe oracle", hdfe_oracle),
    (4, "cluster vcov oracle", vcov_oracle),
    (5, "logit", logit_checks),
    (6, "matching oracle", matching_oracle),
    (7, "resampling diagnostic", resampling),
    (8, "exclusion bias test", guryan),
    (9, "calibration shape", calibration),
    (10, "determinism", determinism),
];

/// Runs the selected criteria. A criterion whose computation errors counts as failed.
pub fn run(o: &AcceptOptions) -> Vec<Criterion> {
    CRITERIA
        .iter()
        .filter(|(id, _, _)| o.only.is_empty() || o.only.contains(id))
        .map(|(id, name, check)| {
            let start = Instant::now();
            let (passed, detail) = check(o).unwrap_or_else(|e| (false, format!("error: {e}")));
            Criterion { id: *id, name: name.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() }
        })
        .collect()
}
