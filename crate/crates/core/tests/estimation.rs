use std::sync::OnceLock;

use peerfx::acceptance::prepared;
use peerfx::fe::sd;
use peerfx::model::{Dataset, ProgramType};
use peerfx::peer::{compute_peer_table, PeerOptions, PeerTable};
use peerfx::suite::{
    fractions_model, linear_in_means, run_spec, Bins, EffectReport, Sample, SpecName, PEER_MEAN,
};
use peerfx::synth::{DgpConfig, GroundTruth};
use peerfx::validity::{derived_rng, guryan_test, resampling_test, GuryanOptions, ResamplingLayout};
use rand::RngCore;
use rayon::prelude::*;

const OUTCOME: &str = "emp_days_60";

fn scaled() -> &'static (Dataset, GroundTruth, PeerTable) {
    static DATA: OnceLock<(Dataset, GroundTruth, PeerTable)> = OnceLock::new();
    DATA.get_or_init(|| {
        let (ds, truth) = prepared(&DgpConfig { seed: 42, ..DgpConfig::scaled() }).unwrap();
        let table = compute_peer_table(&ds, PeerOptions::default()).unwrap();
        (ds, truth, table)
    })
}

fn sample() -> Sample<'static> {
    let (ds, _, table) = scaled();
    Sample::build(ds, table, ProgramType::Short).unwrap()
}

fn effect_specs() -> impl Iterator<Item = SpecName> {
    SpecName::ALL.into_iter().filter(|s| *s != SpecName::MonthlyDynamics)
}

#[test]
fn identity_reallocation_reproduces_observed_peer_means() {
    let s = sample();
    let layout = ResamplingLayout::new(&s);
    let loo = layout.loo_means(&s.own);
    for (a, b) in loo.iter().zip(s.peer_mean()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(sd(&loo), sd(&s.peer_mean()));
}

#[test]
fn reallocation_preserves_cell_scores_and_grand_mean() {
    let s = sample();
    let layout = ResamplingLayout::new(&s);
    let observed = s.peer_mean();
    let grand = observed.iter().sum::<f64>() / observed.len() as f64;
    for k in 0..20 {
        let shuffled = layout.shuffle(&s.own, &mut derived_rng(9, k));
        let cell = &s.factors[0].levels;
        for c in 0..s.factors[0].n_levels as u32 {
            let mut a: Vec<f64> = (0..s.len()).filter(|&i| cell[i] == c).map(|i| s.own[i]).collect();
            let mut b: Vec<f64> = (0..s.len()).filter(|&i| cell[i] == c).map(|i| shuffled[i]).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
        let loo = layout.loo_means(&shuffled);
        let g = loo.iter().sum::<f64>() / loo.len() as f64;
        assert!((g - grand).abs() < 1e-12);
    }
}

#[test]
fn resampling_honours_n_sims_and_seed() {
    let s = sample();
    let a = resampling_test(&s, 37, 5, 3.0).unwrap();
    let b = resampling_test(&s, 37, 5, 3.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_sims, 37);
    assert!(a.z_net.is_finite());
    assert!(resampling_test(&s, 1, 5, 3.0).is_err());
}

#[test]
fn constant_shift_in_outcome_changes_no_effect() {
    let (ds, _, table) = scaled();
    // local unemployment enters no specification as a regressor, so it can serve as the outcome
    let outcome = "local_ue_rate";
    let col = ds.covariate_index(outcome).unwrap();
    let (names, mut persons, courses) = ds.clone().into_parts();
    for p in &mut persons {
        p.covariates[col] += 1000.0;
    }
    let shifted = Dataset::new(names, persons, courses).unwrap();
    let s0 = sample();
    let s1 = Sample::build(&shifted, table, ProgramType::Short).unwrap();
    for spec in effect_specs() {
        let a = run_spec(&s0, spec, outcome, false).unwrap();
        let b = run_spec(&s1, spec, outcome, false).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.rows.iter().zip(&rb.rows) {
                assert!((x.effect - y.effect).abs() < 1e-6 * (1.0 + x.effect.abs()), "{spec:?} {}", x.term);
                assert!((x.se - y.se).abs() < 1e-6 * (1.0 + x.se.abs()), "{spec:?} {}", x.term);
            }
        }
    }
}

fn all_reports(s: &Sample) -> Vec<EffectReport> {
    effect_specs().flat_map(|spec| run_spec(s, spec, OUTCOME, false).unwrap()).collect()
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let s = sample();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| all_reports(&s));
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| all_reports(&s));
    assert_eq!(one, four);
}

#[test]
fn fractions_difference_matches_linear_in_means_prediction() {
    let (ds, truth) = prepared(&DgpConfig { seed: 7, ..DgpConfig::default() }).unwrap();
    let table = compute_peer_table(&ds, PeerOptions::default()).unwrap();
    let s = Sample::build(&ds, &table, ProgramType::Short).unwrap();
    let (_, cuts) = &table.quintiles[0];
    let all: Vec<f64> = ds.participants().filter_map(|(_, p)| p.employability).collect();
    let mean_where = |f: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = all.iter().copied().filter(|&x| f(x)).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let gap = mean_where(&|x| x > cuts.cuts[3]) - mean_where(&|x| x <= cuts.cuts[0]);
    let predicted = gap * truth.theta * 0.1;
    let rep = fractions_model(&s, OUTCOME, Bins::Quintiles).unwrap();
    let diff = rep.rows.iter().find(|r| r.term.starts_with("Difference")).unwrap();
    assert!(diff.effect > 0.0);
    assert!((diff.effect - predicted).abs() < 3.0 * diff.se, "{} vs {predicted} (se {})", diff.effect, diff.se);
}

#[test]
fn linear_in_means_reports_peer_effect_per_sd() {
    let s = sample();
    let rep = linear_in_means(&s, OUTCOME).unwrap();
    let row = rep.row(PEER_MEAN).unwrap();
    let rsd = rep.residual_sd[PEER_MEAN];
    assert!((row.effect - row.coef * rsd).abs() < 1e-9);
    assert!((row.se - row.coef_se * rsd).abs() < 1e-9);
}

/// Monte Carlo mean and standard error of the controlled peer-mean coefficient.
fn guryan_mc(reps: u64, latent: bool) -> (f64, f64, f64) {
    let draws: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derived_rng(77, r).next_u64();
            let (ds, truth) = prepared(&DgpConfig { seed, ..DgpConfig::scaled() }).unwrap();
            let ds = if latent {
                let sc: Vec<(usize, f64)> =
                    ds.participants().map(|(i, p)| (i, truth.latent_employability[&p.person_id])).collect();
                ds.with_scores(&sc).unwrap()
            } else {
                ds
            };
            let table = compute_peer_table(&ds, PeerOptions::default()).unwrap();
            let s = Sample::build(&ds, &table, ProgramType::Short).unwrap();
            let g = guryan_test(&s, GuryanOptions::default()).unwrap();
            (g.coef_peer_mean, g.coef_without_control)
        })
        .collect();
    let n = draws.len() as f64;
    let with: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mean = with.iter().sum::<f64>() / n;
    let without = draws.iter().map(|d| d.1).sum::<f64>() / n;
    (mean, sd(&with) / n.sqrt(), without)
}

#[test]
fn exclusion_bias_control_centres_the_test_at_zero() {
    let (mean, se, without) = guryan_mc(100, false);
    assert!(mean.abs() < 2.0 * se, "mean {mean} se {se}");
    assert!(without < mean);
}

#[test]
fn latent_peer_means_are_uncorrelated_with_own_ability_given_the_pool() {
    // Without the pool control the correlation is mechanically negative.
    let (mean, se, without) = guryan_mc(40, true);
    assert!(mean.abs() < 2.0 * se, "mean {mean} se {se}");
    assert!(without < -2.0 * se);
}
