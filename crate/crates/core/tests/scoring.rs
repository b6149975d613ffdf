use std::sync::OnceLock;

use peerfx::employability::{fit_propensity, predict_employability, score_dataset, ScoreOptions, ScoringOutput};
use peerfx::logit::fit_logit;
use peerfx::model::Dataset;
use peerfx::synth::{generate, DgpConfig, GroundTruth};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn default_run() -> &'static (Dataset, GroundTruth, ScoringOutput) {
    static RUN: OnceLock<(Dataset, GroundTruth, ScoringOutput)> = OnceLock::new();
    RUN.get_or_init(|| {
        let (ds, truth) = generate(&DgpConfig::default()).unwrap();
        let out = score_dataset(&ds, &ScoreOptions::default()).unwrap();
        (ds, truth, out)
    })
}

fn scores_and_truth() -> Vec<(f64, f64)> {
    let (_, truth, out) = default_run();
    out.dataset
        .participants()
        .map(|(_, p)| (p.employability.unwrap(), truth.latent_employability[&p.person_id]))
        .collect()
}

#[test]
fn predictions_track_latent_employability() {
    let s = scores_and_truth();
    let mae = s.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / s.len() as f64;
    assert!(mae < 0.05, "mean absolute error {mae}");
}

#[test]
fn participant_scores_cover_the_expected_range() {
    let s = scores_and_truth();
    assert!(s.iter().all(|(x, _)| *x > 0.0 && *x < 1.0));
    let lo = s.iter().map(|x| x.0).fold(1.0, f64::min);
    let hi = s.iter().map(|x| x.0).fold(0.0, f64::max);
    // calibration target roughly (0.08, 0.97)
    assert!(lo < 0.15 && hi > 0.92, "span {lo}..{hi}");
}

#[test]
fn matched_pool_is_balanced_and_overlaps() {
    let (_, _, out) = default_run();
    let st = &out.stages[0];
    assert!(st.ks_matched < 0.1, "KS {}", st.ks_matched);
    assert!(st.balance.max_abs_sb < 25.0);
    assert_eq!(st.balance.share_below_25, 1.0);
    let acc = st.employability.accuracy_at_half;
    assert!((0.6..=0.8).contains(&acc), "accuracy {acc}");
}

#[test]
fn exchangeable_groups_get_flat_propensity_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..4).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()).collect()
    };
    let parts = draw(&mut rng, 3000);
    let pool = draw(&mut rng, 9000);
    let names: Vec<String> = (0..4).map(|j| format!("x{j}")).collect();
    let (_, pp, pn) = fit_propensity(&names, &parts, &pool).unwrap();
    let share = 3000.0 / 12000.0;
    assert!(pp.iter().chain(&pn).all(|p| (p - share).abs() < 0.05));
}

#[test]
fn perfectly_separating_covariate_fails_propensity() {
    let parts: Vec<Vec<f64>> = (0..30).map(|i| vec![1.0, i as f64 * 0.1]).collect();
    let pool: Vec<Vec<f64>> = (0..60).map(|i| vec![0.0, i as f64 * 0.1]).collect();
    let err = fit_propensity(&["d".into(), "z".into()], &parts, &pool).unwrap_err();
    assert!(matches!(err, peerfx::Error::Separation { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prediction_is_monotone_in_positive_coefficients(seed in any::<u64>(), bump in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| rng.sample(rand_distr::StandardNormal)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| f64::from(rng.random::<f64>() < peerfx::logit::sigmoid(r[0] - r[1]))).collect();
        let names: Vec<String> = (0..3).map(|j| format!("x{j}")).collect();
        let model = fit_logit(&names, &rows, &y, &[1.0; 300]).unwrap();
        for j in 0..3 {
            let moved: Vec<Vec<f64>> = rows.iter().map(|r| { let mut r = r.clone(); r[j] += bump; r }).collect();
            let before = predict_employability(&model, &rows).unwrap();
            let after = predict_employability(&model, &moved).unwrap();
            let sign = model.beta[j + 1].signum();
            for (b, a) in before.iter().zip(&after) {
                prop_assert!((a - b) * sign >= 0.0);
            }
        }
    }
}
