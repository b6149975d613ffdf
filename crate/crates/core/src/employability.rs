//! Employability scoring: propensity matching of the nonparticipant pool to
//! participants, balance checks, and a frequency-weighted logit of the
//! one-year job-finding outcome on the matched pool, predicted out of sample.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logit::{fit_logit, ScoreModel};
use crate::model::{Dataset, ProgramType};

/// Matching metric. Distances are absolute differences on the chosen scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingScale {
    #[default]
    Pscore,
    Logit,
}

impl MatchingScale {
    fn transform(self, p: f64) -> f64 {
        match self {
            MatchingScale::Pscore => p,
            MatchingScale::Logit => (p / (1.0 - p)).ln(),
        }
    }
}

/// A pool member as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Per participant: pool positions of the `k` matches, nearest first.
    pub matches: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
    /// Per pool member: number of times chosen.
    pub frequency_weight: Vec<f64>,
}

fn by_distance_then_id(a: (f64, u64), b: (f64, u64)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// `k` nearest pool members per participant, with replacement; equal distances
/// go to the lower person id.
pub fn match_nearest_neighbors(participants: &[f64], pool: &[Candidate], k: usize) -> Result<MatchResult> {
    if pool.is_empty() {
        return Err(Error::EmptySample("matching pool is empty".into()));
    }
    if k == 0 || k > pool.len() {
        return Err(Error::Usage(format!("cannot draw {k} neighbours from a pool of {}", pool.len())));
    }
    if participants.iter().chain(pool.iter().map(|c| &c.score)).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite propensity score".into()));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| by_distance_then_id((pool[a].score, pool[a].id), (pool[b].score, pool[b].id)));
    let sorted: Vec<f64> = order.iter().map(|&i| pool[i].score).collect();

    let per: Vec<(Vec<usize>, Vec<f64>)> = participants
        .par_iter()
        .map(|&p| nearest(p, &sorted, &order, pool, k))
        .collect();

    let mut frequency_weight = vec![0.0; pool.len()];
    let mut matches = Vec::with_capacity(per.len());
    let mut distances = Vec::with_capacity(per.len());
    for (m, d) in per {
        for &j in &m {
            frequency_weight[j] += 1.0;
        }
        matches.push(m);
        distances.push(d);
    }
    Ok(MatchResult { matches, distances, frequency_weight })
}

fn nearest(p: f64, sorted: &[f64], order: &[usize], pool: &[Candidate], k: usize) -> (Vec<usize>, Vec<f64>) {
    // left walks down from the last score < p, right walks up from the first score >= p
    let split = sorted.partition_point(|&s| s < p);
    let mut left = split;
    let mut right = split;
    let n = sorted.len();
    let mut chosen = Vec::with_capacity(k);
    let mut dists = Vec::with_capacity(k);
    while chosen.len() < k {
        let dl = if left > 0 { p - sorted[left - 1] } else { f64::INFINITY };
        let dr = if right < n { sorted[right] - p } else { f64::INFINITY };
        let d = dl.min(dr);
        // gather every candidate at exactly this distance, then order by id
        let mut tied: Vec<usize> = Vec::new();
        while left > 0 && p - sorted[left - 1] == d {
            left -= 1;
            tied.push(order[left]);
        }
        while right < n && sorted[right] - p == d {
            tied.push(order[right]);
            right += 1;
        }
        tied.sort_by_key(|&j| pool[j].id);
        for j in tied.into_iter().take(k - chosen.len()) {
            chosen.push(j);
            dists.push(d);
        }
    }
    (chosen, dists)
}

/// Standardized bias `|m_p - m_c| / sqrt((v_p + v_c)/2) * 100`; `None` when both variances vanish.
pub fn standardized_bias(mean_p: f64, mean_c: f64, var_p: f64, var_c: f64) -> Option<f64> {
    let denom = ((var_p + var_c) / 2.0).sqrt();
    if denom == 0.0 {
        None
    } else {
        Some((mean_p - mean_c).abs() / denom * 100.0)
    }
}

pub const SB_THRESHOLD: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean_p: f64,
    pub mean_np: f64,
    pub diff: f64,
    pub sb: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    pub max_abs_sb: f64,
    pub share_below_25: f64,
}

fn weighted_moments(values: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let sw: f64 = values.clone().map(|(_, w)| w).sum();
    let mean = values.clone().map(|(v, w)| v * w).sum::<f64>() / sw;
    let ss: f64 = values.map(|(v, w)| w * (v - mean) * (v - mean)).sum();
    let var = if sw > 1.0 { ss / (sw - 1.0) } else { 0.0 };
    (mean, var)
}

/// Balance of `participants` against the pool under frequency `weights`.
/// Rows are covariate vectors in `names` order.
pub fn balance_report(
    names: &[String],
    participants: &[&[f64]],
    pool: &[&[f64]],
    weights: &[f64],
) -> Result<BalanceReport> {
    if participants.is_empty() || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::EmptySample("balance report needs participants and a weighted pool".into()));
    }
    let rows: Vec<BalanceRow> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (mp, vp) = weighted_moments(participants.iter().map(|r| (r[j], 1.0)));
            let (mc, vc) = weighted_moments(pool.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(r, &w)| (r[j], w)));
            let sb = standardized_bias(mp, mc, vp, vc);
            BalanceRow {
                covariate: name.clone(),
                mean_p: mp,
                mean_np: mc,
                diff: mp - mc,
                sb,
                flagged: sb.is_some_and(|s| s >= SB_THRESHOLD),
            }
        })
        .collect();
    let defined: Vec<f64> = rows.iter().filter_map(|r| r.sb).collect();
    let max_abs_sb = defined.iter().copied().fold(0.0, f64::max);
    let share_below_25 = if defined.is_empty() {
        1.0
    } else {
        defined.iter().filter(|&&s| s < SB_THRESHOLD).count() as f64 / defined.len() as f64
    };
    Ok(BalanceReport { rows, max_abs_sb, share_below_25 })
}

/// Two-sample Kolmogorov-Smirnov distance between weighted empirical CDFs.
pub fn ks_statistic(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(a.len() + b.len());
    let ta: f64 = wa.iter().sum();
    let tb: f64 = wb.iter().sum();
    pts.extend(a.iter().zip(wa).map(|(&v, &w)| (v, w / ta, 0.0)));
    pts.extend(b.iter().zip(wb).map(|(&v, &w)| (v, 0.0, w / tb)));
    pts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
    let (mut fa, mut fb, mut best) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut i = 0;
    while i < pts.len() {
        let v = pts[i].0;
        while i < pts.len() && pts[i].0 == v {
            fa += pts[i].1;
            fb += pts[i].2;
            i += 1;
        }
        best = best.max((fa - fb).abs());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub k_neighbors: usize,
    pub matching_scale: MatchingScale,
    /// One employability model for all program types; otherwise one per type.
    pub joint: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { k_neighbors: 3, matching_scale: MatchingScale::Pscore, joint: true }
    }
}

/// Everything one scoring pass produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoringStage {
    pub program_type: Option<ProgramType>,
    pub propensity: ScoreModel,
    pub employability: ScoreModel,
    pub balance: BalanceReport,
    /// KS distance between participant and frequency-weighted matched p-scores.
    pub ks_matched: f64,
    /// Participants whose p-score falls outside the pool's range.
    pub off_support: usize,
    pub n_participants: usize,
    pub n_matched_pool: usize,
}

#[derive(Debug, Clone)]
pub struct ScoringOutput {
    pub dataset: Dataset,
    pub stages: Vec<ScoringStage>,
}

fn covariate_rows(ds: &Dataset, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| ds.persons()[i].covariates.clone()).collect()
}

/// Propensity logit on stacked participants (label 1) and pool (label 0);
/// returns the model and p-scores for participants and pool.
pub fn fit_propensity(
    names: &[String],
    participants: &[Vec<f64>],
    pool: &[Vec<f64>],
) -> Result<(ScoreModel, Vec<f64>, Vec<f64>)> {
    if participants.is_empty() || pool.is_empty() {
        return Err(Error::EmptySample("propensity model needs participants and a pool".into()));
    }
    let mut rows = participants.to_vec();
    rows.extend_from_slice(pool);
    let y: Vec<f64> = (0..rows.len()).map(|i| if i < participants.len() { 1.0 } else { 0.0 }).collect();
    let model = fit_logit(names, &rows, &y, &vec![1.0; rows.len()])?;
    let pp = model.predict(participants)?;
    let pn = model.predict(pool)?;
    Ok((model, pp, pn))
}

/// Frequency-weighted logit of the job-finding outcome; zero-weight rows are ignored.
pub fn fit_employability(names: &[String], pool: &[Vec<f64>], found_job: &[f64], weights: &[f64]) -> Result<ScoreModel> {
    let keep: Vec<usize> = (0..pool.len()).filter(|&i| weights[i] > 0.0).collect();
    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| pool[i].clone()).collect();
    let y: Vec<f64> = keep.iter().map(|&i| found_job[i]).collect();
    let w: Vec<f64> = keep.iter().map(|&i| weights[i]).collect();
    fit_logit(names, &rows, &y, &w)
}

pub fn predict_employability(model: &ScoreModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.predict(rows)
}

fn score_group(
    ds: &Dataset,
    program_type: Option<ProgramType>,
    part_idx: &[usize],
    pool_idx: &[usize],
    opts: &ScoreOptions,
) -> Result<(ScoringStage, Vec<(usize, f64)>)> {
    let names = ds.covariate_names();
    let part_rows = covariate_rows(ds, part_idx);
    let pool_rows = covariate_rows(ds, pool_idx);
    let (propensity, pp, pn) = fit_propensity(names, &part_rows, &pool_rows)?;

    let pool_candidates: Vec<Candidate> = pool_idx
        .iter()
        .zip(&pn)
        .map(|(&i, &s)| Candidate { id: ds.persons()[i].person_id, score: opts.matching_scale.transform(s) })
        .collect();
    let part_scaled: Vec<f64> = pp.iter().map(|&s| opts.matching_scale.transform(s)).collect();
    let matched = match_nearest_neighbors(&part_scaled, &pool_candidates, opts.k_neighbors)?;
    let w = &matched.frequency_weight;

    let (lo, hi) = pn.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let off_support = pp.iter().filter(|&&v| v < lo || v > hi).count();

    let part_refs: Vec<&[f64]> = part_rows.iter().map(|r| r.as_slice()).collect();
    let pool_refs: Vec<&[f64]> = pool_rows.iter().map(|r| r.as_slice()).collect();
    let balance = balance_report(names, &part_refs, &pool_refs, w)?;
    let ks_matched = ks_statistic(&pp, &vec![1.0; pp.len()], &pn, w);

    let found: Vec<f64> = pool_idx
        .iter()
        .map(|&i| ds.persons()[i].outcome_found_job_1y.map(f64::from).unwrap_or(0.0))
        .collect();
    let employability = fit_employability(names, &pool_rows, &found, w)?;
    let scores = predict_employability(&employability, &part_rows)?;

    let stage = ScoringStage {
        program_type,
        propensity,
        employability,
        balance,
        ks_matched,
        off_support,
        n_participants: part_idx.len(),
        n_matched_pool: w.iter().filter(|&&x| x > 0.0).count(),
    };
    Ok((stage, part_idx.iter().copied().zip(scores).collect()))
}

/// Runs the full scoring procedure and attaches employability to participants.
pub fn score_dataset(ds: &Dataset, opts: &ScoreOptions) -> Result<ScoringOutput> {
    let pool_idx: Vec<usize> = ds.nonparticipants().map(|(i, _)| i).collect();
    let groups: Vec<(Option<ProgramType>, Vec<usize>)> = if opts.joint {
        vec![(None, ds.participants().map(|(i, _)| i).collect())]
    } else {
        ProgramType::ALL
            .iter()
            .map(|&t| {
                let idx = ds
                    .participants()
                    .filter(|(i, _)| ds.course_of(*i).map(|c| ds.courses()[c].program_type) == Some(t))
                    .map(|(i, _)| i)
                    .collect::<Vec<_>>();
                (Some(t), idx)
            })
            .filter(|(_, idx)| !idx.is_empty())
            .collect()
    };
    let mut stages = Vec::new();
    let mut scores = Vec::new();
    for (t, idx) in groups {
        let (stage, s) = score_group(ds, t, &idx, &pool_idx, opts)?;
        stages.push(stage);
        scores.extend(s);
    }
    Ok(ScoringOutput { dataset: ds.with_scores(&scores)?, stages })
}

/// Rows for balance.csv.
pub fn balance_rows(report: &BalanceReport) -> Vec<Vec<String>> {
    report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.covariate.clone(),
                r.mean_p.to_string(),
                r.mean_np.to_string(),
                r.diff.to_string(),
                r.sb.map(|s| s.to_string()).unwrap_or_else(|| "NA".into()),
            ]
        })
        .collect()
}

pub const BALANCE_HEADER: [&str; 5] = ["covariate", "mean_p", "mean_np", "diff", "sb"];
