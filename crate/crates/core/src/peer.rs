//! Leave-one-out peer statistics over course rosters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ProgramType};

/// Divisor of the leave-one-out mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooDivisor {
    /// `1 / (n_g - 1)`: the average over the peers.
    #[default]
    Peers,
    /// `1 / n_g`: the sum over peers divided by the full group size.
    GroupSize,
}

pub fn loo_mean(values: &[f64], i: usize) -> Result<f64> {
    loo_mean_with(values, i, LooDivisor::Peers)
}

pub fn loo_mean_with(values: &[f64], i: usize, divisor: LooDivisor) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData("leave-one-out mean needs at least one peer".into()));
    }
    if i >= n {
        return Err(Error::Usage(format!("index {i} out of range for group of {n}")));
    }
    let peer_sum: f64 = values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
    Ok(match divisor {
        LooDivisor::Peers => peer_sum / (n - 1) as f64,
        LooDivisor::GroupSize => peer_sum / n as f64,
    })
}

/// Sample standard deviation (divisor `peers - 1`) of everyone but `i`.
pub fn loo_sd(values: &[f64], i: usize) -> Result<f64> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InsufficientData("leave-one-out SD needs at least two peers".into()));
    }
    if i >= n {
        return Err(Error::Usage(format!("index {i} out of range for group of {n}")));
    }
    let m = loo_mean(values, i)?;
    let ss: f64 = values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, v)| (v - m) * (v - m))
        .sum();
    Ok((ss / (n - 2) as f64).sqrt())
}

/// Cut points splitting the employability distribution into equal-mass bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuintileThresholds {
    pub cuts: Vec<f64>,
    pub reference: String,
}

impl QuintileThresholds {
    pub fn new(cuts: Vec<f64>, reference: impl Into<String>) -> Result<Self> {
        if cuts.is_empty() {
            return Err(Error::Usage("thresholds need at least one cut".into()));
        }
        if cuts.windows(2).any(|w| !(w[0] < w[1])) || cuts.iter().any(|c| !c.is_finite()) {
            return Err(Error::Usage(format!("thresholds must be strictly increasing: {cuts:?}")));
        }
        Ok(QuintileThresholds { cuts, reference: reference.into() })
    }

    /// Empirical quantile cuts (linear interpolation between order statistics)
    /// at `k/bins` for `k = 1..bins`.
    pub fn from_distribution(values: &[f64], bins: usize, reference: impl Into<String>) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Usage("need at least two bins".into()));
        }
        let mut sorted: Vec<f64> = values.to_vec();
        if sorted.is_empty() {
            return Err(Error::InsufficientData("empty reference distribution".into()));
        }
        sorted.sort_by(f64::total_cmp);
        let cuts = (1..bins).map(|k| quantile_sorted(&sorted, k as f64 / bins as f64)).collect();
        Self::new(cuts, reference)
    }

    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Zero-based bin; a value equal to a cut falls in the lower of the two bins.
    pub fn bin_of(&self, x: f64) -> usize {
        self.cuts.iter().filter(|&&c| c < x).count()
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Share of `i`'s peers in each bin of `thresholds`.
pub fn bin_fractions(values: &[f64], i: usize, thresholds: &QuintileThresholds) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData("fractions need at least one peer".into()));
    }
    let mut counts = vec![0usize; thresholds.n_bins()];
    for (j, &v) in values.iter().enumerate() {
        if j != i {
            counts[thresholds.bin_of(v)] += 1;
        }
    }
    let peers = (n - 1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / peers).collect())
}

/// Leave-one-out mean of an arbitrary peer characteristic.
pub fn loo_mean_characteristic(values: &[f64], i: usize) -> Result<f64> {
    loo_mean(values, i)
}

/// Peer characteristics beyond employability, by covariate name.
pub const OTHER_CHARACTERISTICS: [&str; 3] = ["months_employed_2y", "months_employed_10y", "earnings_2y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerStats {
    pub loo_mean: f64,
    /// `None` when the course has fewer than two peers for `i`.
    pub loo_sd: Option<f64>,
    pub peer_count: usize,
    pub frac_quintile: Vec<f64>,
    pub frac_third: Vec<f64>,
    pub loo_mean_ued: Option<f64>,
    /// Aligned with [`OTHER_CHARACTERISTICS`]; `None` when the covariate is absent.
    pub loo_mean_other: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    /// One set of cuts over all participants.
    #[default]
    Pooled,
    /// Separate cuts per program type.
    PerType,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PeerOptions {
    pub divisor: LooDivisor,
    pub threshold_scope: ThresholdScope,
}

/// Peer statistics for every participant, aligned with `Dataset::persons()`.
#[derive(Debug, Clone)]
pub struct PeerTable {
    pub stats: Vec<Option<PeerStats>>,
    pub quintiles: Vec<(Option<ProgramType>, QuintileThresholds)>,
    pub thirds: Vec<(Option<ProgramType>, QuintileThresholds)>,
}

impl PeerTable {
    pub fn get(&self, person_idx: usize) -> Option<&PeerStats> {
        self.stats.get(person_idx).and_then(|s| s.as_ref())
    }
}

fn thresholds_for(
    ds: &Dataset,
    scope: ThresholdScope,
    bins: usize,
) -> Result<Vec<(Option<ProgramType>, QuintileThresholds)>> {
    let score_of = |idx: usize| ds.persons()[idx].employability;
    match scope {
        ThresholdScope::Pooled => {
            let v: Vec<f64> = ds.participants().filter_map(|(i, _)| score_of(i)).collect();
            Ok(vec![(None, QuintileThresholds::from_distribution(&v, bins, "pooled participants")?)])
        }
        ThresholdScope::PerType => {
            let mut out = Vec::new();
            for t in ProgramType::ALL {
                let v: Vec<f64> = ds
                    .participants()
                    .filter(|(i, _)| {
                        ds.course_of(*i).map(|c| ds.courses()[c].program_type) == Some(t)
                    })
                    .filter_map(|(i, _)| score_of(i))
                    .collect();
                if !v.is_empty() {
                    out.push((Some(t), QuintileThresholds::from_distribution(&v, bins, format!("{t} participants"))?));
                }
            }
            Ok(out)
        }
    }
}

fn pick<'a>(
    table: &'a [(Option<ProgramType>, QuintileThresholds)],
    t: ProgramType,
) -> Option<&'a QuintileThresholds> {
    table.iter().find(|(k, _)| k.is_none() || *k == Some(t)).map(|(_, q)| q)
}

/// Computes all peer statistics. Every participant must carry an employability score.
pub fn compute_peer_table(ds: &Dataset, opts: PeerOptions) -> Result<PeerTable> {
    for (_, p) in ds.participants() {
        if p.employability.is_none() {
            return Err(Error::InsufficientData(format!(
                "participant {} has no employability score",
                p.person_id
            )));
        }
    }
    let quintiles = thresholds_for(ds, opts.threshold_scope, 5)?;
    let thirds = thresholds_for(ds, opts.threshold_scope, 3)?;
    let other_cols: Vec<Option<usize>> = OTHER_CHARACTERISTICS.iter().map(|n| ds.covariate_index(n)).collect();

    let mut stats: Vec<Option<PeerStats>> = vec![None; ds.persons().len()];
    for (cidx, course) in ds.courses().iter().enumerate() {
        let members = ds.members(cidx);
        if members.len() < 2 {
            continue;
        }
        let persons = ds.persons();
        let scores: Vec<f64> = members.iter().map(|&m| persons[m].employability.unwrap()).collect();
        let ued: Option<Vec<f64>> = members.iter().map(|&m| persons[m].ue_duration_at_start).collect();
        let others: Vec<Option<Vec<f64>>> = other_cols
            .iter()
            .map(|col| col.map(|c| members.iter().map(|&m| persons[m].covariates[c]).collect()))
            .collect();
        let q = pick(&quintiles, course.program_type).expect("quintile cuts exist for every type with scores");
        let t = pick(&thirds, course.program_type).expect("third cuts exist for every type with scores");

        for (pos, &m) in members.iter().enumerate() {
            stats[m] = Some(PeerStats {
                loo_mean: loo_mean_with(&scores, pos, opts.divisor)?,
                loo_sd: if scores.len() >= 3 { Some(loo_sd(&scores, pos)?) } else { None },
                peer_count: scores.len() - 1,
                frac_quintile: bin_fractions(&scores, pos, q)?,
                frac_third: bin_fractions(&scores, pos, t)?,
                loo_mean_ued: match &ued {
                    Some(v) => Some(loo_mean(v, pos)?),
                    None => None,
                },
                loo_mean_other: others
                    .iter()
                    .map(|o| o.as_ref().map(|v| loo_mean(v, pos)).transpose())
                    .collect::<Result<_>>()?,
            });
        }
    }
    Ok(PeerTable { stats, quintiles, thirds })
}

/// Rows for `peer_stats.csv`.
pub fn peer_table_rows(ds: &Dataset, table: &PeerTable) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "person_id",
        "course_id",
        "employability",
        "loo_mean",
        "loo_sd",
        "peer_count",
        "frac_q1",
        "frac_q2",
        "frac_q3",
        "frac_q4",
        "frac_q5",
        "frac_t1",
        "frac_t2",
        "frac_t3",
        "loo_mean_ued",
        "loo_mean_months_employed_2y",
        "loo_mean_months_employed_10y",
        "loo_mean_earnings_2y",
    ];
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut rows = Vec::new();
    for (idx, p) in ds.persons().iter().enumerate() {
        let Some(s) = table.get(idx) else { continue };
        let mut r = vec![
            p.person_id.to_string(),
            p.course_id.map(|c| c.to_string()).unwrap_or_default(),
            opt(p.employability),
            s.loo_mean.to_string(),
            opt(s.loo_sd),
            s.peer_count.to_string(),
        ];
        r.extend(s.frac_quintile.iter().map(|v| v.to_string()));
        r.extend(s.frac_third.iter().map(|v| v.to_string()));
        r.push(opt(s.loo_mean_ued));
        r.extend(s.loo_mean_other.iter().map(|v| opt(*v)));
        rows.push(r);
    }
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loo_mean_examples() {
        assert!((loo_mean(&[0.5, 0.7, 0.9], 0).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(loo_mean(&[0.3; 6], 4).unwrap(), 0.3);
        assert!(loo_mean(&[0.3], 0).is_err());
        assert_eq!(loo_mean_characteristic(&[2.0, 4.0, 6.0], 0).unwrap(), 5.0);
        assert_eq!(loo_mean_characteristic(&[7.0; 4], 2).unwrap(), 7.0);
    }

    #[test]
    fn group_size_divisor_is_available() {
        let v = [0.5, 0.7, 0.9];
        assert!((loo_mean_with(&v, 0, LooDivisor::GroupSize).unwrap() - 1.6 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn loo_sd_examples() {
        assert_eq!(loo_sd(&[0.1, 0.6, 0.6, 0.6], 0).unwrap(), 0.0);
        let sd = loo_sd(&[0.9, 0.4, 0.8], 0).unwrap();
        assert!((sd - 0.282_842_712_474_619).abs() < 1e-12);
        assert!(loo_sd(&[0.4, 0.8], 0).is_err());
    }

    #[test]
    fn quintile_fraction_examples() {
        let q = QuintileThresholds::new(vec![0.2, 0.4, 0.6, 0.8], "test").unwrap();
        assert_eq!(bin_fractions(&[0.1, 0.85, 0.9, 0.95], 0, &q).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        // ten peers, two per bin; a value on a cut belongs to the lower bin
        let peers = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
        let mut v = vec![0.5];
        v.extend_from_slice(&peers);
        let f = bin_fractions(&v, 0, &q).unwrap();
        assert!(f.iter().all(|x| (x - 0.2).abs() < 1e-15), "{f:?}");
        assert!(QuintileThresholds::new(vec![0.4, 0.2, 0.6, 0.8], "bad").is_err());
    }

    fn two_pass_sd(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }

    proptest! {
        #[test]
        fn loo_mean_identity(v in prop::collection::vec(0.01f64..0.99, 2..30), pick in 0usize..30) {
            let i = pick % v.len();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let loo = loo_mean(&v, i).unwrap();
            prop_assert!((n * mean - (v[i] + (n - 1.0) * loo)).abs() < 1e-12);
        }

        #[test]
        fn loo_sd_matches_two_pass(v in prop::collection::vec(0.01f64..0.99, 3..30), pick in 0usize..30) {
            let i = pick % v.len();
            let peers: Vec<f64> = v.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| *x).collect();
            prop_assert!((loo_sd(&v, i).unwrap() - two_pass_sd(&peers)).abs() < 1e-12);
        }

        #[test]
        fn statistics_ignore_peer_order(mut v in prop::collection::vec(0.01f64..0.99, 4..20), seed in any::<u64>()) {
            let q = QuintileThresholds::new(vec![0.2, 0.4, 0.6, 0.8], "t").unwrap();
            let target = v[0];
            let before = (loo_mean(&v, 0).unwrap(), loo_sd(&v, 0).unwrap(), bin_fractions(&v, 0, &q).unwrap());
            // rotate peers deterministically
            let m = v.len() - 1;
            let k = 1 + (seed as usize) % m;
            v[1..].rotate_left(k % m);
            prop_assert_eq!(v[0], target);
            let after = (loo_mean(&v, 0).unwrap(), loo_sd(&v, 0).unwrap(), bin_fractions(&v, 0, &q).unwrap());
            prop_assert!((before.0 - after.0).abs() < 1e-12);
            prop_assert!((before.1 - after.1).abs() < 1e-12);
            prop_assert_eq!(before.2, after.2);
        }

        #[test]
        fn raising_a_peer_raises_everyone_elses_mean(v in prop::collection::vec(0.01f64..0.9, 3..20), bump in 0.001f64..0.09) {
            let mut up = v.clone();
            up[0] += bump;
            prop_assert_eq!(loo_mean(&up, 0).unwrap(), loo_mean(&v, 0).unwrap());
            for i in 1..v.len() {
                prop_assert!(loo_mean(&up, i).unwrap() > loo_mean(&v, i).unwrap());
            }
        }

        #[test]
        fn mean_preserving_spread_raises_sd(v in prop::collection::vec(0.2f64..0.8, 4..20), spread in 0.01f64..0.1) {
            // widen the two extreme peers symmetrically; member 0 is untouched
            let mut w = v.clone();
            let peers = 1..v.len();
            let lo = peers.clone().min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
            let hi = peers.max_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b))).unwrap();
            prop_assume!(lo != hi);
            w[lo] -= spread;
            w[hi] += spread;
            prop_assert!((loo_mean(&w, 0).unwrap() - loo_mean(&v, 0).unwrap()).abs() < 1e-12);
            prop_assert!(loo_sd(&w, 0).unwrap() > loo_sd(&v, 0).unwrap());
        }

        #[test]
        fn fractions_partition(v in prop::collection::vec(0.0f64..1.0, 2..30)) {
            let q = QuintileThresholds::new(vec![0.2, 0.4, 0.6, 0.8], "t").unwrap();
            let f = bin_fractions(&v, 0, &q).unwrap();
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
