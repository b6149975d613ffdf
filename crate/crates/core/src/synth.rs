//! Synthetic course populations with known peer effects.
//!
//! Providers run one course per month. Each course's seats are filled with
//! participants who drew a voucher one to three months before the start.
//! Employability is logistic in the observed covariates, so the scoring logit
//! is correctly specified. Outcomes follow the linear-in-means equation
//! evaluated at the true leave-one-out peer mean of latent employability.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::logit::sigmoid;
use crate::model::{
    derive_month_group, season_of, CourseControls, CourseRecord, Dataset, Month, MonthGroupKey, Outcomes,
    PersonRecord, ProgramType, Role, SeasonKey, MAX_EMP_DAYS, PANEL_MONTHS,
};
use crate::peer::{loo_mean, loo_sd};

pub const COVARIATES: [&str; 13] = [
    "age",
    "female",
    "non_german",
    "highschool",
    "voc_training",
    "academic",
    "months_employed_2y",
    "months_employed_10y",
    "earnings_2y",
    "local_ue_rate",
    "last_job_tenure_months",
    "prior_ue_spells",
    "months_since_last_job",
];

/// Employability index coefficients, aligned with [`COVARIATES`].
const EMPLOYABILITY_BETA: [f64; 13] = [
    -0.025, -0.15, -0.25, 0.20, 0.30, 0.45, 0.045, 0.006, 0.012, -0.08, 0.006, -0.10, -0.030,
];

const DAYS_PER_MONTH: f64 = 30.4375;
const BASE_HAZARD: f64 = 0.05;
const SEPARATION_RATE: f64 = 0.025;
/// Index points per unit of hazard log-odds.
const HAZARD_SCALE: f64 = 320.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoursePi {
    pub course_size: f64,
    pub planned_duration_months: f64,
    pub weekly_hours: f64,
    pub hours_practice: f64,
    pub hours_class: f64,
}

impl Default for CoursePi {
    fn default() -> Self {
        CoursePi { course_size: -2.0, planned_duration_months: -4.0, weekly_hours: 1.5, hours_practice: 0.01, hours_class: 0.0 }
    }
}

impl CoursePi {
    fn dot(&self, c: &CourseControls) -> f64 {
        self.course_size * c.course_size
            + self.planned_duration_months * c.planned_duration_months
            + self.weekly_hours * c.weekly_hours
            + self.hours_practice * c.hours_practice
            + self.hours_class * c.hours_class
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub seed: u64,
    pub n_providers: usize,
    pub months_span: usize,
    pub first_year: i32,
    pub mean_course_size: f64,
    pub course_size_sd: f64,
    pub course_size_range: [usize; 2],
    pub n_nonparticipants: usize,
    /// Effect of a one-unit change in the leave-one-out peer mean.
    pub theta: f64,
    /// Multiplier on theta for participants below the median employability.
    pub theta_low_multiplier: f64,
    /// Effect of the leave-one-out SD of peer employability.
    pub theta_sd: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub pi: CoursePi,
    /// Effect of one month of own unemployment duration at program start.
    pub kappa_ued: f64,
    /// Effect of the peers' mean months employed in the last two years.
    pub other_peer_loading: f64,
    pub sigma_eps: f64,
    pub sigma_provider: f64,
    pub sigma_season: f64,
    pub sigma_course: f64,
    pub sigma_occupation: f64,
    /// SD of provider-level shifts in the latent ability factor.
    pub provider_ability_sd: f64,
    /// Course-level ability shift loading; zero means random assignment within a provider.
    pub sorting_strength: f64,
    /// Ability shift per occupation code; zero means no occupational sorting.
    pub occupation_sorting: f64,
    /// Ability shift of the nonparticipant pool relative to participants.
    pub pool_ability_shift: f64,
    pub n_occupations: u32,
    pub n_competence_levels: u32,
    pub lockin_months: [f64; 3],
    pub program_type_shares: [f64; 3],
    pub prior_program_rate: f64,
    pub same_firm_course_rate: f64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            seed: 20_240_601,
            n_providers: 70,
            months_span: 36,
            first_year: 2010,
            mean_course_size: 12.0,
            course_size_sd: 4.0,
            course_size_range: [5, 30],
            n_nonparticipants: 50_000,
            theta: 333.8,
            theta_low_multiplier: 1.0,
            theta_sd: 0.0,
            gamma: 750.0,
            alpha: 200.0,
            pi: CoursePi::default(),
            kappa_ued: -5.0,
            other_peer_loading: 0.0,
            sigma_eps: 250.0,
            sigma_provider: 80.0,
            sigma_season: 30.0,
            sigma_course: 40.0,
            sigma_occupation: 30.0,
            provider_ability_sd: 0.45,
            sorting_strength: 0.0,
            occupation_sorting: 0.0,
            pool_ability_shift: 0.2,
            n_occupations: 8,
            n_competence_levels: 3,
            lockin_months: [4.0, 9.0, 28.0],
            program_type_shares: [0.6, 0.2, 0.2],
            prior_program_rate: 0.08,
            same_firm_course_rate: 0.05,
        }
    }
}

impl DgpConfig {
    /// Smaller institution used by Monte Carlo studies: about 14 providers and a
    /// 10,000-person pool, roughly 6,000 participants.
    pub fn scaled() -> Self {
        DgpConfig::default().scaled_down()
    }

    /// Same parameters on the smaller institution.
    pub fn scaled_down(self) -> Self {
        DgpConfig { n_providers: 14, n_nonparticipants: 10_000, ..self }
    }

    /// Strong course-level sorting on ability, for demonstrating that the
    /// resampling diagnostic flags excess between-course variation.
    pub fn engineered_sorting() -> Self {
        DgpConfig { sorting_strength: 0.6, ..DgpConfig::scaled() }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.course_size_range;
        if lo < 5 || hi > 30 || lo > hi {
            return Err(Error::Config(format!("course_size_range [{lo}, {hi}] must lie within [5, 30]")));
        }
        if !(self.sigma_eps > 0.0) {
            return Err(Error::Config("sigma_eps must be positive".into()));
        }
        for (name, v) in [
            ("sigma_provider", self.sigma_provider),
            ("sigma_season", self.sigma_season),
            ("sigma_course", self.sigma_course),
            ("sigma_occupation", self.sigma_occupation),
            ("provider_ability_sd", self.provider_ability_sd),
            ("sorting_strength", self.sorting_strength),
            ("course_size_sd", self.course_size_sd),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        let share_sum: f64 = self.program_type_shares.iter().sum();
        if (share_sum - 1.0).abs() > 1e-9 || self.program_type_shares.iter().any(|&s| s < 0.0) {
            return Err(Error::Config("program_type_shares must be a probability vector".into()));
        }
        if self.n_providers == 0 || self.months_span < 8 {
            return Err(Error::Config("need at least one provider and eight months".into()));
        }
        if self.n_nonparticipants < 100 {
            return Err(Error::Config("n_nonparticipants must be at least 100".into()));
        }
        if self.n_occupations == 0 || self.n_competence_levels == 0 {
            return Err(Error::Config("occupation and competence level counts must be positive".into()));
        }
        if self.lockin_months.iter().any(|&m| !(0.0..PANEL_MONTHS as f64).contains(&m)) {
            return Err(Error::Config("lock-in months must lie in [0, 60)".into()));
        }
        for (name, r) in [("prior_program_rate", self.prior_program_rate), ("same_firm_course_rate", self.same_firm_course_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must be a probability")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseDraw {
    pub course_id: u64,
    pub lambda_pc: f64,
    pub delta_t: f64,
    pub course_shock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub theta: f64,
    pub theta_low_multiplier: f64,
    pub theta_sd: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub pi: CoursePi,
    pub kappa_ued: f64,
    pub other_peer_loading: f64,
    pub employability_beta: Vec<f64>,
    pub course_draws: Vec<CourseDraw>,
    /// Latent employability by person id, for every person.
    pub latent_employability: BTreeMap<u64, f64>,
}

struct Covariates;

impl Covariates {
    fn draw(rng: &mut ChaCha8Rng, u: f64) -> Vec<f64> {
        let z = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(rand_distr::StandardNormal) };
        let bern = |rng: &mut ChaCha8Rng, p: f64| -> f64 { f64::from(rng.random::<f64>() < p) };
        let age = (38.0 - 3.0 * u + 9.0 * z(rng)).clamp(18.0, 62.0).round();
        let female = bern(rng, 0.45);
        let non_german = bern(rng, sigmoid(-1.6 - 0.3 * u));
        let academic = bern(rng, sigmoid(-2.0 + 0.5 * u));
        let highschool = if academic == 1.0 { 1.0 } else { bern(rng, sigmoid(-1.0 + 0.4 * u)) };
        let voc_training = bern(rng, sigmoid(0.8 + 0.4 * u));
        let me2 = (13.0 + 5.0 * u + 5.0 * z(rng)).clamp(0.0, 24.0).round();
        let me10 = (70.0 + 18.0 * u + 20.0 * z(rng)).clamp(0.0, 120.0).round();
        let earn = (24.0 + 7.0 * u + 8.0 * z(rng)).max(0.0);
        let local_ue = (7.5 + 2.0 * z(rng)).clamp(2.0, 16.0);
        let tenure = (30.0 + 10.0 * u + 18.0 * z(rng)).max(0.0).round();
        let spells = (2.0 - 0.6 * u + 1.2 * z(rng)).max(0.0).round();
        let since = (7.0 - 2.0 * u + 4.0 * z(rng)).max(0.0).round();
        vec![
            age, female, non_german, highschool, voc_training, academic, me2, me10, earn, local_ue, tenure, spells, since,
        ]
    }

    /// Index centered so the population mean employability is close to 0.66.
    fn employability(x: &[f64]) -> f64 {
        const CENTER: f64 = 1.10;
        sigmoid(CENTER + x.iter().zip(EMPLOYABILITY_BETA).map(|(a, b)| a * b).sum::<f64>())
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated non-negative sd")
}

/// Evenly spaced normal quantiles, shuffled; keeps the realized spread stable.
fn stratified_normal(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let std = StdNormal::new(0.0, 1.0).expect("standard normal");
    let mut v: Vec<f64> = (0..n).map(|j| sd * std.inverse_cdf((j as f64 + 0.5) / n as f64)).collect();
    v.shuffle(rng);
    v
}

fn provider_types(rng: &mut ChaCha8Rng, n: usize, shares: [f64; 3]) -> Vec<ProgramType> {
    let short = (shares[0] * n as f64).round() as usize;
    let long = ((shares[0] + shares[1]) * n as f64).round() as usize - short.min(n);
    let mut v: Vec<ProgramType> = (0..n)
        .map(|j| {
            if j < short {
                ProgramType::Short
            } else if j < short + long {
                ProgramType::Long
            } else {
                ProgramType::Retraining
            }
        })
        .collect();
    v.shuffle(rng);
    v
}

/// Draws a dataset and the ground truth behind it. Bit-identical for a fixed config.
pub fn generate(cfg: &DgpConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = normal(1.0);
    let first = Month::from_year_month(cfg.first_year, 1);

    let types = provider_types(&mut rng, cfg.n_providers, cfg.program_type_shares);
    let ability = stratified_normal(&mut rng, cfg.n_providers, cfg.provider_ability_sd);
    let occupation_tilt: Vec<f64> = stratified_normal(&mut rng, cfg.n_occupations as usize, 1.0);
    let occupation_effect: Vec<f64> =
        (0..cfg.n_occupations).map(|_| normal(cfg.sigma_occupation).sample(&mut rng)).collect();

    let mut lambda: BTreeMap<MonthGroupKey, f64> = BTreeMap::new();
    let mut delta: BTreeMap<SeasonKey, f64> = BTreeMap::new();
    for m in 0..cfg.months_span as i32 {
        delta.entry(season_of(first.offset(m))).or_insert_with(|| normal(cfg.sigma_season).sample(&mut rng));
    }

    let [lo, hi] = cfg.course_size_range;
    let size_dist = Normal::new(cfg.mean_course_size, cfg.course_size_sd)
        .map_err(|e| Error::Config(format!("course size distribution: {e}")))?;

    struct Draft {
        course: CourseRecord,
        ability_shift: f64,
        shock: f64,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    let mut next_course = 1u64;
    for (p, (&ptype, &shift)) in types.iter().zip(&ability).enumerate() {
        let provider_id = p as u32 + 1;
        let lockin = cfg.lockin_months[ptype.index()];
        for m in 0..cfg.months_span as i32 {
            let start = first.offset(m);
            let size = (size_dist.sample(&mut rng).round() as i64).clamp(lo as i64, hi as i64) as f64;
            let occ = rng.random_range(0..cfg.n_occupations);
            let planned = (lockin + rng.random_range(-1.0..1.0_f64)).round().max(1.0);
            let weekly = rng.random_range(20.0..40.0_f64).round();
            let total = weekly * planned * 4.33;
            let practice_share = rng.random_range(0.2..0.6);
            let course = CourseRecord {
                course_id: next_course,
                provider_id,
                start_month: start,
                program_type: ptype,
                target_occupation: occ,
                competence_level: rng.random_range(0..cfg.n_competence_levels),
                controls: CourseControls {
                    course_size: size,
                    planned_duration_months: planned,
                    weekly_hours: weekly,
                    hours_practice: (total * practice_share).round(),
                    hours_class: (total * (1.0 - practice_share)).round(),
                },
            };
            let key = derive_month_group(&course);
            lambda.entry(key).or_insert_with(|| normal(cfg.sigma_provider).sample(&mut rng));
            let course_ability = cfg.sorting_strength * std_normal.sample(&mut rng);
            drafts.push(Draft {
                ability_shift: shift + course_ability + cfg.occupation_sorting * occupation_tilt[occ as usize],
                shock: normal(cfg.sigma_course).sample(&mut rng),
                course,
            });
            next_course += 1;
        }
    }

    // participants, course by course
    struct Seat {
        person: PersonRecord,
        latent: f64,
        draft: usize,
    }
    let mut seats: Vec<Seat> = Vec::new();
    let mut next_person = 1u64;
    for (d, draft) in drafts.iter().enumerate() {
        let n = draft.course.controls.course_size as usize;
        let same_firm = rng.random::<f64>() < cfg.same_firm_course_rate;
        for s in 0..n {
            let u = draft.ability_shift + std_normal.sample(&mut rng);
            let x = Covariates::draw(&mut rng, u);
            let p = Covariates::employability(&x);
            let voucher_lead = rng.random_range(1..=3) as f64;
            let ued = voucher_lead
                + Poisson::new(1.0 + 10.0 * (1.0 - p)).expect("positive rate").sample(&mut rng);
            let person = PersonRecord {
                person_id: next_person,
                role: Role::Participant,
                entry_ue_month: draft.course.start_month.offset(-(ued as i32)),
                course_id: Some(draft.course.course_id),
                ue_duration_at_start: Some(ued),
                prior_program: rng.random::<f64>() < cfg.prior_program_rate,
                same_firm_peer_flag: same_firm && s < 2,
                outcome_found_job_1y: None,
                outcomes: None,
                covariates: x,
                employability: None,
            };
            seats.push(Seat { person, latent: p, draft: d });
            next_person += 1;
        }
    }

    // outcomes from the linear-in-means index at the true peer means
    let me2 = 6;
    let mut by_course: Vec<Vec<usize>> = vec![Vec::new(); drafts.len()];
    for (i, s) in seats.iter().enumerate() {
        by_course[s.draft].push(i);
    }
    let mut latent_sorted: Vec<f64> = seats.iter().map(|s| s.latent).collect();
    latent_sorted.sort_by(f64::total_cmp);
    let median = latent_sorted[latent_sorted.len() / 2];

    let mut index_no_eps = vec![0.0; seats.len()];
    for (d, members) in by_course.iter().enumerate() {
        let draft = &drafts[d];
        let c = &draft.course;
        let p: Vec<f64> = members.iter().map(|&i| seats[i].latent).collect();
        let e2: Vec<f64> = members.iter().map(|&i| seats[i].person.covariates[me2]).collect();
        let fixed = cfg.alpha
            + cfg.pi.dot(&c.controls)
            + lambda[&derive_month_group(c)]
            + delta[&season_of(c.start_month)]
            + occupation_effect[c.target_occupation as usize]
            + draft.shock;
        for (k, &i) in members.iter().enumerate() {
            let own = p[k];
            let theta = if own < median { cfg.theta * cfg.theta_low_multiplier } else { cfg.theta };
            let mut v = fixed + cfg.gamma * own + theta * loo_mean(&p, k)?;
            if cfg.theta_sd != 0.0 {
                v += cfg.theta_sd * loo_sd(&p, k)?;
            }
            if cfg.other_peer_loading != 0.0 {
                v += cfg.other_peer_loading * loo_mean(&e2, k)?;
            }
            v += cfg.kappa_ued * seats[i].person.ue_duration_at_start.unwrap_or(0.0);
            index_no_eps[i] = v;
        }
    }
    let mean_index = index_no_eps.iter().sum::<f64>() / index_no_eps.len().max(1) as f64;
    let eps = normal(cfg.sigma_eps);
    let wage_noise = normal(0.2);
    for (i, seat) in seats.iter_mut().enumerate() {
        let lockin = cfg.lockin_months[drafts[seat.draft].course.program_type.index()] as usize;
        let index = index_no_eps[i] + eps.sample(&mut rng);
        let hazard = sigmoid((BASE_HAZARD / (1.0 - BASE_HAZARD)).ln() + (index_no_eps[i] - mean_index) / HAZARD_SCALE);
        let mut employed = vec![0u8; PANEL_MONTHS];
        let mut state = false;
        for slot in employed.iter_mut().skip(lockin) {
            let r: f64 = rng.random();
            state = if state { r >= SEPARATION_RATE } else { r < hazard };
            *slot = u8::from(state);
        }
        let log_wage = 7.3 + 0.6 * (seat.latent - 0.66) + wage_noise.sample(&mut rng);
        let months_worked = employed.iter().filter(|&&e| e == 1).count();
        let first_job = employed.iter().position(|&e| e == 1);
        seat.person.outcomes = Some(Outcomes {
            search_duration_days: first_job
                .map(|m| ((m as f64 + 0.5) * DAYS_PER_MONTH).min(MAX_EMP_DAYS))
                .unwrap_or(MAX_EMP_DAYS),
            emp_days_60: index.clamp(0.0, MAX_EMP_DAYS),
            log_total_earn_60: if months_worked > 0 { log_wage + (months_worked as f64).ln() } else { 0.0 },
            log_first_job_earn: if first_job.is_some() { log_wage } else { 0.0 },
            employed,
        });
    }

    // nonparticipant pool
    let mut persons: Vec<PersonRecord> = Vec::with_capacity(seats.len() + cfg.n_nonparticipants);
    let mut latent: BTreeMap<u64, f64> = BTreeMap::new();
    for s in seats {
        latent.insert(s.person.person_id, s.latent);
        persons.push(s.person);
    }
    let last_start = first.offset(cfg.months_span as i32 - 1);
    for _ in 0..cfg.n_nonparticipants {
        let u = cfg.pool_ability_shift + std_normal.sample(&mut rng);
        let x = Covariates::draw(&mut rng, u);
        let p = Covariates::employability(&x);
        let entry = first.offset(rng.random_range(-3..=(last_start.0 - first.0)));
        latent.insert(next_person, p);
        persons.push(PersonRecord {
            person_id: next_person,
            role: Role::Nonparticipant,
            entry_ue_month: entry,
            course_id: None,
            ue_duration_at_start: None,
            prior_program: false,
            same_firm_peer_flag: false,
            outcome_found_job_1y: Some(u8::from(rng.random::<f64>() < p)),
            outcomes: None,
            covariates: x,
            employability: None,
        });
        next_person += 1;
    }

    let course_draws = drafts
        .iter()
        .map(|d| CourseDraw {
            course_id: d.course.course_id,
            lambda_pc: lambda[&derive_month_group(&d.course)],
            delta_t: delta[&season_of(d.course.start_month)],
            course_shock: d.shock,
        })
        .collect();
    let truth = GroundTruth {
        seed: cfg.seed,
        theta: cfg.theta,
        theta_low_multiplier: cfg.theta_low_multiplier,
        theta_sd: cfg.theta_sd,
        gamma: cfg.gamma,
        alpha: cfg.alpha,
        pi: cfg.pi.clone(),
        kappa_ued: cfg.kappa_ued,
        other_peer_loading: cfg.other_peer_loading,
        employability_beta: EMPLOYABILITY_BETA.to_vec(),
        course_draws,
        latent_employability: latent,
    };
    let courses = drafts.into_iter().map(|d| d.course).collect();
    let ds = Dataset::new(COVARIATES.iter().map(|s| s.to_string()).collect(), persons, courses)?;
    Ok((ds, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DgpConfig {
        DgpConfig { n_providers: 6, months_span: 12, n_nonparticipants: 500, ..DgpConfig::default() }
    }

    #[test]
    fn same_seed_same_data() {
        let (a, ta) = generate(&small()).unwrap();
        let (b, tb) = generate(&small()).unwrap();
        assert_eq!(a.persons(), b.persons());
        assert_eq!(a.courses(), b.courses());
        assert_eq!(ta, tb);
        let (c, _) = generate(&DgpConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.persons(), c.persons());
    }

    #[test]
    fn one_course_per_provider_month() {
        let cfg = small();
        let (ds, _) = generate(&cfg).unwrap();
        assert_eq!(ds.courses().len(), cfg.n_providers * cfg.months_span);
        for courses in ds.provider_courses().values() {
            let mut months: Vec<i32> = courses.iter().map(|&c| ds.courses()[c].start_month.0).collect();
            months.sort_unstable();
            assert!(months.windows(2).all(|w| w[1] - w[0] == 1));
        }
    }

    #[test]
    fn sizes_respect_the_window() {
        let cfg = DgpConfig { n_providers: 30, ..small() };
        let (ds, _) = generate(&cfg).unwrap();
        let sizes: Vec<f64> = ds.courses().iter().map(|c| c.controls.course_size).collect();
        assert!(sizes.iter().all(|&s| (5.0..=30.0).contains(&s)));
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        assert!(ds.n_participants() >= 3_000);
        assert!((mean - 12.0).abs() < 1.0, "mean course size {mean}");
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        assert!(generate(&DgpConfig { course_size_range: [3, 30], ..small() }).is_err());
        assert!(generate(&DgpConfig { sigma_eps: 0.0, ..small() }).is_err());
        assert!(generate(&DgpConfig { program_type_shares: [0.5, 0.2, 0.2], ..small() }).is_err());
    }

    #[test]
    fn outcomes_follow_conventions() {
        let cfg = small();
        let (ds, truth) = generate(&cfg).unwrap();
        for (i, p) in ds.participants() {
            let o = p.outcomes.as_ref().unwrap();
            let lockin = cfg.lockin_months[ds.courses()[ds.course_of(i).unwrap()].program_type.index()] as usize;
            assert!(o.employed[..lockin].iter().all(|&e| e == 0));
            if o.employed.iter().all(|&e| e == 0) {
                assert_eq!(o.log_total_earn_60, 0.0);
                assert_eq!(o.search_duration_days, MAX_EMP_DAYS);
            }
            assert!(truth.latent_employability[&p.person_id] > 0.0);
        }
        assert_eq!(truth.latent_employability.len(), ds.persons().len());
    }
}
