//! Dataset schema, derived identification keys and estimation-sample filters.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of monthly employment indicators carried per participant.
pub const PANEL_MONTHS: usize = 60;
/// Upper bound of `emp_days_60` (five years of days).
pub const MAX_EMP_DAYS: f64 = 1826.0;

/// Calendar month as a single integer: `year * 12 + (month_of_year - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Month(pub i32);

impl Month {
    pub fn from_year_month(year: i32, month_of_year: u32) -> Self {
        assert!((1..=12).contains(&month_of_year));
        Month(year * 12 + month_of_year as i32 - 1)
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// 1 = January, 12 = December.
    pub fn month_of_year(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn offset(self, months: i32) -> Self {
        Month(self.0 + months)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Participant,
    Nonparticipant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Participant => "participant",
            Role::Nonparticipant => "nonparticipant",
        }
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "participant" => Ok(Role::Participant),
            "nonparticipant" => Ok(Role::Nonparticipant),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgramType {
    Short,
    Long,
    Retraining,
}

impl ProgramType {
    pub const ALL: [ProgramType; 3] = [ProgramType::Short, ProgramType::Long, ProgramType::Retraining];

    pub fn as_str(self) -> &'static str {
        match self {
            ProgramType::Short => "short",
            ProgramType::Long => "long",
            ProgramType::Retraining => "retraining",
        }
    }

    pub fn index(self) -> usize {
        match self {
            ProgramType::Short => 0,
            ProgramType::Long => 1,
            ProgramType::Retraining => 2,
        }
    }
}

impl fmt::Display for ProgramType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProgramType {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "short" => Ok(ProgramType::Short),
            "long" => Ok(ProgramType::Long),
            "retraining" => Ok(ProgramType::Retraining),
            other => Err(format!("unknown program type `{other}`")),
        }
    }
}

/// Post-program outcomes observed for participants.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub search_duration_days: f64,
    pub emp_days_60: f64,
    pub log_total_earn_60: f64,
    pub log_first_job_earn: f64,
    /// `employed[m - 1]` is the employment indicator in month `m` after program start.
    pub employed: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonRecord {
    pub person_id: u64,
    pub role: Role,
    pub entry_ue_month: Month,
    pub course_id: Option<u64>,
    pub ue_duration_at_start: Option<f64>,
    pub prior_program: bool,
    pub same_firm_peer_flag: bool,
    pub outcome_found_job_1y: Option<u8>,
    pub outcomes: Option<Outcomes>,
    /// Values aligned with [`Dataset::covariate_names`].
    pub covariates: Vec<f64>,
    /// Predicted employability, attached by the scoring stage.
    pub employability: Option<f64>,
}

impl PersonRecord {
    pub fn is_participant(&self) -> bool {
        self.role == Role::Participant
    }
}

/// Course-level controls entering every outcome regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CourseControls {
    pub course_size: f64,
    pub planned_duration_months: f64,
    pub weekly_hours: f64,
    pub hours_practice: f64,
    pub hours_class: f64,
}

impl CourseControls {
    pub const NAMES: [&'static str; 5] = [
        "course_size",
        "planned_duration_months",
        "weekly_hours",
        "hours_practice",
        "hours_class",
    ];

    pub fn values(&self) -> [f64; 5] {
        [
            self.course_size,
            self.planned_duration_months,
            self.weekly_hours,
            self.hours_practice,
            self.hours_class,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CourseRecord {
    pub course_id: u64,
    pub provider_id: u32,
    pub start_month: Month,
    pub program_type: ProgramType,
    pub target_occupation: u32,
    pub competence_level: u32,
    pub controls: CourseControls,
}

/// Provider-specific comparison cell: courses at one provider whose start
/// months are congruent modulo four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthGroupKey {
    pub provider_id: u32,
    pub group_index: u8,
}

/// Four-month division of a calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeasonKey {
    pub year: i32,
    pub third: u8,
}

pub fn derive_month_group(course: &CourseRecord) -> MonthGroupKey {
    MonthGroupKey {
        provider_id: course.provider_id,
        group_index: course.start_month.0.rem_euclid(4) as u8,
    }
}

pub fn derive_season(course: &CourseRecord) -> SeasonKey {
    season_of(course.start_month)
}

pub fn season_of(month: Month) -> SeasonKey {
    SeasonKey {
        year: month.year(),
        third: ((month.month_of_year() - 1) / 4) as u8,
    }
}

/// Validated, indexed collection of persons and courses. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    persons: Vec<PersonRecord>,
    courses: Vec<CourseRecord>,
    course_index: HashMap<u64, usize>,
    course_members: Vec<Vec<usize>>,
    provider_courses: BTreeMap<u32, Vec<usize>>,
}

impl Dataset {
    /// Builds the indices and checks the structural invariants.
    pub fn new(
        covariate_names: Vec<String>,
        persons: Vec<PersonRecord>,
        courses: Vec<CourseRecord>,
    ) -> Result<Self> {
        let mut seen_names = HashSet::new();
        for name in &covariate_names {
            if !seen_names.insert(name.as_str()) {
                return Err(Error::Integrity(format!("duplicate covariate column `{name}`")));
            }
        }

        let mut course_index = HashMap::with_capacity(courses.len());
        for (idx, course) in courses.iter().enumerate() {
            if course_index.insert(course.course_id, idx).is_some() {
                return Err(Error::Integrity(format!("duplicate course_id {}", course.course_id)));
            }
        }

        let mut course_members = vec![Vec::new(); courses.len()];
        let mut seen_ids = HashSet::with_capacity(persons.len());
        for (idx, p) in persons.iter().enumerate() {
            if !seen_ids.insert(p.person_id) {
                return Err(Error::Integrity(format!("duplicate person_id {}", p.person_id)));
            }
            if p.covariates.len() != covariate_names.len() {
                return Err(Error::Integrity(format!(
                    "person {} has {} covariates, schema has {}",
                    p.person_id,
                    p.covariates.len(),
                    covariate_names.len()
                )));
            }
            match p.role {
                Role::Participant => {
                    let cid = p.course_id.ok_or_else(|| {
                        Error::Integrity(format!("participant {} has no course_id", p.person_id))
                    })?;
                    if p.outcome_found_job_1y.is_some() {
                        return Err(Error::Integrity(format!(
                            "participant {} carries outcome_found_job_1y",
                            p.person_id
                        )));
                    }
                    let cidx = *course_index.get(&cid).ok_or_else(|| {
                        Error::Integrity(format!(
                            "participant {} references unknown course_id {cid}",
                            p.person_id
                        ))
                    })?;
                    course_members[cidx].push(idx);
                    if let Some(o) = &p.outcomes {
                        check_outcomes(p.person_id, o)?;
                    }
                }
                Role::Nonparticipant => {
                    if p.course_id.is_some() {
                        return Err(Error::Integrity(format!(
                            "nonparticipant {} references a course",
                            p.person_id
                        )));
                    }
                    match p.outcome_found_job_1y {
                        Some(0) | Some(1) => {}
                        Some(v) => {
                            return Err(Error::Integrity(format!(
                                "nonparticipant {}: outcome_found_job_1y = {v}",
                                p.person_id
                            )))
                        }
                        None => {
                            return Err(Error::Integrity(format!(
                                "nonparticipant {} lacks outcome_found_job_1y",
                                p.person_id
                            )))
                        }
                    }
                }
            }
            if let Some(s) = p.employability {
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::Integrity(format!(
                        "person {}: employability {s} outside (0,1)",
                        p.person_id
                    )));
                }
            }
        }

        for (cidx, course) in courses.iter().enumerate() {
            let n = course_members[cidx].len();
            if course.controls.course_size != n as f64 {
                return Err(Error::Integrity(format!(
                    "course {}: course_size {} but {} participants reference it",
                    course.course_id, course.controls.course_size, n
                )));
            }
        }

        let mut provider_courses: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (idx, c) in courses.iter().enumerate() {
            provider_courses.entry(c.provider_id).or_default().push(idx);
        }

        Ok(Dataset {
            covariate_names,
            persons,
            courses,
            course_index,
            course_members,
            provider_courses,
        })
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    pub fn persons(&self) -> &[PersonRecord] {
        &self.persons
    }

    pub fn courses(&self) -> &[CourseRecord] {
        &self.courses
    }

    pub fn course(&self, course_id: u64) -> Option<&CourseRecord> {
        self.course_index.get(&course_id).map(|&i| &self.courses[i])
    }

    pub fn course_position(&self, course_id: u64) -> Option<usize> {
        self.course_index.get(&course_id).copied()
    }

    /// Person indices of the participants in the course at position `course_idx`.
    pub fn members(&self, course_idx: usize) -> &[usize] {
        &self.course_members[course_idx]
    }

    pub fn provider_courses(&self) -> &BTreeMap<u32, Vec<usize>> {
        &self.provider_courses
    }

    pub fn participants(&self) -> impl Iterator<Item = (usize, &PersonRecord)> {
        self.persons.iter().enumerate().filter(|(_, p)| p.is_participant())
    }

    pub fn nonparticipants(&self) -> impl Iterator<Item = (usize, &PersonRecord)> {
        self.persons.iter().enumerate().filter(|(_, p)| !p.is_participant())
    }

    pub fn n_participants(&self) -> usize {
        self.persons.iter().filter(|p| p.is_participant()).count()
    }

    /// Course position of a participant, by person index.
    pub fn course_of(&self, person_idx: usize) -> Option<usize> {
        self.persons[person_idx]
            .course_id
            .and_then(|cid| self.course_index.get(&cid).copied())
    }

    /// Returns a copy with the given employability scores attached (by person index).
    pub fn with_scores(&self, scores: &[(usize, f64)]) -> Result<Dataset> {
        let mut persons = self.persons.clone();
        for &(idx, s) in scores {
            persons[idx].employability = Some(s);
        }
        Dataset::new(self.covariate_names.clone(), persons, self.courses.clone())
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<PersonRecord>, Vec<CourseRecord>) {
        (self.covariate_names, self.persons, self.courses)
    }
}

fn check_outcomes(person_id: u64, o: &Outcomes) -> Result<()> {
    if o.employed.len() != PANEL_MONTHS {
        return Err(Error::Integrity(format!(
            "person {person_id}: employment panel has {} months",
            o.employed.len()
        )));
    }
    if o.employed.iter().any(|&e| e > 1) {
        return Err(Error::Integrity(format!("person {person_id}: employment indicator not 0/1")));
    }
    if !(0.0..=MAX_EMP_DAYS).contains(&o.emp_days_60) {
        return Err(Error::Integrity(format!(
            "person {person_id}: emp_days_60 = {} outside [0, {MAX_EMP_DAYS}]",
            o.emp_days_60
        )));
    }
    Ok(())
}

/// Sample-selection rules applied by [`filter_estimation_sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    pub min_course_size: usize,
    pub max_course_size: usize,
    /// Minimum number of courses a provider must offer within one month group.
    pub min_courses_per_provider: usize,
    pub exclude_prior_program: bool,
    pub exclude_same_firm: bool,
    /// Keep only providers whose courses start exactly once per month over their active span.
    pub require_monthly_frequency: bool,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_course_size: 5,
            max_course_size: 30,
            min_courses_per_provider: 2,
            exclude_prior_program: false,
            exclude_same_firm: false,
            require_monthly_frequency: false,
        }
    }
}

/// Applies the selection rules in order and repeats until nothing changes, so the
/// result is a fixed point (and the operation idempotent). Course sizes are
/// recomputed from the surviving participants.
pub fn filter_estimation_sample(ds: &Dataset, rules: &FilterRules) -> Result<Dataset> {
    let mut persons: Vec<PersonRecord> = ds.persons.clone();
    let mut courses: Vec<CourseRecord> = ds.courses.clone();

    loop {
        let before = (persons.len(), courses.len());

        // course size window
        let sizes = participant_counts(&persons);
        courses.retain(|c| {
            let n = sizes.get(&c.course_id).copied().unwrap_or(0);
            n >= rules.min_course_size && n <= rules.max_course_size
        });
        drop_orphans(&mut persons, &courses);

        // providers with enough comparable courses
        let mut per_cell: BTreeMap<MonthGroupKey, usize> = BTreeMap::new();
        for c in &courses {
            *per_cell.entry(derive_month_group(c)).or_default() += 1;
        }
        let keep: BTreeSet<u32> = per_cell
            .iter()
            .filter(|(_, &n)| n >= rules.min_courses_per_provider)
            .map(|(k, _)| k.provider_id)
            .collect();
        courses.retain(|c| keep.contains(&c.provider_id));

        if rules.require_monthly_frequency {
            let mut months: BTreeMap<u32, Vec<i32>> = BTreeMap::new();
            for c in &courses {
                months.entry(c.provider_id).or_default().push(c.start_month.0);
            }
            let monthly: BTreeSet<u32> = months
                .into_iter()
                .filter(|(_, m)| {
                    let mut m = m.clone();
                    m.sort_unstable();
                    m.windows(2).all(|w| w[1] - w[0] == 1)
                })
                .map(|(p, _)| p)
                .collect();
            courses.retain(|c| monthly.contains(&c.provider_id));
        }
        drop_orphans(&mut persons, &courses);

        if rules.exclude_prior_program {
            persons.retain(|p| !(p.is_participant() && p.prior_program));
        }

        if rules.exclude_same_firm {
            let flagged: HashSet<u64> = persons
                .iter()
                .filter(|p| p.is_participant() && p.same_firm_peer_flag)
                .filter_map(|p| p.course_id)
                .collect();
            courses.retain(|c| !flagged.contains(&c.course_id));
            drop_orphans(&mut persons, &courses);
        }

        let sizes = participant_counts(&persons);
        for c in &mut courses {
            c.controls.course_size = sizes.get(&c.course_id).copied().unwrap_or(0) as f64;
        }

        if (persons.len(), courses.len()) == before {
            break;
        }
    }

    if courses.is_empty() || !persons.iter().any(|p| p.is_participant()) {
        return Err(Error::EmptySample("no course survives the selection rules".into()));
    }
    Dataset::new(ds.covariate_names.clone(), persons, courses)
}

fn participant_counts(persons: &[PersonRecord]) -> HashMap<u64, usize> {
    let mut counts = HashMap::new();
    for p in persons.iter().filter(|p| p.is_participant()) {
        if let Some(cid) = p.course_id {
            *counts.entry(cid).or_default() += 1;
        }
    }
    counts
}

fn drop_orphans(persons: &mut Vec<PersonRecord>, courses: &[CourseRecord]) {
    let live: HashSet<u64> = courses.iter().map(|c| c.course_id).collect();
    persons.retain(|p| match (p.role, p.course_id) {
        (Role::Participant, Some(cid)) => live.contains(&cid),
        _ => true,
    });
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn course(course_id: u64, provider_id: u32, start: Month, size: usize) -> CourseRecord {
        CourseRecord {
            course_id,
            provider_id,
            start_month: start,
            program_type: ProgramType::Short,
            target_occupation: 1,
            competence_level: 1,
            controls: CourseControls {
                course_size: size as f64,
                planned_duration_months: 4.0,
                weekly_hours: 35.0,
                hours_practice: 80.0,
                hours_class: 400.0,
            },
        }
    }

    pub fn participant(person_id: u64, course_id: u64) -> PersonRecord {
        PersonRecord {
            person_id,
            role: Role::Participant,
            entry_ue_month: Month(24_000),
            course_id: Some(course_id),
            ue_duration_at_start: Some(3.0),
            prior_program: false,
            same_firm_peer_flag: false,
            outcome_found_job_1y: None,
            outcomes: Some(Outcomes {
                search_duration_days: 100.0,
                emp_days_60: 900.0,
                log_total_earn_60: 10.0,
                log_first_job_earn: 7.5,
                employed: vec![0; PANEL_MONTHS],
            }),
            covariates: vec![],
            employability: None,
        }
    }

    /// `sizes[k]` participants in course `k + 1`; provider `k % providers`,
    /// start month `base + k / providers * 4` (all in month group 0).
    pub fn grid(sizes: &[usize], providers: u32) -> Dataset {
        let mut courses = Vec::new();
        let mut persons = Vec::new();
        let mut pid = 1;
        for (k, &n) in sizes.iter().enumerate() {
            let cid = k as u64 + 1;
            let start = Month::from_year_month(2010, 1).offset((k as i32 / providers as i32) * 4);
            courses.push(course(cid, k as u32 % providers, start, n));
            for _ in 0..n {
                persons.push(participant(pid, cid));
                pid += 1;
            }
        }
        Dataset::new(vec![], persons, courses).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    fn at(year: i32, month: u32) -> CourseRecord {
        course(1, 7, Month::from_year_month(year, month), 5)
    }

    #[test]
    fn april_august_december_share_a_month_group() {
        let keys: Vec<_> = [4, 8, 12].iter().map(|&m| derive_month_group(&at(2011, m))).collect();
        assert!(keys.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(derive_month_group(&at(2011, 1)), derive_month_group(&at(2011, 5)));
        assert_ne!(derive_month_group(&at(2011, 1)), derive_month_group(&at(2011, 2)));
        // congruence carries across years
        assert_eq!(derive_month_group(&at(2011, 12)), derive_month_group(&at(2012, 4)));
    }

    #[test]
    fn exactly_four_groups_per_provider() {
        let groups: BTreeSet<_> = (0..48)
            .map(|k| derive_month_group(&course(1, 3, Month(24_120 + k), 5)).group_index)
            .collect();
        assert_eq!(groups, BTreeSet::from([0, 1, 2, 3]));
    }

    #[test]
    fn seasons_split_year_in_thirds() {
        assert_eq!(derive_season(&at(2010, 3)), SeasonKey { year: 2010, third: 0 });
        assert_eq!(derive_season(&at(2010, 5)), SeasonKey { year: 2010, third: 1 });
        assert_eq!(derive_season(&at(2011, 12)), SeasonKey { year: 2011, third: 2 });
        assert_eq!(derive_season(&at(2011, 9)), SeasonKey { year: 2011, third: 2 });
    }

    #[test]
    fn negative_month_indices_are_well_defined() {
        let m = Month(-1);
        assert_eq!(m.year(), -1);
        assert_eq!(m.month_of_year(), 12);
    }

    #[test]
    fn small_courses_are_dropped() {
        let ds = grid(&[4, 6, 7, 8], 2);
        let out = filter_estimation_sample(&ds, &FilterRules::default()).unwrap();
        // course 1 (4 members) goes; provider 0 then has a single course and leaves too
        let ids: Vec<u64> = out.courses().iter().map(|c| c.course_id).collect();
        assert_eq!(ids, vec![2, 4]);
        assert_eq!(out.n_participants(), 14);
    }

    #[test]
    fn default_rules_are_identity_on_valid_data() {
        let ds = grid(&[5, 6, 7, 8, 9, 10], 2);
        let out = filter_estimation_sample(&ds, &FilterRules::default()).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn same_firm_exclusion_drops_the_whole_course() {
        let ds = grid(&[5, 6, 7, 8, 9, 10, 11, 12, 13, 14], 2);
        let (names, mut persons, courses) = ds.into_parts();
        let target = 7u64;
        let flagged_size = persons.iter().filter(|p| p.course_id == Some(target)).count();
        persons
            .iter_mut()
            .filter(|p| p.course_id == Some(target))
            .take(2)
            .for_each(|p| p.same_firm_peer_flag = true);
        let ds = Dataset::new(names, persons, courses).unwrap();
        let total = ds.n_participants();

        let rules = FilterRules { exclude_same_firm: true, ..Default::default() };
        let out = filter_estimation_sample(&ds, &rules).unwrap();
        assert_eq!(out.courses().len(), 9);
        assert_eq!(out.n_participants(), total - flagged_size);
    }

    #[test]
    fn prior_program_exclusion_recomputes_sizes_and_is_idempotent() {
        let ds = grid(&[5, 6, 7, 8, 9, 10], 2);
        let (names, mut persons, courses) = ds.into_parts();
        // one prior-program participant in the 5-person course pushes it below the minimum
        persons[0].prior_program = true;
        persons[10].prior_program = true;
        let ds = Dataset::new(names, persons, courses).unwrap();
        let rules = FilterRules { exclude_prior_program: true, ..Default::default() };
        let once = filter_estimation_sample(&ds, &rules).unwrap();
        assert!(once.course(1).is_none());
        for (cidx, c) in once.courses().iter().enumerate() {
            assert_eq!(c.controls.course_size as usize, once.members(cidx).len());
        }
        let twice = filter_estimation_sample(&once, &rules).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn everything_filtered_is_an_error() {
        let ds = grid(&[4, 4], 1);
        assert!(matches!(
            filter_estimation_sample(&ds, &FilterRules::default()),
            Err(Error::EmptySample(_))
        ));
    }

    #[test]
    fn monthly_frequency_screen() {
        let mut courses = vec![];
        let mut persons = vec![];
        let mut pid = 1;
        // provider 0 runs monthly, provider 1 skips a month
        for (cid, (prov, offset)) in [(0u32, 0), (0, 1), (0, 2), (0, 4), (0, 3), (1, 0), (1, 4), (1, 5)]
            .iter()
            .enumerate()
        {
            let cid = cid as u64 + 1;
            courses.push(course(cid, *prov, Month(24_120 + offset), 5));
            for _ in 0..5 {
                persons.push(participant(pid, cid));
                pid += 1;
            }
        }
        let ds = Dataset::new(vec![], persons, courses).unwrap();
        let rules = FilterRules { require_monthly_frequency: true, ..Default::default() };
        let out = filter_estimation_sample(&ds, &rules).unwrap();
        assert!(out.courses().iter().all(|c| c.provider_id == 0));
    }

    #[test]
    fn integrity_violations() {
        let ds = grid(&[5], 1);
        let (names, mut persons, courses) = ds.into_parts();
        persons[0].course_id = Some(99);
        let err = Dataset::new(names.clone(), persons.clone(), courses.clone()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));

        persons[0].course_id = Some(1);
        persons[1].person_id = persons[0].person_id;
        assert!(Dataset::new(names, persons, courses).is_err());
    }
}
