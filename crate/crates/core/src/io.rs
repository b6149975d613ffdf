//! CSV persistence for persons and courses.
//!
//! Column order is fixed; covariate columns after the panel are taken from the
//! header. A trailing column named [`EMPLOYABILITY_COLUMN`] is not a covariate:
//! it carries the predicted score written by the scoring stage.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{
    CourseControls, CourseRecord, Dataset, Month, Outcomes, PersonRecord, ProgramType, Role,
    PANEL_MONTHS,
};

pub const EMPLOYABILITY_COLUMN: &str = "employability";

const PERSON_FIXED: [&str; 12] = [
    "person_id",
    "role",
    "entry_ue_month",
    "course_id",
    "ue_duration_at_start",
    "prior_program",
    "same_firm_peer_flag",
    "outcome_found_job_1y",
    "search_duration_days",
    "emp_days_60",
    "log_total_earn_60",
    "log_first_job_earn",
];

const COURSE_COLUMNS: [&str; 11] = [
    "course_id",
    "provider_id",
    "start_month",
    "program_type",
    "target_occupation",
    "competence_level",
    "course_size",
    "planned_duration_months",
    "weekly_hours",
    "hours_practice",
    "hours_class",
];

pub fn person_header(covariates: &[String], with_score: bool) -> Vec<String> {
    let mut h: Vec<String> = PERSON_FIXED.iter().map(|s| s.to_string()).collect();
    h.extend((1..=PANEL_MONTHS).map(|m| format!("employed_m{m}")));
    h.extend(covariates.iter().cloned());
    if with_score {
        h.push(EMPLOYABILITY_COLUMN.to_string());
    }
    h
}

pub fn load_dataset(persons_path: &Path, courses_path: &Path) -> Result<Dataset> {
    let courses = read_courses(courses_path)?;
    let (names, persons) = read_persons(persons_path)?;
    Dataset::new(names, persons, courses)
}

struct Cells<'a> {
    file: &'a str,
    row: usize,
    header: &'a [String],
    record: &'a csv::StringRecord,
}

impl<'a> Cells<'a> {
    fn err(&self, col: usize, message: impl Into<String>) -> Error {
        Error::Schema {
            file: self.file.to_string(),
            row: self.row,
            column: self.header.get(col).cloned().unwrap_or_default(),
            message: message.into(),
        }
    }

    fn raw(&self, col: usize) -> &'a str {
        self.record.get(col).unwrap_or("").trim()
    }

    fn opt<T: FromStr>(&self, col: usize) -> Result<Option<T>> {
        let s = self.raw(col);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<T>()
            .map(Some)
            .map_err(|_| self.err(col, format!("cannot parse `{s}`")))
    }

    fn req<T: FromStr>(&self, col: usize) -> Result<T> {
        self.opt(col)?.ok_or_else(|| self.err(col, "missing value"))
    }

    fn flag(&self, col: usize) -> Result<bool> {
        match self.opt::<u8>(col)? {
            None | Some(0) => Ok(false),
            Some(1) => Ok(true),
            Some(v) => Err(self.err(col, format!("expected 0/1, found {v}"))),
        }
    }

    fn finite(&self, col: usize) -> Result<Option<f64>> {
        match self.opt::<f64>(col)? {
            Some(v) if !v.is_finite() => Err(self.err(col, "non-finite value")),
            v => Ok(v),
        }
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Schema {
        file: path.display().to_string(),
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

fn check_header(path: &Path, header: &[String], expected: &[String]) -> Result<()> {
    for (i, want) in expected.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == want => {}
            got => {
                return Err(Error::Schema {
                    file: path.display().to_string(),
                    row: 1,
                    column: want.clone(),
                    message: match got {
                        Some(g) => format!("expected column `{want}` at position {}, found `{g}`", i + 1),
                        None => "missing column".to_string(),
                    },
                })
            }
        }
    }
    Ok(())
}

pub fn read_courses(path: &Path) -> Result<Vec<CourseRecord>> {
    let mut rdr = open_reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let expected: Vec<String> = COURSE_COLUMNS.iter().map(|s| s.to_string()).collect();
    check_header(path, &header, &expected)?;
    if header.len() != expected.len() {
        return Err(Error::Schema {
            file: path.display().to_string(),
            row: 1,
            column: header[expected.len()].clone(),
            message: "unexpected extra column".into(),
        });
    }
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let c = Cells { file: &file, row: i + 2, header: &header, record: &rec };
        let program_type: String = c.req(3)?;
        let program_type = ProgramType::from_str(&program_type).map_err(|m| c.err(3, m))?;
        let course_size: f64 = c.req(6)?;
        if course_size.fract() != 0.0 || course_size < 0.0 {
            return Err(c.err(6, "course_size must be a non-negative integer"));
        }
        out.push(CourseRecord {
            course_id: c.req(0)?,
            provider_id: c.req(1)?,
            start_month: Month(c.req(2)?),
            program_type,
            target_occupation: c.req(4)?,
            competence_level: c.req(5)?,
            controls: CourseControls {
                course_size,
                planned_duration_months: c.finite(7)?.ok_or_else(|| c.err(7, "missing value"))?,
                weekly_hours: c.finite(8)?.ok_or_else(|| c.err(8, "missing value"))?,
                hours_practice: c.finite(9)?.ok_or_else(|| c.err(9, "missing value"))?,
                hours_class: c.finite(10)?.ok_or_else(|| c.err(10, "missing value"))?,
            },
        });
    }
    Ok(out)
}

pub fn read_persons(path: &Path) -> Result<(Vec<String>, Vec<PersonRecord>)> {
    let mut rdr = open_reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let fixed = person_header(&[], false);
    check_header(path, &header, &fixed)?;

    let mut covariate_cols = Vec::new();
    let mut score_col = None;
    for (i, name) in header.iter().enumerate().skip(fixed.len()) {
        if name == EMPLOYABILITY_COLUMN {
            score_col = Some(i);
        } else {
            covariate_cols.push(i);
        }
    }
    let names: Vec<String> = covariate_cols.iter().map(|&i| header[i].clone()).collect();
    let panel_start = PERSON_FIXED.len();
    let file = path.display().to_string();

    let mut persons = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let c = Cells { file: &file, row: i + 2, header: &header, record: &rec };
        let role: String = c.req(1)?;
        let role = Role::from_str(&role).map_err(|m| c.err(1, m))?;

        let outcome_cells = [8usize, 9, 10, 11];
        let any_outcome = outcome_cells.iter().any(|&k| !c.raw(k).is_empty())
            || (panel_start..panel_start + PANEL_MONTHS).any(|k| !c.raw(k).is_empty());
        let outcomes = if any_outcome {
            let mut employed = Vec::with_capacity(PANEL_MONTHS);
            for k in panel_start..panel_start + PANEL_MONTHS {
                let v: u8 = c.req(k)?;
                if v > 1 {
                    return Err(c.err(k, format!("expected 0/1, found {v}")));
                }
                employed.push(v);
            }
            let num = |k: usize| c.finite(k)?.ok_or_else(|| c.err(k, "missing value"));
            Some(Outcomes {
                search_duration_days: num(8)?,
                emp_days_60: num(9)?,
                log_total_earn_60: num(10)?,
                log_first_job_earn: num(11)?,
                employed,
            })
        } else {
            None
        };

        let mut covariates = Vec::with_capacity(covariate_cols.len());
        for &k in &covariate_cols {
            covariates.push(c.finite(k)?.ok_or_else(|| c.err(k, "missing covariate"))?);
        }
        let employability = match score_col {
            Some(k) => c.finite(k)?,
            None => None,
        };
        let found = match c.opt::<u8>(7)? {
            Some(v) if v > 1 => return Err(c.err(7, format!("expected 0/1, found {v}"))),
            v => v,
        };

        persons.push(PersonRecord {
            person_id: c.req(0)?,
            role,
            entry_ue_month: Month(c.req(2)?),
            course_id: c.opt(3)?,
            ue_duration_at_start: c.finite(4)?,
            prior_program: c.flag(5)?,
            same_firm_peer_flag: c.flag(6)?,
            outcome_found_job_1y: found,
            outcomes,
            covariates,
            employability,
        });
    }
    Ok((names, persons))
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(file)))
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn opt_num<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes persons. The employability column is emitted only when at least one
/// person carries a score.
pub fn write_persons(ds: &Dataset, path: &Path) -> Result<()> {
    let with_score = ds.persons().iter().any(|p| p.employability.is_some());
    let mut w = create(path)?;
    w.write_record(person_header(ds.covariate_names(), with_score))
        .map_err(|e| write_err(path, e))?;
    let mut row: Vec<String> = Vec::new();
    for p in ds.persons() {
        row.clear();
        row.push(p.person_id.to_string());
        row.push(p.role.as_str().to_string());
        row.push(p.entry_ue_month.0.to_string());
        row.push(opt_num(p.course_id));
        row.push(opt_num(p.ue_duration_at_start));
        row.push((p.prior_program as u8).to_string());
        row.push((p.same_firm_peer_flag as u8).to_string());
        row.push(opt_num(p.outcome_found_job_1y));
        match &p.outcomes {
            Some(o) => {
                row.push(o.search_duration_days.to_string());
                row.push(o.emp_days_60.to_string());
                row.push(o.log_total_earn_60.to_string());
                row.push(o.log_first_job_earn.to_string());
                row.extend(o.employed.iter().map(|e| e.to_string()));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 4 + PANEL_MONTHS)),
        }
        row.extend(p.covariates.iter().map(|v| v.to_string()));
        if with_score {
            row.push(opt_num(p.employability));
        }
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_courses(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(COURSE_COLUMNS).map_err(|e| write_err(path, e))?;
    for c in ds.courses() {
        let k = &c.controls;
        w.write_record([
            c.course_id.to_string(),
            c.provider_id.to_string(),
            c.start_month.0.to_string(),
            c.program_type.as_str().to_string(),
            c.target_occupation.to_string(),
            c.competence_level.to_string(),
            k.course_size.to_string(),
            k.planned_duration_months.to_string(),
            k.weekly_hours.to_string(),
            k.hours_practice.to_string(),
            k.hours_class.to_string(),
        ])
        .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes a table of string cells as CSV.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| write_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn panel_cells(v: &str) -> String {
        vec![v; PANEL_MONTHS].join(",")
    }

    fn write_minimal(dir: &Path, course_ref: u64) -> (std::path::PathBuf, std::path::PathBuf) {
        let persons = dir.join("persons.csv");
        let courses = dir.join("courses.csv");
        let header = person_header(&["age".to_string(), "female".to_string()], false).join(",");
        let p1 = format!("1,participant,24100,{course_ref},3,0,0,,120,800,10.5,7.2,{},41,1", panel_cells("0"));
        let p2 = format!("2,nonparticipant,24101,,,0,0,1,,,,,{},35,0", panel_cells(""));
        fs::write(&persons, format!("{header}\n{p1}\n{p2}\n")).unwrap();
        fs::write(
            &courses,
            format!("{}\n7,3,24104,short,12,2,1,4,35,80,400\n", COURSE_COLUMNS.join(",")),
        )
        .unwrap();
        (persons, courses)
    }

    #[test]
    fn minimal_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let (p, c) = write_minimal(dir.path(), 7);
        let ds = load_dataset(&p, &c).unwrap();
        assert_eq!(ds.persons().len(), 2);
        assert_eq!(ds.courses().len(), 1);
        assert_eq!(ds.covariate_names(), &["age", "female"]);
        assert_eq!(ds.persons()[1].outcome_found_job_1y, Some(1));
        assert!(ds.persons()[1].outcomes.is_none());
    }

    #[test]
    fn dangling_course_reference_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let (p, c) = write_minimal(dir.path(), 8);
        assert!(matches!(load_dataset(&p, &c), Err(Error::Integrity(_))));
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let (p, c) = write_minimal(dir.path(), 7);
        let text = fs::read_to_string(&p).unwrap().replace(",41,1", ",forty,1");
        fs::write(&p, text).unwrap();
        match load_dataset(&p, &c) {
            Err(Error::Schema { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (p, c) = write_minimal(dir.path(), 7);
        let text = fs::read_to_string(&c).unwrap().replace("weekly_hours", "weekly");
        fs::write(&c, text).unwrap();
        match load_dataset(&p, &c) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "weekly_hours"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
