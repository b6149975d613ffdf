//! C interface to the peer-effects library.
//!
//! Every function returns a [`PfxStatus`]; on failure a message is kept per
//! thread and can be read with [`pfx_last_error`]. Datasets are opaque handles
//! released with [`pfx_dataset_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use peerfx::employability::{score_dataset, ScoreOptions};
use peerfx::io::{load_dataset, write_courses, write_persons};
use peerfx::model::{filter_estimation_sample, Dataset, FilterRules, ProgramType};
use peerfx::peer::{compute_peer_table, loo_mean, loo_sd, PeerOptions};
use peerfx::suite::{linear_in_means, Sample, PEER_MEAN};
use peerfx::synth::{generate, DgpConfig};
use peerfx::validity::resampling_test;
use peerfx::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalError = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfxProgramType {
    Short = 0,
    Long = 1,
    Retraining = 2,
}

impl From<PfxProgramType> for ProgramType {
    fn from(t: PfxProgramType) -> Self {
        match t {
            PfxProgramType::Short => ProgramType::Short,
            PfxProgramType::Long => ProgramType::Long,
            PfxProgramType::Retraining => ProgramType::Retraining,
        }
    }
}

/// Opaque dataset handle.
pub struct PfxDataset {
    inner: Dataset,
}

/// Peer-mean effect from the linear-in-means model, per residual SD.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PfxEffect {
    pub effect: f64,
    pub se: f64,
    pub p: f64,
    /// Unscaled coefficient and its standard error.
    pub coef: f64,
    pub coef_se: f64,
    pub residual_sd: f64,
    pub nobs: usize,
    pub n_clusters: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PfxResampling {
    pub observed_sd_raw: f64,
    pub observed_sd_net: f64,
    pub simulated_mean_sd_net: f64,
    pub simulated_sd_of_sd_net: f64,
    pub z_net: f64,
    pub n_sims: usize,
    /// 1 when `z_net` exceeds the threshold.
    pub excess_variation: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn status_of(e: &Error) -> PfxStatus {
    match e.exit_code() {
        1 => PfxStatus::InvalidArgument,
        2 => PfxStatus::DataError,
        _ => PfxStatus::NumericalError,
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PfxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PfxStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is a null pointer"));
            PfxStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            PfxStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            PfxStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn dataset_arg<'a>(ds: *const PfxDataset) -> Result<&'a Dataset, Fail> {
    ds.as_ref().map(|d| &d.inner).ok_or(Fail::Null("dataset"))
}

fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: callers pass either null or a valid, writable pointer
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pfx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pfx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Draws a synthetic dataset with default parameters except those given.
/// Zero for `n_providers` or `n_nonparticipants` keeps the default.
#[no_mangle]
pub extern "C" fn pfx_dataset_generate(
    seed: u64,
    n_providers: u32,
    n_nonparticipants: u32,
    out: *mut *mut PfxDataset,
) -> PfxStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        let mut cfg = DgpConfig { seed, ..DgpConfig::default() };
        if n_providers > 0 {
            cfg.n_providers = n_providers as usize;
        }
        if n_nonparticipants > 0 {
            cfg.n_nonparticipants = n_nonparticipants as usize;
        }
        let (inner, _) = generate(&cfg)?;
        *slot = Box::into_raw(Box::new(PfxDataset { inner }));
        Ok(())
    })
}

/// Loads persons and courses CSVs.
///
/// # Safety
/// `persons` and `courses` must be null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn pfx_dataset_load(
    persons: *const c_char,
    courses: *const c_char,
    out: *mut *mut PfxDataset,
) -> PfxStatus {
    guard(|| {
        let slot = out_arg(out, "out")?;
        let inner = load_dataset(&path_arg(persons, "persons")?, &path_arg(courses, "courses")?)?;
        *slot = Box::into_raw(Box::new(PfxDataset { inner }));
        Ok(())
    })
}

/// Writes persons and courses CSVs.
///
/// # Safety
/// `ds` must be null or a live handle; paths must be null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pfx_dataset_write(
    ds: *const PfxDataset,
    persons: *const c_char,
    courses: *const c_char,
) -> PfxStatus {
    guard(|| {
        let d = dataset_arg(ds)?;
        write_persons(d, &path_arg(persons, "persons")?)?;
        write_courses(d, &path_arg(courses, "courses")?)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pfx_dataset_free(ds: *mut PfxDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Counts of persons, participants and courses. Any out pointer may be null.
///
/// # Safety
/// `ds` must be null or a live handle; out pointers null or writable.
#[no_mangle]
pub unsafe extern "C" fn pfx_dataset_counts(
    ds: *const PfxDataset,
    persons: *mut usize,
    participants: *mut usize,
    courses: *mut usize,
) -> PfxStatus {
    guard(|| {
        let d = dataset_arg(ds)?;
        for (p, v) in [(persons, d.persons().len()), (participants, d.n_participants()), (courses, d.courses().len())] {
            if let Some(slot) = p.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// Attaches employability scores in place (joint model, three neighbours).
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pfx_dataset_score(ds: *mut PfxDataset) -> PfxStatus {
    guard(|| {
        let d = ds.as_mut().ok_or(Fail::Null("dataset"))?;
        d.inner = score_dataset(&d.inner, &ScoreOptions::default())?.dataset;
        Ok(())
    })
}

fn with_sample<T>(d: &Dataset, t: PfxProgramType, f: impl FnOnce(&Sample) -> peerfx::Result<T>) -> Result<T, Fail> {
    let filtered = filter_estimation_sample(d, &FilterRules::default())?;
    let table = compute_peer_table(&filtered, PeerOptions::default())?;
    let sample = Sample::build(&filtered, &table, t.into())?;
    Ok(f(&sample)?)
}

/// Linear-in-means peer effect on a scored dataset, default sample filters.
///
/// # Safety
/// `ds` must be null or a live handle; `outcome` null or NUL-terminated; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pfx_estimate_linear_in_means(
    ds: *const PfxDataset,
    program_type: PfxProgramType,
    outcome: *const c_char,
    out: *mut PfxEffect,
) -> PfxStatus {
    guard(|| {
        let d = dataset_arg(ds)?;
        let slot = out_arg(out, "out")?;
        if outcome.is_null() {
            return Err(Fail::Null("outcome"));
        }
        let outcome = CStr::from_ptr(outcome).to_str().map_err(|_| Fail::Arg("outcome is not valid UTF-8".into()))?;
        *slot = with_sample(d, program_type, |s| {
            let rep = linear_in_means(s, outcome)?;
            let row = rep.row(PEER_MEAN).ok_or_else(|| Error::Singular("peer mean was dropped".into()))?;
            Ok(PfxEffect {
                effect: row.effect,
                se: row.se,
                p: row.p,
                coef: row.coef,
                coef_se: row.coef_se,
                residual_sd: rep.residual_sd.get(PEER_MEAN).copied().unwrap_or(0.0),
                nobs: rep.nobs,
                n_clusters: rep.n_clusters,
            })
        })?;
        Ok(())
    })
}

/// Mean of `scores` without element `i`.
///
/// # Safety
/// `scores` must point to `n` doubles; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pfx_loo_mean(scores: *const f64, n: usize, i: usize, out: *mut f64) -> PfxStatus {
    guard(|| {
        let v = slice_arg(scores, n, "scores")?;
        let slot = out_arg(out, "out")?;
        if i >= n {
            return Err(Fail::Arg(format!("index {i} out of range for {n} scores")));
        }
        *slot = loo_mean(v, i)?;
        Ok(())
    })
}

/// Sample SD of `scores` without element `i`.
///
/// # Safety
/// `scores` must point to `n` doubles; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pfx_loo_sd(scores: *const f64, n: usize, i: usize, out: *mut f64) -> PfxStatus {
    guard(|| {
        let v = slice_arg(scores, n, "scores")?;
        let slot = out_arg(out, "out")?;
        if i >= n {
            return Err(Fail::Arg(format!("index {i} out of range for {n} scores")));
        }
        *slot = loo_sd(v, i)?;
        Ok(())
    })
}

/// Within-cell reallocation test on a scored dataset.
///
/// # Safety
/// `ds` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn pfx_resampling_test(
    ds: *const PfxDataset,
    program_type: PfxProgramType,
    n_sims: usize,
    seed: u64,
    z_threshold: f64,
    out: *mut PfxResampling,
) -> PfxStatus {
    guard(|| {
        let d = dataset_arg(ds)?;
        let slot = out_arg(out, "out")?;
        let r = with_sample(d, program_type, |s| resampling_test(s, n_sims, seed, z_threshold))?;
        *slot = PfxResampling {
            observed_sd_raw: r.observed_sd_raw,
            observed_sd_net: r.observed_sd_net,
            simulated_mean_sd_net: r.simulated_mean_sd_net,
            simulated_sd_of_sd_net: r.simulated_sd_of_sd_net,
            z_net: r.z_net,
            n_sims: r.n_sims,
            excess_variation: i32::from(r.excess_variation),
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_a_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, PfxStatus::Panic);
        let msg = unsafe { CStr::from_ptr(pfx_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }

    #[test]
    fn library_errors_map_by_class() {
        assert_eq!(status_of(&Error::Usage("x".into())), PfxStatus::InvalidArgument);
        assert_eq!(status_of(&Error::Integrity("x".into())), PfxStatus::DataError);
        assert_eq!(status_of(&Error::Singular("x".into())), PfxStatus::NumericalError);
    }
}
