//! C interface to `aso-core`.
//!
//! Every fallible function returns an [`AsoStatus`]. On failure a message is
//! stored per thread and can be read with [`aso_last_error_message`]. Output
//! buffers are caller-allocated; their length is passed alongside and must
//! equal the number of grid levels where a distribution is expected.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aso_core::analytic::{objective, optimal_policy};
use aso_core::annotations::{krippendorff_alpha, AlphaMetric, AnnotationRecord};
use aso_core::grid::{ScoreDistribution, ScoreGrid};
use aso_core::metrics::{acc_at, mae, plcc, srcc};
use aso_core::rewards::{reward_vector, RewardKind, RewardSpec};
use aso_core::trainer::{predict, soft_target_grad, soft_target_loss, LinearScorer, PredictMode};
use aso_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsoStatus {
    Ok = 0,
    InvalidInput = 1,
    Domain = 2,
    Degenerate = 3,
    UndefinedMetric = 4,
    Config = 5,
    Io = 6,
    Parse = 7,
    NullPointer = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsoRewardKind {
    Abs = 0,
    Squared = 1,
    Accuracy = 2,
    Distribution = 3,
    Composite = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AsoRewardSpec {
    pub kind: AsoRewardKind,
    pub beta: f64,
    pub w_acc: f64,
    pub w_dist: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsoAlphaMetric {
    Interval = 0,
    Ordinal = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsoPredictMode {
    Expected = 0,
    Argmax = 1,
}

/// Opaque score grid.
pub struct AsoGrid(ScoreGrid);

/// Opaque linear scorer loaded from a checkpoint.
pub struct AsoScorer(LinearScorer);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &Error) -> AsoStatus {
    match e.root() {
        Error::Input(_) | Error::Item { .. } => AsoStatus::InvalidInput,
        Error::Domain(_) => AsoStatus::Domain,
        Error::Degenerate(_) => AsoStatus::Degenerate,
        Error::UndefinedMetric(_) => AsoStatus::UndefinedMetric,
        Error::Config(_) => AsoStatus::Config,
        Error::Io { .. } => AsoStatus::Io,
        Error::Parse { .. } => AsoStatus::Parse,
    }
}

fn guard<F>(body: F) -> AsoStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AsoStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed for `{name}`"));
            AsoStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".to_string());
            AsoStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(
    ptr: *mut T,
    len: usize,
    name: &'static str,
) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(name))
}

unsafe fn grid_ref<'a>(grid: *const AsoGrid) -> Result<&'a ScoreGrid, Failure> {
    grid.as_ref().map(|g| &g.0).ok_or(Failure::Null("grid"))
}

unsafe fn c_str<'a>(s: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::Core(Error::input(format!("`{name}` is not valid UTF-8"))))
}

fn check_len(len: usize, grid: &ScoreGrid) -> Result<(), Failure> {
    if len != grid.len() {
        return Err(Error::input(format!("buffer length {len}, grid has {} levels", grid.len())).into());
    }
    Ok(())
}

fn reward_spec(spec: &AsoRewardSpec) -> RewardSpec {
    let kind = match spec.kind {
        AsoRewardKind::Abs => RewardKind::Abs,
        AsoRewardKind::Squared => RewardKind::Squared,
        AsoRewardKind::Accuracy => RewardKind::Accuracy,
        AsoRewardKind::Distribution => RewardKind::Distribution,
        AsoRewardKind::Composite => RewardKind::Composite,
    };
    RewardSpec {
        kind,
        beta: spec.beta,
        w_acc: spec.w_acc,
        w_dist: spec.w_dist,
    }
}

/// Most recent error message on this thread, or NULL after a success. The
/// pointer stays valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn aso_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aso_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a grid from `min` to `max` in increments of `step`.
///
/// # Safety
/// `out` must be a valid pointer; release the grid with [`aso_grid_free`].
#[no_mangle]
pub unsafe extern "C" fn aso_grid_new(min: f64, max: f64, step: f64, out: *mut *mut AsoGrid) -> AsoStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let grid = ScoreGrid::new(min, max, step)?;
        *out = Box::into_raw(Box::new(AsoGrid(grid)));
        Ok(())
    })
}

/// # Safety
/// `grid` must come from [`aso_grid_new`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn aso_grid_free(grid: *mut AsoGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of levels, or 0 for a NULL grid.
///
/// # Safety
/// `grid` must be NULL or a live grid.
#[no_mangle]
pub unsafe extern "C" fn aso_grid_len(grid: *const AsoGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.len())
}

/// Writes the grid levels in ascending order.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_grid_levels(grid: *const AsoGrid, out: *mut f64, len: usize) -> AsoStatus {
    guard(|| {
        let grid = grid_ref(grid)?;
        check_len(len, grid)?;
        for (o, level) in slice_mut(out, len, "out")?.iter_mut().zip(grid.levels()) {
            *o = level;
        }
        Ok(())
    })
}

/// Reward of every level against the target `s_star`.
///
/// # Safety
/// `spec` must be valid and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_reward_vector(
    grid: *const AsoGrid,
    s_star: f64,
    spec: *const AsoRewardSpec,
    out: *mut f64,
    len: usize,
) -> AsoStatus {
    guard(|| {
        let grid = grid_ref(grid)?;
        check_len(len, grid)?;
        let spec = reward_spec(spec.as_ref().ok_or(Failure::Null("spec"))?);
        let rewards = reward_vector(grid, s_star, &spec)?;
        slice_mut(out, len, "out")?.copy_from_slice(&rewards);
        Ok(())
    })
}

/// KL-regularized optimal policy `π_ref · exp(R/λ) / Z`. Writes the
/// distribution to `out_probs` and `log Z` to `out_log_partition` (may be NULL).
///
/// # Safety
/// `pi_ref`, `rewards` and `out_probs` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_optimal_policy(
    grid: *const AsoGrid,
    pi_ref: *const f64,
    rewards: *const f64,
    len: usize,
    lambda: f64,
    out_probs: *mut f64,
    out_log_partition: *mut f64,
) -> AsoStatus {
    guard(|| {
        let grid = grid_ref(grid)?;
        check_len(len, grid)?;
        let reference = ScoreDistribution::new(*grid, slice(pi_ref, len, "pi_ref")?.to_vec())?;
        let teacher = optimal_policy(&reference, slice(rewards, len, "rewards")?, lambda)?;
        slice_mut(out_probs, len, "out_probs")?.copy_from_slice(teacher.probs());
        if let Some(lz) = out_log_partition.as_mut() {
            *lz = teacher.log_partition();
        }
        Ok(())
    })
}

/// `Σ π R − λ KL(π ‖ π_ref)`.
///
/// # Safety
/// `pi`, `pi_ref` and `rewards` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_objective(
    grid: *const AsoGrid,
    pi: *const f64,
    pi_ref: *const f64,
    rewards: *const f64,
    len: usize,
    lambda: f64,
    out: *mut f64,
) -> AsoStatus {
    guard(|| {
        let grid = grid_ref(grid)?;
        check_len(len, grid)?;
        let pi = ScoreDistribution::new(*grid, slice(pi, len, "pi")?.to_vec())?;
        let reference = ScoreDistribution::new(*grid, slice(pi_ref, len, "pi_ref")?.to_vec())?;
        *out_ref(out, "out")? = objective(&pi, &reference, slice(rewards, len, "rewards")?, lambda)?;
        Ok(())
    })
}

/// Soft-target cross-entropy `−Σ t log softmax(z)`.
///
/// # Safety
/// `target` and `logits` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_soft_ce_loss(
    grid: *const AsoGrid,
    target: *const f64,
    logits: *const f64,
    len: usize,
    out: *mut f64,
) -> AsoStatus {
    guard(|| {
        let grid = grid_ref(grid)?;
        check_len(len, grid)?;
        let target = ScoreDistribution::new(*grid, slice(target, len, "target")?.to_vec())?;
        *out_ref(out, "out")? = soft_target_loss(&target, slice(logits, len, "logits")?)?;
        Ok(())
    })
}

/// Gradient of [`aso_soft_ce_loss`] with respect to the logits: `softmax(z) − t`.
///
/// # Safety
/// `target`, `logits` and `out_grad` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_soft_ce_grad(
    grid: *const AsoGrid,
    target: *const f64,
    logits: *const f64,
    len: usize,
    out_grad: *mut f64,
) -> AsoStatus {
    guard(|| {
        let grid = grid_ref(grid)?;
        check_len(len, grid)?;
        let target = ScoreDistribution::new(*grid, slice(target, len, "target")?.to_vec())?;
        let grad = soft_target_grad(&target, slice(logits, len, "logits")?)?;
        slice_mut(out_grad, len, "out_grad")?.copy_from_slice(&grad);
        Ok(())
    })
}

unsafe fn paired_metric(
    f: fn(&[f64], &[f64]) -> aso_core::Result<f64>,
    preds: *const f64,
    gts: *const f64,
    n: usize,
    out: *mut f64,
) -> AsoStatus {
    guard(|| {
        *out_ref(out, "out")? = f(slice(preds, n, "preds")?, slice(gts, n, "gts")?)?;
        Ok(())
    })
}

/// Spearman rank correlation (average ranks for ties).
///
/// # Safety
/// `preds` and `gts` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_srcc(preds: *const f64, gts: *const f64, n: usize, out: *mut f64) -> AsoStatus {
    paired_metric(srcc, preds, gts, n, out)
}

/// Pearson correlation.
///
/// # Safety
/// `preds` and `gts` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_plcc(preds: *const f64, gts: *const f64, n: usize, out: *mut f64) -> AsoStatus {
    paired_metric(plcc, preds, gts, n, out)
}

/// Mean absolute error.
///
/// # Safety
/// `preds` and `gts` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_mae(preds: *const f64, gts: *const f64, n: usize, out: *mut f64) -> AsoStatus {
    paired_metric(mae, preds, gts, n, out)
}

/// Share of predictions within `tolerance` of the ground truth (inclusive).
///
/// # Safety
/// `preds` and `gts` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_acc_at(
    preds: *const f64,
    gts: *const f64,
    n: usize,
    tolerance: f64,
    out: *mut f64,
) -> AsoStatus {
    guard(|| {
        *out_ref(out, "out")? = acc_at(slice(preds, n, "preds")?, slice(gts, n, "gts")?, tolerance)?;
        Ok(())
    })
}

/// Krippendorff's alpha over `n` ratings; `units[i]` names the unit that
/// rating `values[i]` belongs to.
///
/// # Safety
/// `units` and `values` must each hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn aso_krippendorff_alpha(
    units: *const u64,
    values: *const f64,
    n: usize,
    metric: AsoAlphaMetric,
    out: *mut f64,
) -> AsoStatus {
    guard(|| {
        let units = slice(units, n, "units")?;
        let values = slice(values, n, "values")?;
        let records: Vec<AnnotationRecord> = units
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (&u, &v))| AnnotationRecord {
                video_id: u.to_string(),
                dimension: "d".to_string(),
                rater_id: i.to_string(),
                score: v,
                tags: Vec::new(),
            })
            .collect();
        let metric = match metric {
            AsoAlphaMetric::Interval => AlphaMetric::Interval,
            AsoAlphaMetric::Ordinal => AlphaMetric::Ordinal,
        };
        *out_ref(out, "out")? = krippendorff_alpha(&records, metric)?.value;
        Ok(())
    })
}

/// Parses a checkpoint from a JSON string.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be valid. Release with [`aso_scorer_free`].
#[no_mangle]
pub unsafe extern "C" fn aso_scorer_from_json(json: *const c_char, out: *mut *mut AsoScorer) -> AsoStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let text = c_str(json, "json")?;
        let model: LinearScorer = serde_json::from_str(text)
            .map_err(|e| Error::Parse { path: "<string>".into(), line: e.line(), message: e.to_string() })?;
        *out = Box::into_raw(Box::new(AsoScorer(model)));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid. Release with [`aso_scorer_free`].
#[no_mangle]
pub unsafe extern "C" fn aso_scorer_load(path: *const c_char, out: *mut *mut AsoScorer) -> AsoStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let path = c_str(path, "path")?;
        let model: LinearScorer = aso_core::io::read_json(Path::new(path))?;
        *out = Box::into_raw(Box::new(AsoScorer(model)));
        Ok(())
    })
}

/// # Safety
/// `scorer` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn aso_scorer_free(scorer: *mut AsoScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Feature dimension, or 0 for a NULL scorer.
///
/// # Safety
/// `scorer` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn aso_scorer_feature_dim(scorer: *const AsoScorer) -> usize {
    scorer.as_ref().map_or(0, |s| s.0.feature_dim())
}

/// Number of score levels, or 0 for a NULL scorer.
///
/// # Safety
/// `scorer` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn aso_scorer_levels(scorer: *const AsoScorer) -> usize {
    scorer.as_ref().map_or(0, |s| s.0.grid().len())
}

/// Scalar score for one feature vector.
///
/// # Safety
/// `features` must hold `n_features` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_scorer_predict(
    scorer: *const AsoScorer,
    features: *const f64,
    n_features: usize,
    mode: AsoPredictMode,
    out: *mut f64,
) -> AsoStatus {
    guard(|| {
        let scorer = scorer.as_ref().ok_or(Failure::Null("scorer"))?;
        let mode = match mode {
            AsoPredictMode::Expected => PredictMode::Expected,
            AsoPredictMode::Argmax => PredictMode::Argmax,
        };
        *out_ref(out, "out")? = predict(&scorer.0, slice(features, n_features, "features")?, mode)?;
        Ok(())
    })
}

/// Score distribution for one feature vector.
///
/// # Safety
/// `features` must hold `n_features` doubles and `out_probs` `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn aso_scorer_policy(
    scorer: *const AsoScorer,
    features: *const f64,
    n_features: usize,
    out_probs: *mut f64,
    len: usize,
) -> AsoStatus {
    guard(|| {
        let scorer = scorer.as_ref().ok_or(Failure::Null("scorer"))?;
        check_len(len, scorer.0.grid())?;
        let policy = scorer.0.policy(slice(features, n_features, "features")?)?;
        slice_mut(out_probs, len, "out_probs")?.copy_from_slice(policy.probs());
        Ok(())
    })
}
