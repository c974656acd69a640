//! C ABI over `ibd-core`.
//!
//! Every function returns an [`IbdStatus`]; on failure a message is kept per
//! thread and can be read with [`ibd_last_error_message`]. Handles are
//! opaque and must be released with their `*_free` function. Strings handed
//! out by the library are released with [`ibd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ibd_core::data;
use ibd_core::explainer::{ExplainConfig, Explainer, FeatureOrder, DEFAULT_MAX_ROWS};
use ibd_core::models::{self, ForestParams, GbmParams};
use ibd_core::render::{self, RenderSpec};
use ibd_core::{Dataset, Error, Explanation, Model, ModelError, ModelHandle, ModelInfo, Observation, RowMatrix};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IbdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ModelFailure = 3,
    Io = 4,
    Format = 5,
    Unsupported = 6,
    Panic = 7,
}

pub struct IbdDataset {
    dataset: Dataset,
    targets: Option<Vec<f64>>,
}

pub struct IbdModel {
    handle: ModelHandle,
}

pub struct IbdExplanation {
    explanation: Explanation,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct IbdExplainOptions {
    pub interaction_preference: f64,
    /// Background row cap; 0 uses every row.
    pub max_rows: usize,
    pub seed: u64,
    pub workers: usize,
}

/// Scores `n_rows` row-major rows of `n_cols` values into `out`; returns 0
/// on success. Called concurrently when more than one worker is used.
pub type IbdScoreFn = Option<
    unsafe extern "C" fn(
        rows: *const f64,
        n_rows: usize,
        n_cols: usize,
        out: *mut f64,
        user_data: *mut c_void,
    ) -> c_int,
>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IbdStatus {
    match e {
        Error::Model(_) => IbdStatus::ModelFailure,
        Error::Io { .. } => IbdStatus::Io,
        Error::Format(_) | Error::Json(_) | Error::Csv(_) => IbdStatus::Format,
        Error::Unsupported => IbdStatus::Unsupported,
        _ => IbdStatus::InvalidArgument,
    }
}

struct Failure(IbdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure(IbdStatus::ModelFailure, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(IbdStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(IbdStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> IbdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IbdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IbdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = CString::new(s)
        .map_err(|_| invalid("output contains a nul byte"))?
        .into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ibd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ibd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- datasets

/// Loads a CSV file. With a non-null `target` that column becomes the
/// target: kept as numbers when numeric and no `positive_label` is given,
/// mapped to 0/1 otherwise.
///
/// # Safety
/// String arguments must be nul-terminated or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn ibd_dataset_load_csv(
    path: *const c_char,
    target: *const c_char,
    positive_label: *const c_char,
    out: *mut *mut IbdDataset,
) -> IbdStatus {
    guard(|| {
        let path = Path::new(str_arg(path, "path")?);
        let target = opt_str_arg(target, "target")?;
        let label = opt_str_arg(positive_label, "positive_label")?;
        let ds = match target {
            None => IbdDataset {
                dataset: data::load_features(path)?,
                targets: None,
            },
            Some(t) => {
                let raw = data::read_table(path)?;
                let (dataset, targets) = match label {
                    Some(_) => data::split_target(&raw, t, label)?,
                    None => data::split_numeric_target(&raw, t)
                        .or_else(|_| data::split_target(&raw, t, None))?,
                };
                IbdDataset {
                    dataset,
                    targets: Some(targets),
                }
            }
        };
        put(out, ds)
    })
}

/// Synthetic dataset: `xor`, `additive`, `grid4` or `product-noise`.
///
/// # Safety
/// `name` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_dataset_synth(
    name: *const c_char,
    n: usize,
    seed: u64,
    out: *mut *mut IbdDataset,
) -> IbdStatus {
    guard(|| {
        let (dataset, targets) = data::synth(str_arg(name, "name")?, n, seed)?;
        put(
            out,
            IbdDataset {
                dataset,
                targets: Some(targets),
            },
        )
    })
}

/// # Safety
/// `ds` must be a live dataset handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn ibd_dataset_shape(
    ds: *const IbdDataset,
    n_rows: *mut usize,
    n_features: *mut usize,
) -> IbdStatus {
    guard(|| {
        let ds = obj(ds, "dataset")?;
        if !n_rows.is_null() {
            *n_rows = ds.dataset.n_rows();
        }
        if !n_features.is_null() {
            *n_features = ds.dataset.n_features();
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ibd_dataset_free(ds: *mut IbdDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// ---- models

fn targets_of(ds: &IbdDataset) -> Result<&[f64], Failure> {
    ds.targets
        .as_deref()
        .ok_or_else(|| invalid("dataset has no target column"))
}

/// # Safety
/// `ds` must be a live dataset handle with targets; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_model_train_gbm(
    ds: *const IbdDataset,
    max_depth: usize,
    n_trees: usize,
    learning_rate: f64,
    min_leaf: usize,
    seed: u64,
    out: *mut *mut IbdModel,
) -> IbdStatus {
    guard(|| {
        let ds = obj(ds, "dataset")?;
        let params = GbmParams {
            max_depth,
            n_trees,
            learning_rate,
            min_leaf,
            seed,
        };
        let m = models::train_gbm(&ds.dataset, targets_of(ds)?, &params)?;
        put(out, IbdModel { handle: ModelHandle::new(m) })
    })
}

/// `mtry` 0 means `floor(sqrt(p))`.
///
/// # Safety
/// `ds` must be a live dataset handle with targets; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_model_train_rf(
    ds: *const IbdDataset,
    n_trees: usize,
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    seed: u64,
    out: *mut *mut IbdModel,
) -> IbdStatus {
    guard(|| {
        let ds = obj(ds, "dataset")?;
        let params = ForestParams {
            n_trees,
            max_depth,
            min_leaf,
            mtry: (mtry > 0).then_some(mtry),
            seed,
        };
        let m = models::train_random_forest(&ds.dataset, targets_of(ds)?, &params)?;
        put(out, IbdModel { handle: ModelHandle::new(m) })
    })
}

/// # Safety
/// `ds` must be a live dataset handle with targets; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_model_train_linear(ds: *const IbdDataset, out: *mut *mut IbdModel) -> IbdStatus {
    guard(|| {
        let ds = obj(ds, "dataset")?;
        let m = models::train_linear(&ds.dataset, targets_of(ds)?)?;
        put(out, IbdModel { handle: ModelHandle::new(m) })
    })
}

/// # Safety
/// `path` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_model_load(path: *const c_char, out: *mut *mut IbdModel) -> IbdStatus {
    guard(|| {
        let handle = models::load_model(Path::new(str_arg(path, "path")?))?;
        put(out, IbdModel { handle })
    })
}

/// # Safety
/// `model` must be a live handle; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn ibd_model_save(model: *const IbdModel, path: *const c_char) -> IbdStatus {
    guard(|| {
        let model = obj(model, "model")?;
        models::save_model(&model.handle, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

struct CallbackModel {
    info: ModelInfo,
    score: unsafe extern "C" fn(*const f64, usize, usize, *mut f64, *mut c_void) -> c_int,
    user_data: *mut c_void,
}

// The caller promises the callback may be invoked from any thread.
unsafe impl Send for CallbackModel {}
unsafe impl Sync for CallbackModel {}

impl Model for CallbackModel {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![f64::NAN; rows.n_rows()];
        let rc = unsafe {
            (self.score)(
                rows.as_slice().as_ptr(),
                rows.n_rows(),
                rows.n_cols(),
                out.as_mut_ptr(),
                self.user_data,
            )
        };
        if rc != 0 {
            return Err(ModelError::Other(format!("scoring callback returned {rc}")));
        }
        Ok(out)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Wraps a C scoring function as a model. Categorical cells arrive as level
/// indices into the sorted level list.
///
/// # Safety
/// `score` must stay callable and `user_data` valid for the model's life.
#[no_mangle]
pub unsafe extern "C" fn ibd_model_from_callback(
    name: *const c_char,
    score: IbdScoreFn,
    user_data: *mut c_void,
    out: *mut *mut IbdModel,
) -> IbdStatus {
    guard(|| {
        let name = opt_str_arg(name, "name")?.unwrap_or("callback");
        let score = score.ok_or_else(|| null("score"))?;
        let m = CallbackModel {
            info: ModelInfo::new(name, "callback"),
            score,
            user_data,
        };
        put(out, IbdModel { handle: ModelHandle::new(m) })
    })
}

/// Scores every row of `ds` into `out`, which must hold `len >= n_rows`
/// values.
///
/// # Safety
/// Handles must be live; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ibd_model_predict(
    model: *const IbdModel,
    ds: *const IbdDataset,
    out: *mut f64,
    len: usize,
) -> IbdStatus {
    guard(|| {
        let model = obj(model, "model")?;
        let ds = obj(ds, "dataset")?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let n = ds.dataset.n_rows();
        if len < n {
            return Err(invalid(format!("output buffer holds {len} values, need {n}")));
        }
        let scores = model.handle.score(&ds.dataset.to_rows())?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&scores);
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ibd_model_free(model: *mut IbdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---- explanations

#[no_mangle]
pub extern "C" fn ibd_explain_options_default() -> IbdExplainOptions {
    IbdExplainOptions {
        interaction_preference: 1.0,
        max_rows: DEFAULT_MAX_ROWS,
        seed: 0,
        workers: 1,
    }
}

unsafe fn explainer(
    model: *const IbdModel,
    ds: *const IbdDataset,
    row: usize,
    options: *const IbdExplainOptions,
) -> Result<Explainer, Failure> {
    let model = obj(model, "model")?;
    let ds = obj(ds, "dataset")?;
    let o = match options.as_ref() {
        Some(o) => *o,
        None => ibd_explain_options_default(),
    };
    let config = ExplainConfig {
        interaction_preference: o.interaction_preference,
        max_rows: (o.max_rows > 0).then_some(o.max_rows),
        seed: o.seed,
        workers: o.workers,
        ..ExplainConfig::default()
    };
    let observation = Observation::from_row(&ds.dataset, row)?;
    Ok(Explainer::new(&model.handle, &ds.dataset, &observation, &config)?)
}

/// Sequential explanation of row `row` of `ds`, with `ds` as background.
/// `options` may be null for defaults.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_explain(
    model: *const IbdModel,
    ds: *const IbdDataset,
    row: usize,
    options: *const IbdExplainOptions,
    out: *mut *mut IbdExplanation,
) -> IbdStatus {
    guard(|| {
        let explanation = explainer(model, ds, row, options)?.sequential()?;
        put(out, IbdExplanation { explanation })
    })
}

/// Additive explanation following `order`, a permutation of feature indices.
///
/// # Safety
/// Handles must be live; `order` must point to `order_len` values.
#[no_mangle]
pub unsafe extern "C" fn ibd_explain_with_order(
    model: *const IbdModel,
    ds: *const IbdDataset,
    row: usize,
    order: *const usize,
    order_len: usize,
    options: *const IbdExplainOptions,
    out: *mut *mut IbdExplanation,
) -> IbdStatus {
    guard(|| {
        if order.is_null() && order_len > 0 {
            return Err(null("order"));
        }
        let e = explainer(model, ds, row, options)?;
        let order = if order_len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(order, order_len).to_vec()
        };
        let order = FeatureOrder::new(order, e.n_features())?;
        let explanation = e.with_order(&order)?;
        put(out, IbdExplanation { explanation })
    })
}

/// Uncertainty report over `k` random orders, as JSON.
///
/// # Safety
/// Handles must be live; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_uncertainty_json(
    model: *const IbdModel,
    ds: *const IbdDataset,
    row: usize,
    k: usize,
    seed: u64,
    options: *const IbdExplainOptions,
    out_json: *mut *mut c_char,
) -> IbdStatus {
    guard(|| {
        let report = explainer(model, ds, row, options)?.uncertainty(k, seed)?;
        put_string(out_json, report.to_json())
    })
}

/// # Safety
/// `e` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn ibd_explanation_summary(
    e: *const IbdExplanation,
    baseline: *mut f64,
    prediction: *mut f64,
    n_steps: *mut usize,
    n_pairs: *mut usize,
) -> IbdStatus {
    guard(|| {
        let e = &obj(e, "explanation")?.explanation;
        if !baseline.is_null() {
            *baseline = e.baseline();
        }
        if !prediction.is_null() {
            *prediction = e.prediction();
        }
        if !n_steps.is_null() {
            *n_steps = e.steps().len();
        }
        if !n_pairs.is_null() {
            *n_pairs = e.pair_count();
        }
        Ok(())
    })
}

/// Per-feature attributions; fails when a pair step covers two features.
///
/// # Safety
/// `e` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ibd_explanation_per_feature(
    e: *const IbdExplanation,
    out: *mut f64,
    len: usize,
) -> IbdStatus {
    guard(|| {
        let e = &obj(e, "explanation")?.explanation;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let values = e
            .per_feature()
            .ok_or_else(|| invalid("explanation contains pair steps"))?;
        if len < values.len() {
            return Err(invalid(format!("output buffer holds {len} values, need {}", values.len())));
        }
        std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(&values);
        Ok(())
    })
}

/// # Safety
/// `e` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_explanation_to_json(e: *const IbdExplanation, out_json: *mut *mut c_char) -> IbdStatus {
    guard(|| put_string(out_json, obj(e, "explanation")?.explanation.to_json()))
}

/// Waterfall plot with default colors; `width` 0 keeps the default.
///
/// # Safety
/// `e` must be a live handle; `out_svg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ibd_explanation_to_svg(
    e: *const IbdExplanation,
    width: u32,
    out_svg: *mut *mut c_char,
) -> IbdStatus {
    guard(|| {
        let e = &obj(e, "explanation")?.explanation;
        let mut spec = RenderSpec::default();
        if width > 0 {
            spec.width = width;
        }
        put_string(out_svg, render::render_waterfall(e, &spec)?)
    })
}

/// # Safety
/// `e` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ibd_explanation_free(e: *mut IbdExplanation) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}
