//! C ABI over the `vclda` classifier.
//!
//! Models are opaque heap handles. Every fallible call returns a
//! [`VcldaStatus`]; on failure [`vclda_last_error`] returns a message for the
//! calling thread. Arrays are row-major `n × p` doubles. Strings returned by the
//! library are released with [`vclda_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::{ArrayView1, ArrayView2};
use vclda::{
    ClassifierModel, CvPlan, Dataset, FitConfig, IstaOptions, PriorMode, Regime, SplineBasis,
    VcldaError,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcldaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// Singular or ill-conditioned system, degenerate scale, or no feasible candidate.
    Numerical = 4,
    Io = 5,
    Parse = 6,
    Panic = 7,
}

/// Settings for [`vclda_fit`]. Obtain defaults from [`vclda_fit_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VcldaFitOptions {
    pub degree: usize,
    pub num_basis: usize,
    /// Group-lasso penalty, used when `high_dimensional` is nonzero.
    pub lambda: f64,
    /// 0: closed-form solve; nonzero: group-lasso ISTA.
    pub high_dimensional: i32,
    /// 0: equal priors; nonzero: priors estimated from class frequencies.
    pub estimated_prior: i32,
    pub max_iters: usize,
    pub kkt_tol: f64,
}

/// Fitted classifier handle.
pub struct VcldaModel {
    inner: ClassifierModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &VcldaError) -> VcldaStatus {
    match e {
        _ if e.is_numerical() => VcldaStatus::Numerical,
        VcldaError::DimensionMismatch(_) | VcldaError::InvalidDimension { .. } => {
            VcldaStatus::DimensionMismatch
        }
        VcldaError::Io(_) => VcldaStatus::Io,
        VcldaError::Parse { .. } | VcldaError::Format(_) | VcldaError::Json(_) => {
            VcldaStatus::Parse
        }
        _ => VcldaStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic for [`vclda_last_error`].
fn guard<F>(f: F) -> VcldaStatus
where
    F: FnOnce() -> Result<(), (VcldaStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VcldaStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VcldaStatus::Panic
        }
    }
}

fn lift(e: VcldaError) -> (VcldaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (VcldaStatus, String) {
    (VcldaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(
    model: *const VcldaModel,
) -> Result<&'a ClassifierModel, (VcldaStatus, String)> {
    model
        .as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| null("model"))
}

unsafe fn matrix<'a>(
    x: *const f64,
    n: usize,
    p: usize,
) -> Result<ArrayView2<'a, f64>, (VcldaStatus, String)> {
    if x.is_null() {
        return Err(null("x"));
    }
    Ok(ArrayView2::from_shape_ptr((n, p), x))
}

unsafe fn vector<'a, T>(
    v: *const T,
    n: usize,
    what: &str,
) -> Result<&'a [T], (VcldaStatus, String)> {
    if v.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(v, n))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, (VcldaStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path).to_str().map(Path::new).map_err(|_| {
        (
            VcldaStatus::InvalidArgument,
            "path is not valid UTF-8".into(),
        )
    })
}

fn store_model(model: ClassifierModel, out: *mut *mut VcldaModel) {
    let handle = Box::into_raw(Box::new(VcldaModel { inner: model }));
    // SAFETY: callers check `out` for null first
    unsafe { *out = handle };
}

fn regime_of(high: i32) -> Regime {
    if high != 0 {
        Regime::High
    } else {
        Regime::Low
    }
}

fn mode_of(estimated: i32) -> PriorMode {
    if estimated != 0 {
        PriorMode::Estimated
    } else {
        PriorMode::Equal
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vclda_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn vclda_fit_options_default() -> VcldaFitOptions {
    let d = FitConfig::default();
    VcldaFitOptions {
        degree: d.degree,
        num_basis: d.num_basis,
        lambda: d.lambda,
        high_dimensional: 0,
        estimated_prior: 0,
        max_iters: d.ista.max_iters,
        kkt_tol: d.ista.kkt_tol,
    }
}

/// Fits a model on `n` samples with `p` features. `x` is `n × p`, `u` and `y`
/// have length `n`, labels are 0 or 1. `options` may be null for defaults.
///
/// # Safety
/// All pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vclda_fit(
    x: *const f64,
    u: *const f64,
    y: *const u8,
    n: usize,
    p: usize,
    options: *const VcldaFitOptions,
    out: *mut *mut VcldaModel,
) -> VcldaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = matrix(x, n, p)?;
        let u = vector(u, n, "u")?;
        let y = vector(y, n, "y")?;
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| vclda_fit_options_default());
        let config = FitConfig {
            degree: opts.degree,
            num_basis: opts.num_basis,
            lambda: opts.lambda,
            regime: regime_of(opts.high_dimensional),
            mode: mode_of(opts.estimated_prior),
            ista: IstaOptions {
                max_iters: opts.max_iters,
                kkt_tol: opts.kkt_tol,
                ..IstaOptions::default()
            },
        };
        let (model, _) = ClassifierModel::fit(x, ArrayView1::from(u), y, &config).map_err(lift)?;
        store_model(model, out);
        Ok(())
    })
}

/// Selects basis size (and penalty when `high_dimensional` is nonzero) by
/// 5-fold cross-validation, then refits. The chosen values are written to
/// `selected_ln` / `selected_lambda` when those are non-null.
///
/// # Safety
/// As for [`vclda_fit`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn vclda_cross_validate(
    x: *const f64,
    u: *const f64,
    y: *const u8,
    n: usize,
    p: usize,
    high_dimensional: i32,
    estimated_prior: i32,
    seed: u64,
    out: *mut *mut VcldaModel,
    selected_ln: *mut usize,
    selected_lambda: *mut f64,
) -> VcldaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = matrix(x, n, p)?;
        let u = vector(u, n, "u")?;
        let y = vector(y, n, "y")?;
        let data =
            Dataset::new(x.to_owned(), ArrayView1::from(u).to_owned(), y.to_vec()).map_err(lift)?;
        let plan = CvPlan {
            seed,
            ..CvPlan::default()
        };
        let (model, _, cv) = vclda::fit_with_cv(
            &data,
            &plan,
            regime_of(high_dimensional),
            mode_of(estimated_prior),
        )
        .map_err(lift)?;
        if let Some(ln) = selected_ln.as_mut() {
            *ln = cv.best_ln;
        }
        if let Some(lambda) = selected_lambda.as_mut() {
            *lambda = cv.best_lambda;
        }
        store_model(model, out);
        Ok(())
    })
}

/// Writes `n` labels (0 or 1) for the rows of `x` into `labels`.
///
/// # Safety
/// `x` is `n × p`, `u` has length `n`, `labels` is writable for `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn vclda_predict(
    model: *const VcldaModel,
    x: *const f64,
    u: *const f64,
    n: usize,
    p: usize,
    labels: *mut u8,
) -> VcldaStatus {
    guard(|| {
        let model = model_ref(model)?;
        let x = matrix(x, n, p)?;
        let u = vector(u, n, "u")?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let predicted = model.predict_batch(x, ArrayView1::from(u)).map_err(lift)?;
        std::slice::from_raw_parts_mut(labels, n).copy_from_slice(&predicted);
        Ok(())
    })
}

/// Writes θ̂(u) into `out`, which must hold `len` = feature count doubles.
///
/// # Safety
/// `out` is writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vclda_eval_direction(
    model: *const VcldaModel,
    u: f64,
    out: *mut f64,
    len: usize,
) -> VcldaStatus {
    guard(|| {
        let model = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != model.num_features() {
            return Err((
                VcldaStatus::DimensionMismatch,
                format!(
                    "buffer holds {len}, model has {} features",
                    model.num_features()
                ),
            ));
        }
        let theta = model.eval_direction(u);
        std::slice::from_raw_parts_mut(out, len)
            .copy_from_slice(theta.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// Feature count of the model, or 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vclda_model_num_features(model: *const VcldaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_features())
}

/// Basis size of the model, or 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vclda_model_num_basis(model: *const VcldaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.basis().num_basis())
}

/// # Safety
/// `path` is a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn vclda_model_save(
    model: *const VcldaModel,
    path: *const c_char,
) -> VcldaStatus {
    guard(|| {
        let model = model_ref(model)?;
        model.save(path_arg(path)?).map_err(lift)
    })
}

/// # Safety
/// `path` is a NUL-terminated UTF-8 string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vclda_model_load(
    path: *const c_char,
    out: *mut *mut VcldaModel,
) -> VcldaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = ClassifierModel::load(path_arg(path)?).map_err(lift)?;
        store_model(model, out);
        Ok(())
    })
}

/// Serializes the model to a new string; free it with [`vclda_string_free`].
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vclda_model_to_json(
    model: *const VcldaModel,
    out: *mut *mut c_char,
) -> VcldaStatus {
    guard(|| {
        let model = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = model.to_json().map_err(lift)?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `json` is a NUL-terminated UTF-8 string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn vclda_model_from_json(
    json: *const c_char,
    out: *mut *mut VcldaModel,
) -> VcldaStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| {
            (
                VcldaStatus::InvalidArgument,
                "json is not valid UTF-8".into(),
            )
        })?;
        let model = ClassifierModel::from_json(text).map_err(lift)?;
        store_model(model, out);
        Ok(())
    })
}

/// # Safety
/// `s` is null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn vclda_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `model` is null or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn vclda_model_free(model: *mut VcldaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Evaluates the clamped uniform B-spline basis at `u`. Writes `num_basis`
/// values, multiplied by sqrt(num_basis) when `scaled` is nonzero.
///
/// # Safety
/// `out` is writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vclda_bspline_eval(
    degree: usize,
    num_basis: usize,
    u: f64,
    scaled: i32,
    out: *mut f64,
    len: usize,
) -> VcldaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if len != num_basis {
            return Err((
                VcldaStatus::DimensionMismatch,
                format!("buffer holds {len}, basis has {num_basis} functions"),
            ));
        }
        let basis = SplineBasis::new(degree, num_basis).map_err(lift)?;
        let values = if scaled != 0 {
            basis.eval_scaled(u)
        } else {
            basis.eval_unscaled(u)
        };
        std::slice::from_raw_parts_mut(out, len)
            .copy_from_slice(values.as_slice().expect("contiguous"));
        Ok(())
    })
}
