//! C ABI for `kron-sgd`.
//!
//! Datasets and trainers are opaque heap handles created by `ks_*_new` /
//! `ks_dataset_*` constructors and released with the matching `*_free`.
//! Every fallible call returns a [`KsStatus`]; on failure a description is
//! available from [`ks_last_error_message`] on the same thread. Sample and
//! neuron indices are 1-based. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use kron_sgd::{
    default_tau, generate_synthetic, init_trainer, lambda_min_sym, BatchSampler, Error, KroneckerDataset,
    RealMatrix, TrainConfig, TrainerState,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// Opaque dataset handle.
pub struct KsDataset {
    inner: Arc<KroneckerDataset>,
}

/// Opaque trainer handle; owns its batch sampler.
pub struct KsTrainer {
    state: TrainerState,
    sampler: BatchSampler,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> KsStatus {
    match e {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::NotSymmetric { .. } => {
            KsStatus::InvalidArgument
        }
        Error::IndexOutOfRange { .. } => KsStatus::OutOfRange,
        Error::Parse { .. } => KsStatus::Parse,
        Error::Io { .. } => KsStatus::Io,
    }
}

struct Fail(KsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            KsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(KsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(KsStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, want: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err(Fail(
            KsStatus::InvalidArgument,
            format!("{what} has length {len}, expected {want}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn zero_based(index: usize, len: usize, what: &str) -> Result<usize, Fail> {
    if index == 0 || index > len {
        return Err(Fail(
            KsStatus::OutOfRange,
            format!("{what} index {index} out of range (valid: 1..={len})"),
        ));
    }
    Ok(index - 1)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ks_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn ks_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// `sqrt(ln(m) / 2)`.
#[no_mangle]
pub extern "C" fn ks_default_tau(m: usize) -> f64 {
    default_tau(m.max(1))
}

/// Generates a synthetic dataset with unit-norm samples and labels uniform
/// in `[-label_scale, label_scale]`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ks_dataset_generate(
    n: usize,
    p: usize,
    q: usize,
    seed: u64,
    label_scale: f64,
    symmetric: bool,
    out: *mut *mut KsDataset,
) -> KsStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let ds = generate_synthetic(n, p, q, seed, label_scale, symmetric)?;
        *out = Box::into_raw(Box::new(KsDataset { inner: Arc::new(ds) }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` as in [`ks_dataset_generate`].
#[no_mangle]
pub unsafe extern "C" fn ks_dataset_load(path: *const c_char, out: *mut *mut KsDataset) -> KsStatus {
    guard(|| {
        let out = as_mut(out, "out")?;
        let ds = KroneckerDataset::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(KsDataset { inner: Arc::new(ds) }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ks_dataset_save(ds: *const KsDataset, path: *const c_char) -> KsStatus {
    guard(|| {
        let ds = as_ref(ds, "dataset")?;
        ds.inner.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Writes `n`, `p` and `q`. Any output pointer may be NULL.
///
/// # Safety
/// `ds` must come from this library; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_dataset_dims(ds: *const KsDataset, n: *mut usize, p: *mut usize, q: *mut usize) -> KsStatus {
    guard(|| {
        let ds = as_ref(ds, "dataset")?;
        for (ptr, v) in [(n, ds.inner.n()), (p, ds.inner.p()), (q, ds.inner.q())] {
            if let Some(slot) = ptr.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// Releases a dataset. Trainers built from it stay valid. NULL is ignored.
///
/// # Safety
/// `ds` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ks_dataset_free(ds: *mut KsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Initializes a trainer of width `m`. A negative `tau` selects
/// `sqrt(ln(m) / 2)`. Batches are drawn from a sampler seeded with `seed`.
///
/// # Safety
/// `ds` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_new(
    ds: *const KsDataset,
    m: usize,
    tau: f64,
    seed: u64,
    out: *mut *mut KsTrainer,
) -> KsStatus {
    guard(|| {
        let ds = as_ref(ds, "dataset")?;
        let out = as_mut(out, "out")?;
        let tau = if tau < 0.0 { default_tau(m.max(1)) } else { tau };
        let state = init_trainer(Arc::clone(&ds.inner), m, tau, seed)?;
        *out = Box::into_raw(Box::new(KsTrainer {
            state,
            sampler: BatchSampler::new(seed),
        }));
        Ok(())
    })
}

/// # Safety
/// `tr` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_free(tr: *mut KsTrainer) {
    if !tr.is_null() {
        drop(Box::from_raw(tr));
    }
}

/// Runs the tree queries and updates on `workers` threads (1 = inline).
///
/// # Safety
/// `tr` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_set_workers(tr: *mut KsTrainer, workers: usize) -> KsStatus {
    guard(|| {
        let tr = as_mut(tr, "trainer")?;
        let state = tr.state.clone().with_workers(workers)?;
        tr.state = state;
        Ok(())
    })
}

/// One SGD step. `changed`, if non-NULL, receives the number of neurons
/// that fired on the batch.
///
/// # Safety
/// `tr` must come from this library; `changed` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_step(tr: *mut KsTrainer, eta: f64, s_batch: usize, changed: *mut usize) -> KsStatus {
    guard(|| {
        let tr = as_mut(tr, "trainer")?;
        let report = tr.state.step(eta, s_batch, &mut tr.sampler)?;
        if let Some(slot) = changed.as_mut() {
            *slot = report.changed.len();
        }
        Ok(())
    })
}

/// Runs `iters` steps; `final_loss`, if non-NULL, receives `||u - y||^2`.
///
/// # Safety
/// `tr` must come from this library; `final_loss` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_train(
    tr: *mut KsTrainer,
    eta: f64,
    s_batch: usize,
    iters: usize,
    final_loss: *mut f64,
) -> KsStatus {
    guard(|| {
        let tr = as_mut(tr, "trainer")?;
        let mut cfg = TrainConfig::new(eta, s_batch, iters);
        cfg.eval_every = 0;
        let traj = tr.state.train(&cfg, &mut tr.sampler)?;
        if let Some(slot) = final_loss.as_mut() {
            *slot = traj.final_loss().unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Completed steps.
///
/// # Safety
/// `tr` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_iteration(tr: *const KsTrainer, out: *mut usize) -> KsStatus {
    guard(|| {
        let tr = as_ref(tr, "trainer")?;
        *as_mut(out, "out")? = tr.state.t();
        Ok(())
    })
}

/// Writes the `n` current predictions into `out[0..len]`; `len` must be `n`.
///
/// # Safety
/// `tr` must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_predictions(tr: *const KsTrainer, out: *mut f64, len: usize) -> KsStatus {
    guard(|| {
        let tr = as_ref(tr, "trainer")?;
        let out = out_slice(out, len, tr.state.n(), "prediction buffer")?;
        out.copy_from_slice(&tr.state.predictions());
        Ok(())
    })
}

/// Writes the dense first-layer weights, row-major m×d (row `r` is neuron
/// `r`); `len` must be `m·d`.
///
/// # Safety
/// `tr` must come from this library; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_export_weights(tr: *const KsTrainer, out: *mut f64, len: usize) -> KsStatus {
    guard(|| {
        let tr = as_ref(tr, "trainer")?;
        let net = tr.state.export_network()?;
        let d = net.d();
        let out = out_slice(out, len, tr.state.m() * d, "weight buffer")?;
        for r in 0..tr.state.m() {
            out[r * d..(r + 1) * d].copy_from_slice(net.weight(r));
        }
        Ok(())
    })
}

/// Current `w_r^T x_i` for 1-based `sample` and `neuron`.
///
/// # Safety
/// `tr` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_leaf_value(tr: *const KsTrainer, sample: usize, neuron: usize, out: *mut f64) -> KsStatus {
    guard(|| {
        let tr = as_ref(tr, "trainer")?;
        let i = zero_based(sample, tr.state.n(), "sample")?;
        let r = zero_based(neuron, tr.state.m(), "neuron")?;
        *as_mut(out, "out")? = tr.state.leaf_value(i, r)?;
        Ok(())
    })
}

/// `||w_r(t) - w_r(0)||_2` for 1-based `neuron`.
///
/// # Safety
/// `tr` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_trainer_weight_movement(tr: *const KsTrainer, neuron: usize, out: *mut f64) -> KsStatus {
    guard(|| {
        let tr = as_ref(tr, "trainer")?;
        let r = zero_based(neuron, tr.state.m(), "neuron")?;
        *as_mut(out, "out")? = tr.state.weight_movement(r)?;
        Ok(())
    })
}

/// Smallest eigenvalue of the symmetric row-major `n×n` matrix `m`.
///
/// # Safety
/// `m` must hold `n·n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ks_lambda_min(m: *const f64, n: usize, out: *mut f64) -> KsStatus {
    guard(|| {
        if m.is_null() {
            return Err(null("matrix"));
        }
        if n == 0 {
            return Err(Fail(KsStatus::InvalidArgument, "matrix must be at least 1x1".into()));
        }
        let out = as_mut(out, "out")?;
        let data = std::slice::from_raw_parts(m, n * n);
        // Row-major input; the transpose of a symmetric matrix is itself, and
        // the solver rejects anything that is not symmetric.
        let mat = RealMatrix::from_col_major(n, n, data.to_vec())?;
        *out = lambda_min_sym(&mat)?;
        Ok(())
    })
}
