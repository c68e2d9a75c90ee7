//! C ABI over the retlab core.
//!
//! Conventions:
//! - Handles (`RlModel`) are opaque; create/destroy through the paired
//!   `rl_*_load` / `rl_*_free` calls. Passing a handle after freeing it is
//!   undefined behavior, as in any C library.
//! - Fallible calls return an [`RlStatus`]; on anything but `RL_STATUS_OK`
//!   a thread-local message is readable via [`rl_last_error_message`].
//! - `char*` values *returned* by the library (not the error message) are
//!   owned by the caller and released with [`rl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::path::PathBuf;
use std::ptr;

use retlab::checkpoint::{load_checkpoint, CheckpointError};
use retlab::model::{ForwardOpts, Model};
use retlab::seeds::{derive_seed, DOM_VAL_DATA};
use retlab::task::{gen_batch, TaskConfig};
use retlab::tensor::Tensor;
use retlab::train::evaluate;

/// Result of every fallible `rl_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument value was rejected (bad UTF-8, bad shape, bad config).
    InvalidArgument = 2,
    /// The file could not be read or written.
    Io = 3,
    /// The file was read but its contents are not a valid artifact.
    Corrupt = 4,
    /// The computation produced non-finite values.
    Numerics = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: RlStatus, msg: impl Display) -> RlStatus {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(CString::new(text).expect("NULs stripped"));
    });
    status
}

fn checkpoint_status(e: &CheckpointError) -> RlStatus {
    // Io covers missing/unreadable files; everything else means the bytes
    // were read but did not form a checkpoint.
    match e {
        CheckpointError::Io(_) => RlStatus::Io,
        _ => RlStatus::Corrupt,
    }
}

/// Message for the most recent failure on this thread, or null if no
/// `rl_*` call has failed yet. Valid until the next failing call on the
/// same thread; do not free it.
#[no_mangle]
pub extern "C" fn rl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |s| s.as_ptr())
    })
}

/// Library version as a static string; do not free it.
#[no_mangle]
pub extern "C" fn rl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be a pointer previously returned by an `rl_*` call that
/// documents caller ownership, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// A loaded model checkpoint together with its task description.
pub struct RlModel {
    model: Model<f32>,
    task: TaskConfig,
    epoch: u64,
    step: u64,
}

unsafe fn cstr_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, RlStatus> {
    if s.is_null() {
        return Err(fail(RlStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(RlStatus::InvalidArgument, format!("{what} is not UTF-8: {e}")))
}

/// Load a model checkpoint from `path` into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_model_load(path: *const c_char, out: *mut *mut RlModel) -> RlStatus {
    if out.is_null() {
        return fail(RlStatus::NullArgument, "out is null");
    }
    *out = ptr::null_mut();
    let path = match cstr_arg(path, "path") {
        Ok(p) => PathBuf::from(p),
        Err(status) => return status,
    };
    match load_checkpoint(&path) {
        Ok(ckpt) => {
            *out = Box::into_raw(Box::new(RlModel {
                model: ckpt.model,
                task: ckpt.task,
                epoch: ckpt.epoch,
                step: ckpt.step,
            }));
            RlStatus::Ok
        }
        Err(e) => fail(checkpoint_status(&e), format!("{}: {e}", path.display())),
    }
}

/// Destroy a model handle. Null is a no-op.
///
/// # Safety
/// `model` must come from [`rl_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rl_model_free(model: *mut RlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Describe the model and its task as a JSON string (layers, heads,
/// dimensions, task shape, training position). Free with
/// [`rl_string_free`].
///
/// # Safety
/// `model` must be a live handle from [`rl_model_load`].
#[no_mangle]
pub unsafe extern "C" fn rl_model_info_json(model: *const RlModel) -> *mut c_char {
    let Some(m) = model.as_ref() else {
        fail(RlStatus::NullArgument, "model is null");
        return ptr::null_mut();
    };
    let info = serde_json::json!({
        "layers": m.model.config.layers,
        "heads_per_layer": m.model.config.heads_per_layer,
        "residual_dim": m.model.config.residual_dim,
        "input_dim": m.model.config.input_dim,
        "output_dim": m.model.config.output_dim,
        "task": m.task,
        "epoch": m.epoch,
        "step": m.step,
    });
    CString::new(info.to_string()).expect("JSON has no NULs").into_raw()
}

/// Sequence length the model's task produces (rows expected by
/// [`rl_model_forward`]); 0 on a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rl_model_seq_len(model: *const RlModel) -> usize {
    model.as_ref().map_or(0, |m| m.task.seq_len())
}

/// Input width expected by [`rl_model_forward`]; 0 on a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rl_model_input_dim(model: *const RlModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.input_dim)
}

/// Output width written by [`rl_model_forward`]; 0 on a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rl_model_output_dim(model: *const RlModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.output_dim)
}

/// Run the model on one encoded sequence of `rows` x `cols` f32 values
/// (row-major). Writes the `n_queries` x output_dim prediction matrix to
/// `out`, which must hold `out_capacity` >= n_queries * output_dim floats.
///
/// # Safety
/// `inputs` must point to `rows * cols` floats, `out` to `out_capacity`
/// floats, and `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rl_model_forward(
    model: *const RlModel,
    inputs: *const f32,
    rows: usize,
    cols: usize,
    n_queries: usize,
    out: *mut f32,
    out_capacity: usize,
) -> RlStatus {
    let Some(m) = model.as_ref() else {
        return fail(RlStatus::NullArgument, "model is null");
    };
    if inputs.is_null() || out.is_null() {
        return fail(RlStatus::NullArgument, "inputs/out is null");
    }
    if rows == 0 || cols == 0 {
        return fail(RlStatus::InvalidArgument, "inputs must be non-empty");
    }
    let needed = n_queries * m.model.config.output_dim;
    if out_capacity < needed {
        return fail(
            RlStatus::InvalidArgument,
            format!("out_capacity {out_capacity} < required {needed}"),
        );
    }
    let data = std::slice::from_raw_parts(inputs, rows * cols);
    let tensor = match Tensor::from_vec(&[rows, cols], data.to_vec()) {
        Ok(t) => t,
        Err(e) => return fail(RlStatus::InvalidArgument, e),
    };
    let fwd = match m.model.forward(&tensor, n_queries, &ForwardOpts::default()) {
        Ok(f) => f,
        Err(e) => return fail(RlStatus::Numerics, e),
    };
    let pred = fwd.graph.value(fwd.output);
    let values = pred.data();
    debug_assert_eq!(values.len(), needed);
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, needed.min(values.len()));
    RlStatus::Ok
}

/// Evaluate mean validation MSE over `n_examples` freshly generated
/// examples (stream derived from `seed`), writing it to `*out_mse`.
///
/// # Safety
/// `model` must be a live handle and `out_mse` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_model_eval(
    model: *const RlModel,
    seed: u64,
    n_examples: usize,
    out_mse: *mut f64,
) -> RlStatus {
    let Some(m) = model.as_ref() else {
        return fail(RlStatus::NullArgument, "model is null");
    };
    if out_mse.is_null() {
        return fail(RlStatus::NullArgument, "out_mse is null");
    }
    if n_examples == 0 {
        return fail(RlStatus::InvalidArgument, "n_examples must be positive");
    }
    let examples = gen_batch(&m.task, derive_seed(seed, DOM_VAL_DATA, 0), n_examples);
    match evaluate(&m.model, &examples, &m.task) {
        Ok((mse, _partials)) => {
            *out_mse = mse;
            RlStatus::Ok
        }
        Err(e) => fail(RlStatus::Numerics, e),
    }
}

/// Minimum attention layers for retrieval depth `d` under the
/// information-flow model, written to `*out`. `d` must be >= 1.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_flow_min_layers(d: u64, out: *mut u32) -> RlStatus {
    if out.is_null() {
        return fail(RlStatus::NullArgument, "out is null");
    }
    if d == 0 {
        return fail(RlStatus::InvalidArgument, "d must be >= 1");
    }
    *out = retlab::flow::min_layers_closed_form(d);
    RlStatus::Ok
}

/// Upper bound ceil(log3(2d)) on the minimum depth, written to `*out`.
/// `d` must be >= 1.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rl_flow_theorem1_bound(d: u64, out: *mut u32) -> RlStatus {
    if out.is_null() {
        return fail(RlStatus::NullArgument, "out is null");
    }
    if d == 0 {
        return fail(RlStatus::InvalidArgument, "d must be >= 1");
    }
    *out = retlab::flow::theorem1_bound(d);
    RlStatus::Ok
}

/// Generate `examples` encoded examples for an N-chain, depth-D, K-dim
/// task and write them as a dataset container at `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rl_gen_dataset(
    path: *const c_char,
    n: usize,
    d: usize,
    k: usize,
    ic: bool,
    examples: usize,
    seed: u64,
) -> RlStatus {
    let path = match cstr_arg(path, "path") {
        Ok(p) => PathBuf::from(p),
        Err(status) => return status,
    };
    let task = TaskConfig {
        n,
        d,
        k,
        ic,
        seed,
        ..TaskConfig::default()
    };
    if let Err(e) = task.validate() {
        return fail(RlStatus::InvalidArgument, e);
    }
    let batch = gen_batch(&task, derive_seed(seed, retlab::seeds::DOM_TRAIN_DATA, 0), examples);
    match retlab::task::save_dataset(&path, &task, &batch) {
        Ok(()) => RlStatus::Ok,
        Err(e) => fail(RlStatus::Io, e),
    }
}
