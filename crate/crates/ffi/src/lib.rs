//! C interface to environments, the spectral oracle and config-driven runs.
//!
//! Every fallible function returns an [`EoStatus`]. On failure a message is
//! kept per thread and can be read with [`eo_last_error`] until the next
//! failing call on that thread. Handles are opaque and must be released with
//! their `_free` function. Passing a null handle or output pointer yields
//! [`EoStatus::NullPointer`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use eigenopt::config::RunConfig;
use eigenopt::env::{self, Environment};
use eigenopt::harness;
use eigenopt::rng::{self, Rng};
use eigenopt::spectral::{build_laplacian, eigendecompose, EigenSystem};
use eigenopt::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EoStatus {
    Ok = 0,
    ConfigError = 1,
    UsageError = 2,
    TrainingError = 3,
    InternalError = 4,
    Unsupported = 5,
    IoError = 6,
    NullPointer = 7,
    /// Output buffer shorter than required.
    BufferTooSmall = 8,
    Panic = 9,
    /// A run finished but some seeds failed.
    PartialFailure = 10,
}

impl From<&Error> for EoStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => EoStatus::ConfigError,
            Error::Usage(_) => EoStatus::UsageError,
            Error::Training(_) => EoStatus::TrainingError,
            Error::Internal(_) => EoStatus::InternalError,
            Error::Unsupported(_) => EoStatus::Unsupported,
            Error::Io(_) => EoStatus::IoError,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: EoStatus, msg: &str) -> EoStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), (EoStatus, String)>) -> EoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EoStatus::Ok,
        Ok(Err((s, msg))) => fail(s, &msg),
        Err(_) => fail(EoStatus::Panic, "panic inside eigenopt"),
    }
}

fn lib(e: Error) -> (EoStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (EoStatus, String) {
    (EoStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (EoStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (EoStatus::UsageError, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (EoStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Most recent error message on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eo_version() -> *const c_char {
    static VERSION: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    VERSION.get_or_init(|| CString::new(harness::version()).unwrap_or_default()).as_ptr()
}

/// An environment plus its own random stream.
pub struct EoEnv {
    env: Environment,
    rng: Rng,
}

/// Create a built-in environment. Stochastic steps draw from a stream
/// derived from `seed`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eo_env_new(name: *const c_char, seed: u64, out_env: *mut *mut EoEnv) -> EoStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let slot = out(out_env, "out_env")?;
        let env = env::make_env(name).map_err(lib)?;
        *slot = Box::into_raw(Box::new(EoEnv { env, rng: rng::stream(seed, "env") }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`eo_env_new`] and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn eo_env_free(env: *mut EoEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eo_env_num_actions(env: *const EoEnv, out_n: *mut usize) -> EoStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        *out(out_n, "out_n")? = e.env.num_actions();
        Ok(())
    })
}

/// Number of tabular ids (an upper bound on state ids).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eo_env_num_states(env: *const EoEnv, out_n: *mut usize) -> EoStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        *out(out_n, "out_n")? = e.env.num_ids();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eo_env_feature_dim(env: *const EoEnv, out_n: *mut usize) -> EoStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        *out(out_n, "out_n")? = e.env.feature_dim();
        Ok(())
    })
}

/// Start a new episode and report the start state id.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eo_env_reset(env: *mut EoEnv, out_state: *mut usize) -> EoStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let slot = out(out_state, "out_state")?;
        *slot = e.env.reset().tabular_id;
        Ok(())
    })
}

/// Take one action. `out_done` is 1 when the episode ended (goal or step
/// cap), else 0. Any of the output pointers may be null.
///
/// # Safety
/// `env` must be valid; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn eo_env_step(
    env: *mut EoEnv,
    action: usize,
    out_state: *mut usize,
    out_reward: *mut f64,
    out_done: *mut c_int,
) -> EoStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let o = e.env.step(action, &mut e.rng).map_err(lib)?;
        if let Some(s) = out_state.as_mut() {
            *s = o.next_state.tabular_id;
        }
        if let Some(r) = out_reward.as_mut() {
            *r = o.reward;
        }
        if let Some(d) = out_done.as_mut() {
            *d = c_int::from(o.finished());
        }
        Ok(())
    })
}

/// Copy the observation of state `id` into `buf` (length `len`, at least
/// the feature dimension).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eo_env_features(env: *mut EoEnv, id: usize, buf: *mut f64, len: usize) -> EoStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if id >= e.env.num_ids() {
            return Err((EoStatus::UsageError, format!("state {id} out of range")));
        }
        let f = e.env.state(id).features;
        if len < f.len() {
            return Err((EoStatus::BufferTooSmall, format!("need {} doubles, got {len}", f.len())));
        }
        std::slice::from_raw_parts_mut(buf, f.len()).copy_from_slice(&f);
        Ok(())
    })
}

/// The `d` smallest Laplacian eigenpairs of an environment's state graph.
pub struct EoOracle {
    eig: EigenSystem,
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eo_oracle_new(env: *const EoEnv, d: usize, out_oracle: *mut *mut EoOracle) -> EoStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        let slot = out(out_oracle, "out_oracle")?;
        let lap = build_laplacian(&e.env).map_err(lib)?;
        let eig = eigendecompose(&lap, d, e.env.start_id()).map_err(lib)?;
        *slot = Box::into_raw(Box::new(EoOracle { eig }));
        Ok(())
    })
}

/// # Safety
/// `oracle` must come from [`eo_oracle_new`]. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn eo_oracle_free(oracle: *mut EoOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Number of graph vertices (reachable states).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eo_oracle_num_states(oracle: *const EoOracle, out_n: *mut usize) -> EoStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        *out(out_n, "out_n")? = o.eig.ids.len();
        Ok(())
    })
}

/// Eigenvalue `i`, 0-based ascending.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eo_oracle_eigenvalue(oracle: *const EoOracle, i: usize, out_value: *mut f64) -> EoStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        let v = *o.eig.eigenvalues.get(i).ok_or_else(|| (EoStatus::UsageError, format!("no eigenvalue {i}")))?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Eigenfunction `i` over the vertices, in the order given by
/// [`eo_oracle_state_ids`].
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn eo_oracle_eigenfunction(
    oracle: *const EoOracle,
    i: usize,
    buf: *mut f64,
    len: usize,
) -> EoStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        let f = o.eig.eigenfunctions.get(i).ok_or_else(|| (EoStatus::UsageError, format!("no eigenfunction {i}")))?;
        copy_out(f, buf, len)
    })
}

/// Tabular id of each vertex.
///
/// # Safety
/// `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn eo_oracle_state_ids(oracle: *const EoOracle, buf: *mut usize, len: usize) -> EoStatus {
    guard(|| {
        let o = oracle.as_ref().ok_or_else(|| null("oracle"))?;
        copy_out(&o.eig.ids, buf, len)
    })
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, len: usize) -> Result<(), (EoStatus, String)> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < src.len() {
        return Err((EoStatus::BufferTooSmall, format!("need {} values, got {len}", src.len())));
    }
    std::slice::from_raw_parts_mut(buf, src.len()).copy_from_slice(src);
    Ok(())
}

/// Run a config file with all its seeds and write its CSVs. Returns
/// [`EoStatus::PartialFailure`] if any seed failed; `out_failed` (may be
/// null) receives the number of failed seeds.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eo_run_config_file(path: *const c_char, out_failed: *mut usize) -> EoStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cfg = RunConfig::load(Path::new(path), &[]).map_err(lib)?;
        let report = harness::run_experiment(&cfg).map_err(lib)?;
        if let Some(n) = out_failed.as_mut() {
            *n = report.failures.len();
        }
        match report.failures.first() {
            None => Ok(()),
            Some((seed, msg)) => Err((EoStatus::PartialFailure, format!("seed {seed}: {msg}"))),
        }
    })
}
