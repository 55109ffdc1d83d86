//! C ABI over the planar simulator and trained force policies.
//!
//! Handles are opaque and owned by the caller once created; release them with the
//! matching `*_free` function. Every fallible call returns an [`FsStatus`], and on
//! failure [`fs_last_error`] describes the cause for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use forcestrat::controller::deploy::{ModelPolicy, Policy};
use forcestrat::controller::Encoding;
use forcestrat::sim::{
    goal_distance, random_start, SimConfig, SimError, SimState, Simulator, Wrench,
};
use forcestrat::train::{load, Checkpoint, CheckpointError};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range, non-finite or not valid UTF-8.
    InvalidArgument = 2,
    /// A file could not be read.
    Io = 3,
    /// A config or checkpoint could not be parsed or is inconsistent.
    Format = 4,
    /// The simulation rejected a step.
    Simulation = 5,
    /// An internal invariant failed. The handle involved should be freed.
    Internal = 6,
}

/// How a policy encodes its feature history.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FsEncoding {
    /// Re-encode the recent window from a zero state on every call.
    SlidingWindow = 0,
    /// Carry the recurrent state across calls.
    Incremental = 1,
}

/// Snapshot of the simulated part.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FsState {
    /// Simulation time (s).
    pub t: f64,
    /// `x`, `z` (m) and `theta` (rad).
    pub pose: [f64; 3],
    /// `vx`, `vz` (m/s) and `omega` (rad/s).
    pub twist: [f64; 3],
    /// Environment reaction on the part during the last step: `fx`, `fz` (N), `tau` (N m).
    pub contact_wrench: [f64; 3],
    /// Distance of the part position to the goal (m).
    pub goal_distance: f64,
    pub in_contact: bool,
}

impl From<&SimState> for FsState {
    fn from(s: &SimState) -> Self {
        Self {
            t: s.t,
            pose: s.pose.to_array(),
            twist: s.twist.to_array(),
            contact_wrench: s.contact_wrench.to_array(),
            goal_distance: goal_distance(s),
            in_contact: s.in_contact,
        }
    }
}

/// Opaque simulator handle.
pub struct FsSim {
    sim: Simulator,
}

/// Opaque policy handle owning its checkpoint and random stream.
pub struct FsPolicy {
    policy: ModelPolicy<Checkpoint>,
    rng: ChaCha8Rng,
    prev: Option<(SimState, Wrench)>,
}

struct Failure(FsStatus, String);

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match e {
            SimError::Config(_) => FsStatus::Format,
            SimError::NonFinite(_) => FsStatus::Simulation,
        };
        Failure(status, e.to_string())
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        let status = match e {
            CheckpointError::Io { .. } => FsStatus::Io,
            _ => FsStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            FsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal error: {msg}"));
            FsStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn start_state(cfg: &SimConfig, seed: u64) -> Result<SimState, Failure> {
    Ok(random_start(cfg, &mut ChaCha8Rng::seed_from_u64(seed))?)
}

/// Message describing the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a simulator at a seeded random start pose.
///
/// `config_toml` is the text of a simulator config, or null for the defaults.
///
/// # Safety
/// `config_toml` must be null or a valid NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_sim_new(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut FsSim,
) -> FsStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let cfg = if config_toml.is_null() {
            SimConfig::default()
        } else {
            SimConfig::from_toml(str_arg(config_toml, "config_toml")?)?
        };
        let start = start_state(&cfg, seed)?;
        let sim = Simulator::new(cfg, start)?;
        *out = Box::into_raw(Box::new(FsSim { sim }));
        Ok(())
    })
}

/// Releases a simulator. Null is ignored.
///
/// # Safety
/// `sim` must be null or a handle from [`fs_sim_new`] that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn fs_sim_free(sim: *mut FsSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Moves the part to a new seeded random start pose at rest.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_sim_reset(sim: *mut FsSim, seed: u64) -> FsStatus {
    guard(|| {
        let sim = mut_arg(sim, "sim")?;
        let start = start_state(sim.sim.config(), seed)?;
        sim.sim.reset(start);
        Ok(())
    })
}

/// Copies the current state into `out`.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fs_sim_state(sim: *const FsSim, out: *mut FsState) -> FsStatus {
    guard(|| {
        let sim = ref_arg(sim, "sim")?;
        *mut_arg(out, "out")? = FsState::from(sim.sim.state());
        Ok(())
    })
}

/// Advances one step under the applied wrench `[fx, fz, tau]`, clamped to the
/// configured limits. Writes the new state to `out` unless it is null.
///
/// # Safety
/// `sim` must be a live handle, `wrench` must point to three doubles and `out`
/// must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn fs_sim_step(
    sim: *mut FsSim,
    wrench: *const f64,
    out: *mut FsState,
) -> FsStatus {
    guard(|| {
        let sim = mut_arg(sim, "sim")?;
        let w = ref_arg(wrench.cast::<[f64; 3]>(), "wrench")?;
        let state = sim.sim.step(&Wrench::from_array(*w))?;
        if let Some(out) = out.as_mut() {
            *out = FsState::from(state);
        }
        Ok(())
    })
}

/// Loads a checkpoint file as a policy sampling with `temperature` from a stream
/// seeded by `seed`. `encoding` is an [`FsEncoding`] value. Commands are clamped to the wrench limits of `sim`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string, `sim` a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn fs_policy_load(
    path: *const c_char,
    sim: *const FsSim,
    encoding: u32,
    temperature: f64,
    seed: u64,
    out: *mut *mut FsPolicy,
) -> FsStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let path = str_arg(path, "path")?;
        let sim = ref_arg(sim, "sim")?;
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Failure(
                FsStatus::InvalidArgument,
                format!("temperature {temperature} must be positive"),
            ));
        }
        let ckpt = load(Path::new(path))?;
        let encoding = match encoding {
            e if e == FsEncoding::SlidingWindow as u32 => Encoding::SlidingWindow,
            e if e == FsEncoding::Incremental as u32 => Encoding::Incremental,
            e => {
                return Err(Failure(
                    FsStatus::InvalidArgument,
                    format!("unknown encoding {e}"),
                ))
            }
        };
        let mut policy =
            ModelPolicy::new(ckpt, encoding, temperature, sim.sim.config().wrench_limits)?;
        policy.reset(sim.sim.state());
        *out = Box::into_raw(Box::new(FsPolicy {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            prev: None,
        }));
        Ok(())
    })
}

/// Releases a policy. Null is ignored.
///
/// # Safety
/// `policy` must be null or a handle from [`fs_policy_load`] that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn fs_policy_free(policy: *mut FsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Starts a new episode from the current state of `sim`.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn fs_policy_reset(policy: *mut FsPolicy, sim: *const FsSim) -> FsStatus {
    guard(|| {
        let policy = mut_arg(policy, "policy")?;
        let sim = ref_arg(sim, "sim")?;
        policy.policy.reset(sim.sim.state());
        policy.prev = None;
        Ok(())
    })
}

/// Samples the next reference wrench for the current state of `sim` into
/// `out[0..3]`. Call once per model tick; the state and command of the previous
/// call form the newest history entry.
///
/// # Safety
/// Both handles must be live and `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fs_policy_act(
    policy: *mut FsPolicy,
    sim: *const FsSim,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        let policy = mut_arg(policy, "policy")?;
        let sim = ref_arg(sim, "sim")?;
        let out = mut_arg(out.cast::<[f64; 3]>(), "out")?;
        let now = *sim.sim.state();
        let prev = policy.prev.as_ref().map(|(s, w)| (s, w));
        let w = policy.policy.act(prev, &now, &mut policy.rng);
        policy.prev = Some((now, w));
        *out = w.to_array();
        Ok(())
    })
}
