//! C ABI over the tomplan planners and simulator.
//!
//! Every fallible call returns a [`TomplanStatus`]; on failure the message is
//! kept per thread and read with [`tomplan_last_error_message`]. Strings
//! handed out by the library are owned by the caller and released with
//! [`tomplan_string_free`]. Handles are released with their `_free` function;
//! passing NULL to any `_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tomplan::belief::{Categorical, FactoredBelief};
use tomplan::harness::{run_batch, run_episode, Condition, HarnessError, RunConfig, Simulation};
use tomplan::model::{build_collision_model, build_foraging_model, AgentRole, GenerativeModel, Task};
use tomplan::si::{plan_values, PlannerConfig};
use tomplan::PlanError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TomplanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    PlanError = 5,
    EpisodeDone = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TomplanTask {
    Collision = 0,
    Foraging = 1,
}

impl From<TomplanTask> for Task {
    fn from(t: TomplanTask) -> Self {
        match t {
            TomplanTask::Collision => Task::Collision,
            TomplanTask::Foraging => Task::Foraging,
        }
    }
}

/// A run configuration.
pub struct TomplanConfig(RunConfig);

/// An episode in progress.
pub struct TomplanSimulation(Simulation);

/// A generative model.
pub struct TomplanModel(GenerativeModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TomplanStatus, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Parse(_) | HarnessError::Json(_) => TomplanStatus::ParseError,
            HarnessError::Config(_) | HarnessError::Model(_) => TomplanStatus::InvalidArgument,
            HarnessError::Env(tomplan::env::EnvError::TerminalState) => TomplanStatus::EpisodeDone,
            HarnessError::Plan(_) => TomplanStatus::PlanError,
            _ => TomplanStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        Failure(TomplanStatus::PlanError, e.to_string())
    }
}

fn fail<T>(status: TomplanStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TomplanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TomplanStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TomplanStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(TomplanStatus::NullPointer, format!("{name} is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(TomplanStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .map_or_else(|| fail(TomplanStatus::NullPointer, format!("{name} is NULL")), Ok)
}

unsafe fn mut_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .map_or_else(|| fail(TomplanStatus::NullPointer, format!("{name} is NULL")), Ok)
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = mut_arg(out, "output pointer")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let slot = mut_arg(out, "output pointer")?;
    let c = CString::new(s).or_else(|_| fail(TomplanStatus::Internal, "string contains NUL"))?;
    *slot = c.into_raw();
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string(v).or_else(|e| fail(TomplanStatus::Internal, e.to_string()))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version, static storage; do not free.
#[no_mangle]
pub extern "C" fn tomplan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or NULL after a
/// successful call. Free with `tomplan_string_free`.
#[no_mangle]
pub extern "C" fn tomplan_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// # Safety
/// `s` is NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tomplan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Bundled configuration for `task`; with `tom`, red plans with theory of mind.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_config_preset(
    task: TomplanTask,
    tom: bool,
    out: *mut *mut TomplanConfig,
) -> TomplanStatus {
    guard(|| {
        let condition = if tom { Condition::Tom } else { Condition::NonTom };
        put(out, TomplanConfig(RunConfig::preset(task.into(), condition)))
    })
}

/// # Safety
/// `text` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_config_from_toml(text: *const c_char, out: *mut *mut TomplanConfig) -> TomplanStatus {
    guard(|| {
        let cfg = RunConfig::from_toml(str_arg(text, "text")?)?;
        put(out, TomplanConfig(cfg))
    })
}

/// # Safety
/// `config` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_config_to_toml(config: *const TomplanConfig, out: *mut *mut c_char) -> TomplanStatus {
    guard(|| put_string(out, ref_arg(config, "config")?.0.to_toml()))
}

/// Replaces the seed list used by `tomplan_run_batch`.
///
/// # Safety
/// `config` is a live handle; `seeds` points to `count` values.
#[no_mangle]
pub unsafe extern "C" fn tomplan_config_set_seeds(
    config: *mut TomplanConfig,
    seeds: *const u64,
    count: usize,
) -> TomplanStatus {
    guard(|| {
        let cfg = mut_arg(config, "config")?;
        if count == 0 {
            return fail(TomplanStatus::InvalidArgument, "at least one seed is required");
        }
        if seeds.is_null() {
            return fail(TomplanStatus::NullPointer, "seeds is NULL");
        }
        cfg.0.seeds = std::slice::from_raw_parts(seeds, count).to_vec();
        Ok(())
    })
}

/// # Safety
/// `config` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tomplan_config_free(config: *mut TomplanConfig) {
    free(config);
}

/// Runs one episode; writes its outcome as JSON.
///
/// # Safety
/// `config` is a live handle; `out_json` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_run_episode(
    config: *const TomplanConfig,
    seed: u64,
    out_json: *mut *mut c_char,
) -> TomplanStatus {
    guard(|| {
        let ep = run_episode(&ref_arg(config, "config")?.0, seed)?;
        put_string(out_json, json(&ep.outcome)?)
    })
}

/// Runs every configured seed; writes `{"metrics": .., "outcomes": [..]}`.
///
/// # Safety
/// `config` is a live handle; `out_json` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_run_batch(config: *const TomplanConfig, out_json: *mut *mut c_char) -> TomplanStatus {
    guard(|| {
        let report = run_batch(&ref_arg(config, "config")?.0)?;
        put_string(out_json, json(&report)?)
    })
}

/// # Safety
/// `config` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_simulation_new(
    config: *const TomplanConfig,
    seed: u64,
    out: *mut *mut TomplanSimulation,
) -> TomplanStatus {
    guard(|| {
        let sim = Simulation::new(&ref_arg(config, "config")?.0, seed)?;
        put(out, TomplanSimulation(sim))
    })
}

/// Advances one joint step. Returns `EpisodeDone` once the episode is over.
/// When `out_record_json` is not NULL it receives the step record.
///
/// # Safety
/// `sim` is a live handle; `out_record_json` is NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_simulation_step(
    sim: *mut TomplanSimulation,
    out_record_json: *mut *mut c_char,
) -> TomplanStatus {
    guard(|| {
        let record = json(mut_arg(sim, "sim")?.0.step()?)?;
        if !out_record_json.is_null() {
            put_string(out_record_json, record)?;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` is a live handle; `out_done` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_simulation_is_done(
    sim: *const TomplanSimulation,
    out_done: *mut bool,
) -> TomplanStatus {
    guard(|| {
        *mut_arg(out_done, "out_done")? = ref_arg(sim, "sim")?.0.is_done();
        Ok(())
    })
}

/// Current cells of red and purple.
///
/// # Safety
/// `sim` is a live handle; `out_cells` points to two writable values.
#[no_mangle]
pub unsafe extern "C" fn tomplan_simulation_cells(
    sim: *const TomplanSimulation,
    out_cells: *mut usize,
) -> TomplanStatus {
    guard(|| {
        let state = ref_arg(sim, "sim")?.0.state();
        if out_cells.is_null() {
            return fail(TomplanStatus::NullPointer, "out_cells is NULL");
        }
        let out = std::slice::from_raw_parts_mut(out_cells, 2);
        out[0] = state.agents[0].cell;
        out[1] = state.agents[1].cell;
        Ok(())
    })
}

/// Outcome so far (final once the episode is done), as JSON.
///
/// # Safety
/// `sim` is a live handle; `out_json` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_simulation_outcome(
    sim: *const TomplanSimulation,
    out_json: *mut *mut c_char,
) -> TomplanStatus {
    guard(|| put_string(out_json, json(&ref_arg(sim, "sim")?.0.outcome())?))
}

/// # Safety
/// `sim` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tomplan_simulation_free(sim: *mut TomplanSimulation) {
    free(sim);
}

/// Model from its JSON form. Structural problems are reported by
/// `tomplan_model_validate`, not here.
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_model_from_json(text: *const c_char, out: *mut *mut TomplanModel) -> TomplanStatus {
    guard(|| {
        let model = GenerativeModel::from_json(str_arg(text, "text")?)
            .or_else(|e| fail(TomplanStatus::ParseError, e.to_string()))?;
        put(out, TomplanModel(model))
    })
}

/// Bundled task model. `cell` is the goal (collision) or start (foraging);
/// with `of_other` the model is the one attributed to the other agent.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_model_build(
    task: TomplanTask,
    of_other: bool,
    cell: usize,
    out: *mut *mut TomplanModel,
) -> TomplanStatus {
    guard(|| {
        let role = if of_other { AgentRole::Other } else { AgentRole::Focal };
        let model = match task {
            TomplanTask::Collision => build_collision_model(role, cell),
            TomplanTask::Foraging => build_foraging_model(role, cell),
        }
        .or_else(|e| fail(TomplanStatus::InvalidArgument, e.to_string()))?;
        put(out, TomplanModel(model))
    })
}

/// # Safety
/// `model` is a live handle; `out_json` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_model_to_json(
    model: *const TomplanModel,
    out_json: *mut *mut c_char,
) -> TomplanStatus {
    guard(|| {
        let text = ref_arg(model, "model")?
            .0
            .to_json()
            .or_else(|e| fail(TomplanStatus::Internal, e.to_string()))?;
        put_string(out_json, text)
    })
}

/// Writes the number of problems found to `out_count` and, when there are
/// any, sets the last error to their description.
///
/// # Safety
/// `model` is a live handle; `out_count` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tomplan_model_validate(model: *const TomplanModel, out_count: *mut usize) -> TomplanStatus {
    let mut report = String::new();
    let status = guard(|| {
        let violations = ref_arg(model, "model")?.0.validate();
        *mut_arg(out_count, "out_count")? = violations.len();
        report = violations
            .iter()
            .map(|v| format!("{}: {}", v.location, v.message))
            .collect::<Vec<_>>()
            .join("; ");
        Ok(())
    });
    if status == TomplanStatus::Ok && !report.is_empty() {
        set_error(&report);
    }
    status
}

/// # Safety
/// `model` is a live handle and all output pointers are valid.
#[no_mangle]
pub unsafe extern "C" fn tomplan_model_shape(
    model: *const TomplanModel,
    out_factors: *mut usize,
    out_beliefs_len: *mut usize,
    out_actions: *mut usize,
) -> TomplanStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        *mut_arg(out_factors, "out_factors")? = m.factor_count();
        *mut_arg(out_beliefs_len, "out_beliefs_len")? = m.cardinalities().iter().sum();
        *mut_arg(out_actions, "out_actions")? = m.action_count();
        Ok(())
    })
}

/// Sophisticated-inference plan from `belief`, the factor marginals laid end
/// to end in factor order. Writes the action posterior and expected free
/// energy per action; both buffers hold `actions` values.
///
/// # Safety
/// `model` is a live handle; `belief` points to `belief_len` values; both
/// output buffers hold `actions` values.
#[no_mangle]
pub unsafe extern "C" fn tomplan_si_plan(
    model: *const TomplanModel,
    belief: *const f64,
    belief_len: usize,
    horizon: usize,
    pruning: bool,
    out_posterior: *mut f64,
    out_efe: *mut f64,
    actions: usize,
) -> TomplanStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        if belief.is_null() || out_posterior.is_null() || out_efe.is_null() {
            return fail(TomplanStatus::NullPointer, "belief and output buffers must not be NULL");
        }
        let cards = m.cardinalities();
        if belief_len != cards.iter().sum::<usize>() {
            return fail(
                TomplanStatus::InvalidArgument,
                format!(
                    "belief length {belief_len}, model needs {}",
                    cards.iter().sum::<usize>()
                ),
            );
        }
        if actions < m.action_count() {
            return fail(
                TomplanStatus::BufferTooSmall,
                format!("output buffers hold {actions}, model has {} actions", m.action_count()),
            );
        }
        let flat = std::slice::from_raw_parts(belief, belief_len);
        let mut factors = Vec::with_capacity(cards.len());
        let mut at = 0;
        for (i, &n) in cards.iter().enumerate() {
            let c = Categorical::new(flat[at..at + n].to_vec())
                .or_else(|e| fail(TomplanStatus::InvalidArgument, format!("belief factor {i}: {e}")))?;
            factors.push(c);
            at += n;
        }
        let cfg = PlannerConfig {
            horizon,
            pruning,
            ..PlannerConfig::default()
        };
        let (q, g) = plan_values(&FactoredBelief::new(factors), m, &cfg)?;
        std::slice::from_raw_parts_mut(out_posterior, q.len()).copy_from_slice(q.probs());
        std::slice::from_raw_parts_mut(out_efe, g.len()).copy_from_slice(&g);
        Ok(())
    })
}

/// # Safety
/// `model` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tomplan_model_free(model: *mut TomplanModel) {
    free(model);
}
