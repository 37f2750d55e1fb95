//! C ABI over the attack framework.
//!
//! Conventions:
//! * objects are opaque handles created by `snia_*_new`-style functions
//!   and released with the matching `snia_*_free`;
//! * fallible calls return a [`SniaStatus`]; on failure,
//!   [`snia_last_error_message`] yields a description valid until the next
//!   failing call on the same thread;
//! * handles are not thread-safe; confine each to one thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use snia_core::baselines::{greedy_grad_attack, mostattr_attack, oneshot_grad_attack, random_attack, CleanPredictions};
use snia_core::env::AttackGoal;
use snia_core::graph::{io, Graph, InjectedGraph};
use snia_core::seeding::component_rng;
use snia_core::victim::{train_victim, GnnArchitecture, VictimModel};
use snia_core::SniaError;

/// Status code of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SniaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ValidationError = 4,
    TrainingError = 5,
    IoError = 6,
    InternalError = 7,
}

/// Baseline attacker selector for `snia_baseline_attack`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SniaAttacker {
    Random = 0,
    MostAttr = 1,
    OneShotGrad = 2,
    GreedyGrad = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let cstring = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &SniaError) -> SniaStatus {
    match err {
        SniaError::Parse { .. } => SniaStatus::ParseError,
        SniaError::Validation(_) | SniaError::Dimension { .. } | SniaError::Domain(_) => SniaStatus::ValidationError,
        SniaError::Training(_) => SniaStatus::TrainingError,
        SniaError::Io(_) | SniaError::MissingCheckpoint { .. } | SniaError::BadCheckpoint { .. } => SniaStatus::IoError,
        SniaError::Usage(_)
        | SniaError::MaskedAction { .. }
        | SniaError::EpisodeFinished { .. }
        | SniaError::DegenerateDistribution => SniaStatus::InvalidArgument,
    }
}

fn fail(err: SniaError) -> SniaStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn fail_null(what: &str) -> SniaStatus {
    set_error(format!("{what} must not be null"));
    SniaStatus::NullPointer
}

/// Message of the most recent failure on this thread, or null when the
/// last call succeeded. The pointer is valid until the next failing call.
#[no_mangle]
pub extern "C" fn snia_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.as_ptr(),
        None => ptr::null(),
    })
}

/// Opaque graph handle.
pub struct SniaGraph {
    inner: Graph,
}

/// Opaque trained-classifier handle.
pub struct SniaVictim {
    inner: VictimModel,
}

unsafe fn read_path(ptr: *const c_char, what: &str) -> Result<String, SniaStatus> {
    if ptr.is_null() {
        return Err(fail_null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| {
            set_error(format!("{what} is not valid UTF-8"));
            SniaStatus::InvalidArgument
        })
}

/// Load a prepared dataset directory (edges/features/labels/meta TSV) into
/// a graph handle.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must point to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn snia_graph_load(dir: *const c_char, out: *mut *mut SniaGraph) -> SniaStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let dir = match read_path(dir, "dir") {
        Ok(d) => d,
        Err(status) => return status,
    };
    match io::load_dataset(Path::new(&dir)) {
        Ok(graph) => {
            *out = Box::into_raw(Box::new(SniaGraph { inner: graph }));
            SniaStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Release a graph handle. Null is a no-op.
///
/// # Safety
/// `graph` must have come from [`snia_graph_load`] and not been freed.
#[no_mangle]
pub unsafe extern "C" fn snia_graph_free(graph: *mut SniaGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn snia_graph_num_nodes(graph: *const SniaGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.num_nodes())
}

/// Feature-dimension count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn snia_graph_num_features(graph: *const SniaGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.num_features())
}

/// Label count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn snia_graph_num_labels(graph: *const SniaGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.num_labels())
}

/// Undirected edge count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn snia_graph_num_edges(graph: *const SniaGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.num_edges())
}

/// Largest number of active features on any node (the default attack
/// budget), or 0 for a null handle.
///
/// # Safety
/// `graph` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn snia_graph_max_feature_budget(graph: *const SniaGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.max_feature_budget())
}

/// Train a victim on the dataset in `dataset_dir` (its splits are read
/// from `splits.tsv`). `arch` is one of gcn|sgc|surrogate|tagcn|gcnii.
///
/// # Safety
/// `graph` must be a live handle loaded from the same `dataset_dir`;
/// `dataset_dir` and `arch` must be NUL-terminated strings; `out` must
/// point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn snia_victim_train(
    graph: *const SniaGraph,
    dataset_dir: *const c_char,
    arch: *const c_char,
    seed: u64,
    out: *mut *mut SniaVictim,
) -> SniaStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let Some(graph) = graph.as_ref() else {
        return fail_null("graph");
    };
    let dir = match read_path(dataset_dir, "dataset_dir") {
        Ok(d) => d,
        Err(status) => return status,
    };
    let arch_name = match read_path(arch, "arch") {
        Ok(a) => a,
        Err(status) => return status,
    };
    let result = (|| {
        let arch = GnnArchitecture::from_name(&arch_name)?;
        let split = io::load_splits(Path::new(&dir), seed, &graph.inner)?;
        train_victim(&graph.inner, &split, &arch, seed)
    })();
    match result {
        Ok(model) => {
            *out = Box::into_raw(Box::new(SniaVictim { inner: model }));
            SniaStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Load a victim checkpoint trained on the given graph.
///
/// # Safety
/// `graph` must be a live handle; `path` must be a NUL-terminated string;
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn snia_victim_load(
    graph: *const SniaGraph,
    path: *const c_char,
    out: *mut *mut SniaVictim,
) -> SniaStatus {
    if out.is_null() {
        return fail_null("out");
    }
    let Some(graph) = graph.as_ref() else {
        return fail_null("graph");
    };
    let path = match read_path(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match VictimModel::load(Path::new(&path), &graph.inner) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(SniaVictim { inner: model }));
            SniaStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Save a victim checkpoint.
///
/// # Safety
/// `victim` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn snia_victim_save(victim: *const SniaVictim, path: *const c_char) -> SniaStatus {
    let Some(victim) = victim.as_ref() else {
        return fail_null("victim");
    };
    let path = match read_path(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match victim.inner.save(Path::new(&path)) {
        Ok(()) => SniaStatus::Ok,
        Err(err) => fail(err),
    }
}

/// Release a victim handle. Null is a no-op.
///
/// # Safety
/// `victim` must have come from a `snia_victim_*` constructor and not been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn snia_victim_free(victim: *mut SniaVictim) {
    if !victim.is_null() {
        drop(Box::from_raw(victim));
    }
}

/// Argmax accuracy of the victim over the given node ids.
///
/// # Safety
/// `victim` and `graph` must be live handles; `ids` must point to
/// `ids_len` readable node ids; `out` must be a writable f64 slot.
#[no_mangle]
pub unsafe extern "C" fn snia_victim_accuracy(
    victim: *const SniaVictim,
    graph: *const SniaGraph,
    ids: *const usize,
    ids_len: usize,
    out: *mut f64,
) -> SniaStatus {
    let Some(victim) = victim.as_ref() else {
        return fail_null("victim");
    };
    let Some(graph) = graph.as_ref() else {
        return fail_null("graph");
    };
    if ids.is_null() || out.is_null() {
        return fail_null("ids/out");
    }
    let ids = std::slice::from_raw_parts(ids, ids_len);
    if ids.iter().any(|&u| u >= graph.inner.num_nodes()) {
        set_error("node id out of range".into());
        return SniaStatus::InvalidArgument;
    }
    match victim.inner.accuracy(&graph.inner, ids) {
        Ok(acc) => {
            *out = acc;
            SniaStatus::Ok
        }
        Err(err) => fail(err),
    }
}

unsafe fn injected_from_raw<'g>(
    graph: &'g SniaGraph,
    target: usize,
    features: *const usize,
    features_len: usize,
) -> Result<InjectedGraph<'g>, SniaStatus> {
    if target >= graph.inner.num_nodes() {
        set_error(format!("target {target} out of range"));
        return Err(SniaStatus::InvalidArgument);
    }
    let feats = if features_len == 0 {
        &[]
    } else {
        if features.is_null() {
            return Err(fail_null("features"));
        }
        std::slice::from_raw_parts(features, features_len)
    };
    let mut ig = InjectedGraph::new(&graph.inner, target);
    for &f in feats {
        if f >= graph.inner.num_features() {
            set_error(format!("feature {f} out of range"));
            return Err(SniaStatus::InvalidArgument);
        }
        ig.add_feature(f);
    }
    Ok(ig)
}

/// Black-box query: probability that the victim assigns `label` to
/// `target` after injecting one node wired to `target` carrying the given
/// active features.
///
/// # Safety
/// Handles must be live; `features` must point to `features_len` readable
/// indices (may be null when the length is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn snia_query_target_prob(
    victim: *const SniaVictim,
    graph: *const SniaGraph,
    target: usize,
    label: usize,
    features: *const usize,
    features_len: usize,
    out: *mut f64,
) -> SniaStatus {
    let Some(victim) = victim.as_ref() else {
        return fail_null("victim");
    };
    let Some(graph) = graph.as_ref() else {
        return fail_null("graph");
    };
    if out.is_null() {
        return fail_null("out");
    }
    if label >= graph.inner.num_labels() {
        set_error(format!("label {label} out of range"));
        return SniaStatus::InvalidArgument;
    }
    let ig = match injected_from_raw(graph, target, features, features_len) {
        Ok(ig) => ig,
        Err(status) => return status,
    };
    match victim.inner.query_target_prob(&ig, label) {
        Ok(p) => {
            *out = p;
            SniaStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Run one baseline attack for the goal (`target`, `label`) and report the
/// selected features and whether the victim now predicts the targeted
/// label.
///
/// `grad_model` supplies gradients for the gradient-based attackers; pass
/// the victim itself for the white-box setting or a surrogate for the
/// black-box one (ignored by `Random`/`MostAttr`, may be null then).
/// `out_features` must have room for `budget` indices; `out_len` receives
/// the number written.
///
/// # Safety
/// Handles must be live; `out_features`, `out_len` and `out_success` must
/// be writable with the stated capacities.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn snia_baseline_attack(
    victim: *const SniaVictim,
    grad_model: *const SniaVictim,
    graph: *const SniaGraph,
    attacker: SniaAttacker,
    target: usize,
    label: usize,
    budget: usize,
    seed: u64,
    out_features: *mut usize,
    out_len: *mut usize,
    out_success: *mut bool,
) -> SniaStatus {
    let Some(victim) = victim.as_ref() else {
        return fail_null("victim");
    };
    let Some(graph) = graph.as_ref() else {
        return fail_null("graph");
    };
    if out_features.is_null() || out_len.is_null() || out_success.is_null() {
        return fail_null("out_features/out_len/out_success");
    }
    if target >= graph.inner.num_nodes() || label >= graph.inner.num_labels() {
        set_error("goal out of range".into());
        return SniaStatus::InvalidArgument;
    }
    if budget == 0 || budget > graph.inner.num_features() {
        set_error(format!("budget must be in [1, {}]", graph.inner.num_features()));
        return SniaStatus::InvalidArgument;
    }
    let goal = AttackGoal { target, label };
    let g = &graph.inner;
    let result = (|| {
        let ig = match attacker {
            SniaAttacker::Random => {
                let preds = CleanPredictions::compute(g, &victim.inner)?;
                let mut rng = component_rng(seed, "ffi-random");
                random_attack(g, &preds, goal, budget, &mut rng)
            }
            SniaAttacker::MostAttr => {
                let preds = CleanPredictions::compute(g, &victim.inner)?;
                mostattr_attack(g, &preds, goal, budget)
            }
            SniaAttacker::OneShotGrad | SniaAttacker::GreedyGrad => {
                let model = if grad_model.is_null() { &victim.inner } else { &(*grad_model).inner };
                if matches!(attacker, SniaAttacker::OneShotGrad) {
                    oneshot_grad_attack(g, model, goal, budget)?
                } else {
                    greedy_grad_attack(g, model, goal, budget)?
                }
            }
        };
        let row = victim.inner.query_target_row(&ig)?;
        Ok::<_, SniaError>((ig, row))
    })();
    match result {
        Ok((ig, row)) => {
            let feats = ig.injected_features();
            for (i, &f) in feats.iter().enumerate() {
                *out_features.add(i) = f;
            }
            *out_len = feats.len();
            *out_success = row.argmax() == label;
            SniaStatus::Ok
        }
        Err(err) => fail(err),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping_covers_error_kinds() {
        assert_eq!(status_of(&SniaError::Validation("x".into())), SniaStatus::ValidationError);
        assert_eq!(status_of(&SniaError::Usage("x".into())), SniaStatus::InvalidArgument);
        assert_eq!(
            status_of(&SniaError::Parse {
                path: "p".into(),
                line: 1,
                msg: "m".into()
            }),
            SniaStatus::ParseError
        );
    }
}
