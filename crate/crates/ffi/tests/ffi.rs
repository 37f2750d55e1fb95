//! Exercises the C ABI from Rust: handle lifecycle, status codes, and
//! agreement with the core API.

use std::ffi::CString;
use std::ptr;

use snia_core::graph::{io, make_splits, Graph};
use snia_ffi::*;

fn toy_dataset(dir: &std::path::Path) -> Graph {
    let mut edges = Vec::new();
    for a in 0..10usize {
        for b in (a + 1)..10 {
            if (a + b) % 3 == 0 {
                edges.push((a, b));
                edges.push((a + 10, b + 10));
            }
        }
    }
    edges.push((0, 10));
    let mut feats = Vec::new();
    for u in 0..10 {
        feats.push((u, 0));
        feats.push((u, u % 3 + 1));
    }
    for u in 10..20 {
        feats.push((u, 4));
        feats.push((u, u % 3 + 5));
    }
    let labels = (0..20).map(|u| usize::from(u >= 10)).collect();
    let g = Graph::build(20, 8, 2, &edges, &feats, labels).unwrap();
    io::write_dataset(&g, dir).unwrap();
    let split = make_splits(&g, 0).unwrap();
    io::write_splits(&split, dir).unwrap();
    g
}

#[test]
fn full_lifecycle_through_the_c_abi() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("toy");
    let core_graph = toy_dataset(&dir);
    let dir_c = CString::new(dir.to_str().unwrap()).unwrap();

    unsafe {
        let mut graph: *mut SniaGraph = ptr::null_mut();
        assert_eq!(snia_graph_load(dir_c.as_ptr(), &mut graph), SniaStatus::Ok);
        assert_eq!(snia_graph_num_nodes(graph), 20);
        assert_eq!(snia_graph_num_features(graph), 8);
        assert_eq!(snia_graph_num_labels(graph), 2);
        assert_eq!(snia_graph_num_edges(graph), core_graph.num_edges());
        assert_eq!(snia_graph_max_feature_budget(graph), 2);

        let arch = CString::new("gcn").unwrap();
        let mut victim: *mut SniaVictim = ptr::null_mut();
        assert_eq!(
            snia_victim_train(graph, dir_c.as_ptr(), arch.as_ptr(), 0, &mut victim),
            SniaStatus::Ok
        );

        // accuracy over all nodes lands in [0, 1]
        let ids: Vec<usize> = (0..20).collect();
        let mut acc = -1.0f64;
        assert_eq!(
            snia_victim_accuracy(victim, graph, ids.as_ptr(), ids.len(), &mut acc),
            SniaStatus::Ok
        );
        assert!((0.0..=1.0).contains(&acc));

        // checkpoint round trip preserves query results
        let ckpt = tmp.path().join("v.ckpt");
        let ckpt_c = CString::new(ckpt.to_str().unwrap()).unwrap();
        assert_eq!(snia_victim_save(victim, ckpt_c.as_ptr()), SniaStatus::Ok);
        let mut reloaded: *mut SniaVictim = ptr::null_mut();
        assert_eq!(snia_victim_load(graph, ckpt_c.as_ptr(), &mut reloaded), SniaStatus::Ok);

        let features = [1usize, 5];
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        assert_eq!(
            snia_query_target_prob(victim, graph, 3, 1, features.as_ptr(), 2, &mut p1),
            SniaStatus::Ok
        );
        assert_eq!(
            snia_query_target_prob(reloaded, graph, 3, 1, features.as_ptr(), 2, &mut p2),
            SniaStatus::Ok
        );
        assert_eq!(p1, p2);
        assert!(p1 > 0.0 && p1 < 1.0);

        // baseline attack respects the budget and reports success
        let mut out_features = vec![0usize; 2];
        let mut out_len = 0usize;
        let mut success = false;
        assert_eq!(
            snia_baseline_attack(
                victim,
                victim,
                graph,
                SniaAttacker::GreedyGrad,
                3,
                1,
                2,
                7,
                out_features.as_mut_ptr(),
                &mut out_len,
                &mut success,
            ),
            SniaStatus::Ok
        );
        assert_eq!(out_len, 2);
        let mut direct = 0.0;
        assert_eq!(
            snia_query_target_prob(victim, graph, 3, 1, out_features.as_ptr(), out_len, &mut direct),
            SniaStatus::Ok
        );
        assert!(direct > 0.0);

        snia_victim_free(victim);
        snia_victim_free(reloaded);
        snia_graph_free(graph);
    }
}

#[test]
fn error_paths_set_status_and_message() {
    unsafe {
        // null out pointer
        assert_eq!(snia_graph_load(ptr::null(), ptr::null_mut()), SniaStatus::NullPointer);
        assert!(!snia_last_error_message().is_null());

        // nonexistent directory
        let bad = CString::new("/definitely/not/here").unwrap();
        let mut graph: *mut SniaGraph = ptr::null_mut();
        let status = snia_graph_load(bad.as_ptr(), &mut graph);
        assert_eq!(status, SniaStatus::ParseError);
        let msg = std::ffi::CStr::from_ptr(snia_last_error_message());
        assert!(msg.to_str().unwrap().contains("not/here"));

        // stats of null handles are zero, not crashes
        assert_eq!(snia_graph_num_nodes(ptr::null()), 0);
        assert_eq!(snia_graph_max_feature_budget(ptr::null()), 0);
    }
}

#[test]
fn out_of_range_goal_is_invalid_argument() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("toy");
    toy_dataset(&dir);
    let dir_c = CString::new(dir.to_str().unwrap()).unwrap();
    unsafe {
        let mut graph: *mut SniaGraph = ptr::null_mut();
        assert_eq!(snia_graph_load(dir_c.as_ptr(), &mut graph), SniaStatus::Ok);
        let arch = CString::new("sgc").unwrap();
        let mut victim: *mut SniaVictim = ptr::null_mut();
        assert_eq!(
            snia_victim_train(graph, dir_c.as_ptr(), arch.as_ptr(), 1, &mut victim),
            SniaStatus::Ok
        );
        let mut p = 0.0;
        assert_eq!(
            snia_query_target_prob(victim, graph, 999, 0, ptr::null(), 0, &mut p),
            SniaStatus::InvalidArgument
        );
        assert_eq!(
            snia_query_target_prob(victim, graph, 0, 99, ptr::null(), 0, &mut p),
            SniaStatus::InvalidArgument
        );
        snia_victim_free(victim);
        snia_graph_free(graph);
    }
}
