//! The attack suite: run every configured attacker over the goal grid,
//! judge success, and aggregate metrics.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::{AttackReport, AttackerSpec};
use crate::baselines::{
    greedy_grad_attack, mostattr_attack, oneshot_grad_attack, random_attack, CleanPredictions, GradSource,
};
use crate::env::{build_label_bank, AttackEnv, AttackGoal, LabelBank};
use crate::error::{Result, SniaError};
use crate::graph::{Graph, InjectedGraph};
use crate::ppo::train::greedy_rollouts;
use crate::ppo::PolicyNet;
use crate::seeding::component_rng;
use crate::victim::{ProbRow, VictimModel};

/// Everything a suite run needs; the agent and label bank are only
/// required when `gsnia` is among the attackers, the surrogate only for
/// black-box gradient attackers.
pub struct SuiteInputs<'a> {
    pub graph: &'a Graph,
    pub victim: &'a VictimModel,
    pub victim_name: String,
    pub surrogate: Option<&'a VictimModel>,
    pub policy: Option<&'a PolicyNet>,
    pub goals: Vec<AttackGoal>,
    pub budget: usize,
    pub seed: u64,
    /// Record wall-clock times (off by default: timing fields make reruns
    /// non-reproducible byte-for-byte).
    pub timings: bool,
}

/// Run the attackers over the goal grid, in goal order per attacker.
pub fn run_attack_suite(inputs: &SuiteInputs, attackers: &[AttackerSpec]) -> Result<Vec<AttackReport>> {
    let g = inputs.graph;
    let victim = inputs.victim;
    let preds = CleanPredictions::compute(g, victim)?;
    let surrogate_preds = match inputs.surrogate {
        Some(s) => Some(CleanPredictions::compute(g, s)?),
        None => None,
    };
    let _ = &surrogate_preds; // groups always come from the victim's view
    let clean_probs = {
        let targets: Vec<usize> = inputs.goals.iter().map(|goal| goal.target).collect();
        victim.predict_probs(g, Some(&targets))?
    };

    let mut reports = Vec::with_capacity(attackers.len() * inputs.goals.len());
    for attacker in attackers {
        let mut rng = component_rng(inputs.seed, &format!("attack-{}", attacker.column_name()));
        match attacker {
            AttackerSpec::Gsnia => {
                let policy = inputs.policy.ok_or_else(|| {
                    SniaError::Usage("gsnia attacker requires a trained agent checkpoint".into())
                })?;
                let bank = build_label_bank(g, victim)?;
                reports.extend(run_agent(inputs, policy, &bank, &preds, &clean_probs)?);
            }
            spec => {
                for (gi, &goal) in inputs.goals.iter().enumerate() {
                    let started = Instant::now();
                    let clean_prob = clean_probs.get(gi, goal.label);
                    let clean_label = preds.labels[goal.target];
                    let report = match spec {
                        AttackerSpec::Clean => {
                            let success = clean_label == goal.label;
                            AttackReport {
                                target: goal.target,
                                label: goal.label,
                                clean_label,
                                attacker: spec.column_name(),
                                victim: inputs.victim_name.clone(),
                                success,
                                clean_prob,
                                final_prob: clean_prob,
                                delta_prob: 0.0,
                                steps: 0,
                                queries: 0,
                                wall_time_ms: None,
                            }
                        }
                        AttackerSpec::Random => {
                            let ig = random_attack(g, &preds, goal, inputs.budget, &mut rng);
                            judge(inputs, spec, goal, clean_label, clean_prob, &ig, 1)?
                        }
                        AttackerSpec::MostAttr => {
                            let ig = mostattr_attack(g, &preds, goal, inputs.budget);
                            judge(inputs, spec, goal, clean_label, clean_prob, &ig, 1)?
                        }
                        AttackerSpec::OneShot(src) => {
                            let model = grad_model(inputs, *src)?;
                            let ig = oneshot_grad_attack(g, model, goal, inputs.budget)?;
                            judge(inputs, spec, goal, clean_label, clean_prob, &ig, 1)?
                        }
                        AttackerSpec::Greedy(src) => {
                            let model = grad_model(inputs, *src)?;
                            let ig = greedy_grad_attack(g, model, goal, inputs.budget)?;
                            judge(inputs, spec, goal, clean_label, clean_prob, &ig, 1)?
                        }
                        AttackerSpec::Gsnia => unreachable!(),
                    };
                    let mut report = report;
                    if inputs.timings {
                        report.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
                    }
                    reports.push(report);
                }
            }
        }
    }
    Ok(reports)
}

fn grad_model<'a>(inputs: &SuiteInputs<'a>, src: GradSource) -> Result<&'a VictimModel> {
    match src {
        GradSource::Victim => Ok(inputs.victim),
        GradSource::Surrogate => inputs.surrogate.ok_or_else(|| {
            SniaError::Usage("black-box gradient attacker requires a surrogate checkpoint".into())
        }),
    }
}

/// Evaluate an injected graph against the victim and assemble the report.
fn judge(
    inputs: &SuiteInputs,
    spec: &AttackerSpec,
    goal: AttackGoal,
    clean_label: usize,
    clean_prob: f64,
    ig: &InjectedGraph,
    queries_spent: usize,
) -> Result<AttackReport> {
    let row: ProbRow = inputs.victim.query_target_row(ig)?;
    let final_prob = row.get(goal.label);
    Ok(AttackReport {
        target: goal.target,
        label: goal.label,
        clean_label,
        attacker: spec.column_name(),
        victim: inputs.victim_name.clone(),
        success: row.argmax() == goal.label,
        clean_prob,
        final_prob,
        delta_prob: final_prob - clean_prob,
        steps: ig.num_injected_features(),
        queries: queries_spent,
        wall_time_ms: None,
    })
}

fn run_agent(
    inputs: &SuiteInputs,
    policy: &PolicyNet,
    bank: &LabelBank,
    preds: &CleanPredictions,
    clean_probs: &crate::tensor::Matrix,
) -> Result<Vec<AttackReport>> {
    let env = AttackEnv::new(inputs.graph, inputs.victim, inputs.budget)?;
    let started = Instant::now();
    let outcomes = greedy_rollouts(&env, bank, policy, &inputs.goals)?;
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    let per_goal_ms = total_ms / inputs.goals.len().max(1) as f64;
    Ok(outcomes
        .into_iter()
        .enumerate()
        .map(|(gi, o)| AttackReport {
            target: o.goal.target,
            label: o.goal.label,
            clean_label: preds.labels[o.goal.target],
            attacker: "gsnia".into(),
            victim: inputs.victim_name.clone(),
            success: o.success,
            clean_prob: clean_probs.get(gi, o.goal.label),
            final_prob: o.final_prob,
            delta_prob: o.final_prob - clean_probs.get(gi, o.goal.label),
            steps: o.features.len(),
            queries: o.queries,
            wall_time_ms: inputs.timings.then_some(per_goal_ms),
        })
        .collect())
}

/// Per-label success rates: `rates[label][attacker_column]` as a fraction
/// of the goals targeting that label.
pub fn success_rates(reports: &[AttackReport], num_labels: usize, columns: &[String]) -> Vec<Vec<f64>> {
    let mut hit = vec![vec![0usize; columns.len()]; num_labels];
    let mut total = vec![vec![0usize; columns.len()]; num_labels];
    for r in reports {
        if let Some(c) = columns.iter().position(|c| *c == r.attacker) {
            total[r.label][c] += 1;
            if r.success {
                hit[r.label][c] += 1;
            }
        }
    }
    hit.into_iter()
        .zip(total)
        .map(|(hs, ts)| {
            hs.into_iter()
                .zip(ts)
                .map(|(h, t)| if t == 0 { f64::NAN } else { h as f64 / t as f64 })
                .collect()
        })
        .collect()
}

/// Average probability-shift matrix: cell (i, j) is the mean `delta_prob`
/// over reports whose target was cleanly classified as `i` and attacked
/// toward label `j`. Empty cells are NaN.
pub fn heatmap_matrix(reports: &[AttackReport], num_labels: usize) -> Vec<Vec<f64>> {
    let mut sum = vec![vec![0.0; num_labels]; num_labels];
    let mut count = vec![vec![0usize; num_labels]; num_labels];
    for r in reports {
        sum[r.clean_label][r.label] += r.delta_prob;
        count[r.clean_label][r.label] += 1;
    }
    for (i, row) in sum.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if count[i][j] == 0 {
                log::warn!("heatmap cell ({i}, {j}) has no reports");
                *cell = f64::NAN;
            } else {
                *cell /= count[i][j] as f64;
            }
        }
    }
    sum
}

/// One row of the budget sweep: mean targeted-label probability over the
/// goals of one label at one episode length.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SweepRow {
    pub budget: usize,
    pub label: usize,
    pub mean_final_prob: f64,
}

/// Greedy rollouts of the trained agent at several episode lengths,
/// including lengths beyond the training budget (no retraining; the mask
/// logic is unchanged). Budgets above F are capped with a warning.
pub fn budget_sweep(
    graph: &Graph,
    victim: &VictimModel,
    bank: &LabelBank,
    policy: &PolicyNet,
    goals: &[AttackGoal],
    budgets: &[usize],
    num_labels: usize,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &raw_budget in budgets {
        let budget = if raw_budget > graph.num_features() {
            log::warn!(
                "budget {raw_budget} exceeds the feature count; capping at {}",
                graph.num_features()
            );
            graph.num_features()
        } else {
            raw_budget
        };
        let mut sum = vec![0.0; num_labels];
        let mut count = vec![0usize; num_labels];
        if budget == 0 {
            // no actions: the pendant graph itself
            let env = AttackEnv::new(graph, victim, 1)?;
            for &goal in goals {
                let st = env.reset(goal)?;
                sum[goal.label] += st.last_prob();
                count[goal.label] += 1;
            }
        } else {
            let env = AttackEnv::new(graph, victim, budget)?;
            for o in greedy_rollouts(&env, bank, policy, goals)? {
                sum[o.goal.label] += o.final_prob;
                count[o.goal.label] += 1;
            }
        }
        for label in 0..num_labels {
            if count[label] > 0 {
                rows.push(SweepRow {
                    budget: raw_budget,
                    label,
                    mean_final_prob: sum[label] / count[label] as f64,
                });
            }
        }
    }
    Ok(rows)
}

/// The standard goal grid: the first `num_targets` targets crossed with
/// the requested labels (all labels when `None`).
pub fn goal_grid(targets: &[usize], num_targets: Option<usize>, labels: Option<&[usize]>, num_labels: usize) -> Vec<AttackGoal> {
    let n = num_targets.unwrap_or(targets.len()).min(targets.len());
    let label_list: Vec<usize> = match labels {
        Some(l) => l.to_vec(),
        None => (0..num_labels).collect(),
    };
    let mut goals = Vec::with_capacity(n * label_list.len());
    for &label in &label_list {
        for &target in &targets[..n] {
            goals.push(AttackGoal { target, label });
        }
    }
    goals
}

/// Deterministic replay helper for tests: same seed, same attacker column
/// name, same sequence of random draws.
pub fn replay_rng(seed: u64, attacker: &AttackerSpec) -> ChaCha8Rng {
    component_rng(seed, &format!("attack-{}", attacker.column_name()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_splits;
    use crate::testkit;
    use crate::victim::{train_victim, GnnArchitecture};

    fn setup() -> (Graph, VictimModel, Vec<AttackGoal>) {
        let mut rng = component_rng(31, "suite-test");
        let g = testkit::random_graph(&mut rng, 16, 8, 3, 8);
        let split = make_splits(&g, 0).unwrap();
        let victim = train_victim(&g, &split, &GnnArchitecture::gcn(), 0).unwrap();
        let goals = goal_grid(&split.target_ids, Some(4), None, g.num_labels());
        (g, victim, goals)
    }

    #[test]
    fn suite_runs_all_baselines_and_counts_match() {
        let (g, victim, goals) = setup();
        let inputs = SuiteInputs {
            graph: &g,
            victim: &victim,
            victim_name: "gcn".into(),
            surrogate: None,
            policy: None,
            goals: goals.clone(),
            budget: 3,
            seed: 5,
            timings: false,
        };
        let attackers = [
            AttackerSpec::Clean,
            AttackerSpec::Random,
            AttackerSpec::MostAttr,
            AttackerSpec::OneShot(GradSource::Victim),
            AttackerSpec::Greedy(GradSource::Victim),
        ];
        let reports = run_attack_suite(&inputs, &attackers).unwrap();
        assert_eq!(reports.len(), attackers.len() * goals.len());
        for r in &reports {
            assert!(r.clean_prob >= 0.0 && r.clean_prob <= 1.0);
            assert!(r.final_prob >= 0.0 && r.final_prob <= 1.0);
            assert_eq!(r.delta_prob, r.final_prob - r.clean_prob);
            assert!(r.wall_time_ms.is_none());
        }
        // deterministic rerun
        let reports2 = run_attack_suite(&inputs, &attackers).unwrap();
        for (a, b) in reports.iter().zip(&reports2) {
            assert_eq!(a.success, b.success);
            assert_eq!(a.final_prob, b.final_prob);
        }
    }

    #[test]
    fn clean_rows_reflect_clean_predictions_exactly() {
        let (g, victim, goals) = setup();
        let inputs = SuiteInputs {
            graph: &g,
            victim: &victim,
            victim_name: "gcn".into(),
            surrogate: None,
            policy: None,
            goals: goals.clone(),
            budget: 3,
            seed: 5,
            timings: false,
        };
        let reports = run_attack_suite(&inputs, &[AttackerSpec::Clean]).unwrap();
        let preds = victim.predict_labels(&g).unwrap();
        for r in &reports {
            assert_eq!(r.success, preds[r.target] == r.label);
            assert_eq!(r.delta_prob, 0.0);
            assert_eq!(r.steps, 0);
        }
    }

    #[test]
    fn random_attack_rate_matches_seeded_replay() {
        let (g, victim, goals) = setup();
        let inputs = SuiteInputs {
            graph: &g,
            victim: &victim,
            victim_name: "gcn".into(),
            surrogate: None,
            policy: None,
            goals: goals.clone(),
            budget: 3,
            seed: 11,
            timings: false,
        };
        let reports = run_attack_suite(&inputs, &[AttackerSpec::Random]).unwrap();
        // replay the same rng sequence by hand
        let preds = CleanPredictions::compute(&g, &victim).unwrap();
        let mut rng = replay_rng(11, &AttackerSpec::Random);
        for (r, &goal) in reports.iter().zip(&goals) {
            let ig = random_attack(&g, &preds, goal, 3, &mut rng);
            let row = victim.query_target_row(&ig).unwrap();
            assert_eq!(r.success, row.argmax() == goal.label);
            assert_eq!(r.final_prob, row.get(goal.label));
        }
    }

    #[test]
    fn heatmap_averages_and_flags_empty_cells() {
        let base = AttackReport {
            target: 0,
            label: 1,
            clean_label: 0,
            attacker: "x".into(),
            victim: "v".into(),
            success: true,
            clean_prob: 0.2,
            final_prob: 0.5,
            delta_prob: 0.3,
            steps: 1,
            queries: 1,
            wall_time_ms: None,
        };
        let mut r2 = base.clone();
        r2.delta_prob = 0.1;
        let m = heatmap_matrix(&[base.clone(), r2], 2);
        assert!((m[0][1] - 0.2).abs() < 1e-15);
        assert!(m[0][0].is_nan());
        // duplicate reports average to the same value as the singletons
        let m2 = heatmap_matrix(&[base.clone(), base.clone()], 2);
        assert!((m2[0][1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn success_rate_counts_per_label() {
        let (g, victim, goals) = setup();
        let inputs = SuiteInputs {
            graph: &g,
            victim: &victim,
            victim_name: "gcn".into(),
            surrogate: None,
            policy: None,
            goals,
            budget: 3,
            seed: 5,
            timings: false,
        };
        let reports = run_attack_suite(&inputs, &[AttackerSpec::MostAttr]).unwrap();
        let rates = success_rates(&reports, g.num_labels(), &["mostattr".into()]);
        for label in 0..g.num_labels() {
            let manual = reports
                .iter()
                .filter(|r| r.label == label && r.success)
                .count() as f64
                / reports.iter().filter(|r| r.label == label).count() as f64;
            assert_eq!(rates[label][0], manual);
        }
    }
}
