use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{train, Budget, LearningCurve, SimConfig, Strategy};
use super::{SimError, SimProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub auc_mean: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub auc_std: f64,
    /// Runs that never reach 0.9 count as the step budget.
    pub steps_to_09_mean: f64,
    pub steps_to_09_censored: usize,
    pub seeds: usize,
    pub single_seed: bool,
    pub budget: Budget,
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub summary: BTreeMap<Strategy, StrategySummary>,
    /// Per strategy, one curve per seed in seed order.
    pub curves: BTreeMap<Strategy, Vec<LearningCurve>>,
}

impl Ablation {
    /// Summary keyed by strategy name.
    pub fn summary_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .summary
            .iter()
            .map(|(s, v)| (s.as_str().to_string(), serde_json::to_value(v).expect("serializable")))
            .collect();
        serde_json::Value::Object(map)
    }

    /// Seed-averaged curve of one strategy.
    pub fn mean_curve(&self, strategy: Strategy) -> Option<LearningCurve> {
        let runs = self.curves.get(&strategy)?;
        let n = runs.len() as f64;
        let len = runs.first()?.solve_rate.len();
        let avg = |f: &dyn Fn(&LearningCurve) -> &Vec<f64>| (0..len).map(|i| runs.iter().map(|c| f(c)[i]).sum::<f64>() / n).collect();
        Some(LearningCurve { mean_reward: avg(&|c| &c.mean_reward), solve_rate: avg(&|c| &c.solve_rate) })
    }
}

pub fn pooled_std(a: f64, b: f64) -> f64 {
    ((a * a + b * b) / 2.0).sqrt()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Train every strategy on every seed from the same base configuration.
pub fn ablate(problems: &[SimProblem], base: &SimConfig, seeds: &[u64], strategies: &[Strategy]) -> Result<Ablation, SimError> {
    if seeds.is_empty() || strategies.is_empty() {
        return Err(SimError::Config("at least one seed and one strategy are required".into()));
    }
    let jobs: Vec<(Strategy, u64)> = strategies.iter().flat_map(|&s| seeds.iter().map(move |&seed| (s, seed))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(strategy, seed)| train(problems, &SimConfig { strategy, seed, ..base.clone() }).map(|r| (strategy, r)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut curves: BTreeMap<Strategy, Vec<LearningCurve>> = BTreeMap::new();
    let mut budgets: BTreeMap<Strategy, Budget> = BTreeMap::new();
    for (strategy, run) in runs {
        curves.entry(strategy).or_default().push(run.curve);
        let b = budgets.entry(strategy).or_default();
        b.samples += run.budget.samples;
        b.executions += run.budget.executions;
        b.updates += run.budget.updates;
    }
    let summary = curves
        .iter()
        .map(|(&s, cs)| {
            let aucs: Vec<f64> = cs.iter().map(|c| c.auc()).collect();
            let (auc_mean, auc_std) = mean_std(&aucs);
            let steps: Vec<Option<usize>> = cs.iter().map(|c| c.steps_to(0.9)).collect();
            let censored = steps.iter().filter(|x| x.is_none()).count();
            let steps_to_09_mean =
                steps.iter().map(|x| x.unwrap_or(base.steps) as f64).sum::<f64>() / steps.len() as f64;
            let summary = StrategySummary {
                auc_mean,
                auc_std,
                steps_to_09_mean,
                steps_to_09_censored: censored,
                seeds: cs.len(),
                single_seed: cs.len() == 1,
                budget: budgets[&s],
            };
            (s, summary)
        })
        .collect();
    Ok(Ablation { summary, curves })
}
