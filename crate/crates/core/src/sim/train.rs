use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{sample_group, TabularPolicy};
use super::{SimError, SimEval, SimProblem};
use crate::credit::{self, credit_group, span_mask, weighted_advantages, FailureMode, Group, ModeKind, RoutedSample};
use crate::syntax::TokenRange;

/// Where a LOGIC sample's advantage goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Statement of the earliest divergence.
    Earliest,
    /// Statement of the last divergence.
    Last,
    /// A uniformly drawn executed statement.
    RandomBoundary,
    /// No localization: every sample spreads its advantage over all tokens.
    Uniform,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Earliest, Strategy::Last, Strategy::RandomBoundary, Strategy::Uniform];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Earliest => "earliest",
            Strategy::Last => "last",
            Strategy::RandomBoundary => "random-boundary",
            Strategy::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub group_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub temperature: f64,
    /// KL coefficient towards the initial policy.
    pub beta: f64,
    pub epsilon: f64,
    pub clip: bool,
    pub kl: bool,
    /// Gradient steps per sampled batch.
    pub epochs: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            group_size: 16,
            learning_rate: 0.5,
            steps: 100,
            seed: 0,
            strategy: Strategy::Earliest,
            temperature: 1.0,
            beta: 0.05,
            epsilon: 0.2,
            clip: false,
            kl: false,
            epochs: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    /// Mean reward of the groups sampled at each step, steps `0..=S`.
    pub mean_reward: Vec<f64>,
    /// Fraction of problems whose argmax rendering is correct.
    pub solve_rate: Vec<f64>,
}

impl LearningCurve {
    /// Trapezoidal integral of the solve rate over steps.
    pub fn auc(&self) -> f64 {
        self.solve_rate.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum()
    }

    /// First step at which the solve rate reaches `threshold`.
    pub fn steps_to(&self, threshold: f64) -> Option<usize> {
        self.solve_rate.iter().position(|&s| s >= threshold)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean_reward,solve_rate\n");
        for (s, (r, v)) in self.mean_reward.iter().zip(&self.solve_rate).enumerate() {
            out.push_str(&format!("{s},{r},{v}\n"));
        }
        out
    }
}

/// Work done by a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub samples: usize,
    /// Programs sent through the pipeline, memoized or not.
    pub executions: usize,
    pub updates: usize,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub curve: LearningCurve,
    pub budget: Budget,
    pub policies: Vec<TabularPolicy>,
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn stream(seed: u64, step: usize, problem: usize, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ step as u64) ^ problem as u64) ^ purpose)
}

/// One problem's sampled group, credited under a strategy.
#[derive(Debug, Clone)]
pub struct CreditedGroup {
    pub assignments: Vec<Vec<usize>>,
    pub hole_spans: Vec<Vec<TokenRange>>,
    pub group: Group,
}

impl CreditedGroup {
    /// `w[i][h]`: mean token advantage over hole `h` of sample `i`.
    pub fn hole_weights(&self) -> Vec<Vec<f64>> {
        self.group
            .samples
            .iter()
            .zip(&self.hole_spans)
            .map(|(s, spans)| {
                spans.iter().map(|sp| sp.indices().map(|t| s.token_advantages[t]).sum::<f64>() / sp.len() as f64).collect()
            })
            .collect()
    }
}

/// Route and credit one group of evaluated samples.
pub fn credit_samples(
    problem: &str,
    evals: &[&SimEval],
    assignments: Vec<Vec<usize>>,
    strategy: Strategy,
    rng: &mut impl Rng,
) -> CreditedGroup {
    let routed = evals
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mode = match (&e.mode, strategy) {
                (FailureMode::Logic { .. }, Strategy::Last) => FailureMode::Logic { divergence: e.last.clone().map(Box::new) },
                (m, _) => m.clone(),
            };
            RoutedSample {
                id: i.to_string(),
                token_count: e.token_count,
                r_hat: e.r_hat,
                constraints_ok: e.constraints_ok,
                comparable: e.comparable,
                mode,
            }
        })
        .collect();
    let mut group = credit_group(problem, routed);
    for (s, e) in group.samples.iter_mut().zip(evals) {
        let mask = match strategy {
            Strategy::Uniform => vec![1; s.token_count],
            Strategy::RandomBoundary if s.mode.kind() == ModeKind::Logic => {
                if e.event_spans.is_empty() {
                    vec![1; s.token_count]
                } else {
                    span_mask(e.event_spans[rng.gen_range(0..e.event_spans.len())], s.token_count)
                }
            }
            _ => continue,
        };
        s.token_advantages = weighted_advantages(s.advantage, &mask);
    }
    CreditedGroup { assignments, hole_spans: evals.iter().map(|e| e.hole_spans.clone()).collect(), group }
}

/// The loss minimized by an update, as a function of the logits.
///
/// Each hole's log-probability is spread evenly over the hole's tokens and
/// template tokens have probability one, so the token-level loss reduces to
/// `-sum_i sum_h w[i][h] * log pi_h(c_ih)`. With clipping the log-probability
/// is replaced by the clipped ratio against the sampling policy; with KL the
/// divergence from the initial policy is added.
#[derive(Debug, Clone)]
pub struct Objective {
    pub groups: Vec<CreditedGroup>,
    pub weights: Vec<Vec<Vec<f64>>>,
    /// Per problem, per sample, per hole log-probability at sampling time.
    pub old_logprobs: Vec<Vec<Vec<f64>>>,
    pub reference: Vec<TabularPolicy>,
    pub clip: Option<f64>,
    pub kl: Option<f64>,
}

impl Objective {
    pub fn new(groups: Vec<CreditedGroup>, sampling: &[TabularPolicy], reference: Vec<TabularPolicy>, config: &SimConfig) -> Objective {
        let weights = groups.iter().map(|g| g.hole_weights()).collect();
        let old_logprobs = groups
            .iter()
            .zip(sampling)
            .map(|(g, p)| g.assignments.iter().map(|a| a.iter().enumerate().map(|(h, &c)| p.log_prob(h, c)).collect()).collect())
            .collect();
        Objective {
            groups,
            weights,
            old_logprobs,
            reference,
            clip: config.clip.then_some(config.epsilon),
            kl: config.kl.then_some(config.beta),
        }
    }

    /// Loss value. Without clipping this is the token-level loss computed
    /// by [`credit::loss`].
    pub fn value(&self, policies: &[TabularPolicy]) -> f64 {
        let mut total = match self.clip {
            None => {
                let groups: Vec<Group> = self.groups.iter().map(|g| g.group.clone()).collect();
                credit::loss(&groups, |g, i, t| {
                    let cg = &self.groups[g];
                    cg.hole_spans[i]
                        .iter()
                        .enumerate()
                        .filter(|(_, sp)| sp.contains(t))
                        .map(|(h, sp)| policies[g].log_prob(h, cg.assignments[i][h]) / sp.len() as f64)
                        .sum()
                })
                .expect("finite policy")
            }
            Some(eps) => {
                let mut total = 0.0;
                for (g, cg) in self.groups.iter().enumerate() {
                    for (i, a) in cg.assignments.iter().enumerate() {
                        for (h, &c) in a.iter().enumerate() {
                            let w = self.weights[g][i][h];
                            let ratio = (policies[g].log_prob(h, c) - self.old_logprobs[g][i][h]).exp();
                            total -= (ratio * w).min(ratio.clamp(1.0 - eps, 1.0 + eps) * w);
                        }
                    }
                }
                total
            }
        };
        if let Some(beta) = self.kl {
            for (p, q) in policies.iter().zip(&self.reference) {
                for h in 0..p.logits.len() {
                    total += beta * kl(&p.probs(h), &q.probs(h));
                }
            }
        }
        total
    }

    /// Analytic gradient of [`Objective::value`] with respect to the logits.
    pub fn gradient(&self, policies: &[TabularPolicy]) -> Vec<Vec<Vec<f64>>> {
        let mut grad: Vec<Vec<Vec<f64>>> = policies.iter().map(|p| p.logits.iter().map(|z| vec![0.0; z.len()]).collect()).collect();
        for (g, cg) in self.groups.iter().enumerate() {
            let tau = policies[g].temperature;
            let probs: Vec<Vec<f64>> = (0..policies[g].logits.len()).map(|h| policies[g].probs(h)).collect();
            for (i, a) in cg.assignments.iter().enumerate() {
                for (h, &c) in a.iter().enumerate() {
                    let w = self.weights[g][i][h];
                    // d(-coef * log pi_c)/dz_j = -coef * (1[j=c] - p_j) / tau
                    let coef = match self.clip {
                        None => w,
                        Some(eps) => {
                            let ratio = (policies[g].log_prob(h, c) - self.old_logprobs[g][i][h]).exp();
                            let clipped = (w > 0.0 && ratio > 1.0 + eps) || (w < 0.0 && ratio < 1.0 - eps);
                            if clipped {
                                0.0
                            } else {
                                w * ratio
                            }
                        }
                    };
                    if coef == 0.0 {
                        continue;
                    }
                    for (j, pj) in probs[h].iter().enumerate() {
                        let ind = if j == c { 1.0 } else { 0.0 };
                        grad[g][h][j] -= coef * (ind - pj) / tau;
                    }
                }
            }
        }
        if let Some(beta) = self.kl {
            for (g, (p, q)) in policies.iter().zip(&self.reference).enumerate() {
                for (h, gh) in grad[g].iter_mut().enumerate() {
                    let (pp, qq) = (p.probs(h), q.probs(h));
                    let d = kl(&pp, &qq);
                    for ((x, &pj), &qj) in gh.iter_mut().zip(&pp).zip(&qq) {
                        if pj > 0.0 {
                            *x += beta * pj * ((pj / qj).ln() - d) / p.temperature;
                        }
                    }
                }
            }
        }
        grad
    }
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&a, _)| a > 0.0).map(|(&a, &b)| a * (a / b).ln()).sum()
}

/// Train one policy per problem under `config`.
pub fn train(problems: &[SimProblem], config: &SimConfig) -> Result<TrainRun, SimError> {
    config.validate()?;
    if problems.is_empty() {
        return Err(SimError::Config("no problems".into()));
    }
    let initial: Vec<TabularPolicy> = problems.iter().map(|p| TabularPolicy::initial(&p.space, config.temperature)).collect();
    let mut policies = initial.clone();
    let mut curve = LearningCurve { mean_reward: Vec::new(), solve_rate: Vec::new() };
    let mut budget = Budget::default();
    for step in 0..=config.steps {
        let mut groups = Vec::with_capacity(problems.len());
        let mut reward_sum = 0.0;
        let mut solved = 0;
        for (pi, (problem, policy)) in problems.iter().zip(&policies).enumerate() {
            let mut rng = stream(config.seed, step, pi, 0);
            let samples = sample_group(policy, &problem.space, config.group_size, &mut rng);
            let evals: Vec<_> = samples.iter().map(|s| problem.eval(&s.assignment)).collect();
            let refs: Vec<&SimEval> = evals.iter().map(|e| e.as_ref()).collect();
            let assignments = samples.into_iter().map(|s| s.assignment).collect();
            let cg = credit_samples(problem.id(), &refs, assignments, config.strategy, &mut stream(config.seed, step, pi, 1));
            reward_sum += cg.group.samples.iter().map(|s| s.reward).sum::<f64>();
            groups.push(cg);
            if problem.eval(&policy.argmax()).correct() {
                solved += 1;
            }
            budget.samples += config.group_size;
            budget.executions += config.group_size + 1;
        }
        curve.mean_reward.push(reward_sum / (problems.len() * config.group_size) as f64);
        curve.solve_rate.push(solved as f64 / problems.len() as f64);
        if step == config.steps {
            break;
        }
        let objective = Objective::new(groups, &policies, initial.clone(), config);
        for _ in 0..config.epochs {
            let grad = objective.gradient(&policies);
            for (p, g) in policies.iter_mut().zip(&grad) {
                for (z, dz) in p.logits.iter_mut().zip(g) {
                    for (x, d) in z.iter_mut().zip(dz) {
                        *x -= config.learning_rate * d;
                    }
                }
            }
            budget.updates += 1;
        }
        if let Some(p) = policies.iter().find(|p| !p.is_finite()) {
            return Err(SimError::Config(format!("logits diverged: {:?}", p.logits)));
        }
    }
    Ok(TrainRun { curve, budget, policies })
}
