//! Rewards, group-relative advantages, failure-mode routing and the
//! token-level advantage operator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::Divergence;
use crate::syntax::TokenRange;

/// Test pass rate masked by constraint satisfaction.
pub fn reward(r_hat: f64, constraints_ok: bool) -> f64 {
    debug_assert!((0.0..=1.0).contains(&r_hat));
    if constraints_ok {
        r_hat
    } else {
        0.0
    }
}

/// Rewards centered on the group mean. No variance scaling.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    assert!(rewards.len() >= 2, "a group needs at least two samples");
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let mut adv: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    // Remove the rounding residue so the group sums to zero.
    let residue = adv.iter().sum::<f64>() / adv.len() as f64;
    if residue != 0.0 {
        adv.iter_mut().for_each(|a| *a -= residue);
    }
    adv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModeKind {
    Correct,
    Constraint,
    Syntax,
    Logic,
}

impl ModeKind {
    pub const ALL: [ModeKind; 4] = [ModeKind::Correct, ModeKind::Constraint, ModeKind::Syntax, ModeKind::Logic];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::Correct => "CORRECT",
            ModeKind::Constraint => "CONSTRAINT",
            ModeKind::Syntax => "SYNTAX",
            ModeKind::Logic => "LOGIC",
        }
    }
}

/// Gate results for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checks {
    /// Failed to lex/parse, or raised at runtime on some test.
    pub raises: bool,
    pub constraints_ok: bool,
    pub comparable: bool,
    pub r_hat: f64,
}

/// Route a sample. The gates apply in a fixed order: errors first, then
/// constraints and comparability, then full correctness.
pub fn classify(checks: &Checks) -> ModeKind {
    if checks.raises {
        ModeKind::Syntax
    } else if !checks.constraints_ok || !checks.comparable {
        ModeKind::Constraint
    } else if checks.r_hat == 1.0 {
        ModeKind::Correct
    } else {
        ModeKind::Logic
    }
}

/// A routed sample with the payload its mode needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "UPPERCASE")]
pub enum FailureMode {
    Correct,
    Constraint { constraints_ok: bool, comparable: bool },
    Syntax { span: TokenRange, message: String },
    /// `None` when localization found no divergence.
    Logic { divergence: Option<Box<Divergence>> },
}

impl FailureMode {
    pub fn kind(&self) -> ModeKind {
        match self {
            FailureMode::Correct => ModeKind::Correct,
            FailureMode::Constraint { .. } => ModeKind::Constraint,
            FailureMode::Syntax { .. } => ModeKind::Syntax,
            FailureMode::Logic { .. } => ModeKind::Logic,
        }
    }

    /// The span that receives the whole advantage, if credit is localized.
    pub fn span(&self) -> Option<TokenRange> {
        match self {
            FailureMode::Syntax { span, .. } => Some(*span),
            FailureMode::Logic { divergence: Some(d) } => Some(d.token_span),
            _ => None,
        }
    }
}

/// Spread `advantage` over tokens in proportion to `mask`:
/// `a_t = A * m_t / sum(m)`.
pub fn weighted_advantages(advantage: f64, mask: &[u32]) -> Vec<f64> {
    let total: u64 = mask.iter().map(|&m| u64::from(m)).sum();
    assert!(total > 0, "weights must not all be zero");
    let total = total as f64;
    mask.iter().map(|&m| if m == 0 { 0.0 } else { advantage * f64::from(m) / total }).collect()
}

/// Indicator mask of `span` over `token_count` tokens.
pub fn span_mask(span: TokenRange, token_count: usize) -> Vec<u32> {
    assert!(span.within(token_count), "span {span} outside [1, {token_count}]");
    let mut mask = vec![0; token_count];
    mask[span.indices()].fill(1);
    mask
}

/// Token-level advantages for one sample.
///
/// Uniform `A/T` unless the mode carries a span, in which case the span's
/// tokens share `A` equally and every other token gets zero.
pub fn token_advantages(advantage: f64, token_count: usize, mode: &FailureMode) -> Vec<f64> {
    assert!(token_count > 0, "a sample has at least one token");
    match mode.span() {
        Some(span) => weighted_advantages(advantage, &span_mask(span, token_count)),
        None => weighted_advantages(advantage, &vec![1; token_count]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub id: String,
    pub token_count: usize,
    pub r_hat: f64,
    pub constraints_ok: bool,
    pub comparable: bool,
    pub reward: f64,
    pub mode: FailureMode,
    pub advantage: f64,
    pub token_advantages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub problem: String,
    pub samples: Vec<GroupSample>,
}

/// What routing produced for a sample, before group statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedSample {
    pub id: String,
    pub token_count: usize,
    pub r_hat: f64,
    pub constraints_ok: bool,
    pub comparable: bool,
    pub mode: FailureMode,
}

/// Rewards, advantages and token advantages for a routed group.
pub fn credit_group(problem: &str, routed: Vec<RoutedSample>) -> Group {
    let rewards: Vec<f64> = routed.iter().map(|s| reward(s.r_hat, s.constraints_ok)).collect();
    let advantages = group_advantages(&rewards);
    let samples = routed
        .into_iter()
        .zip(rewards.into_iter().zip(advantages))
        .map(|(s, (reward, advantage))| GroupSample {
            token_advantages: token_advantages(advantage, s.token_count, &s.mode),
            id: s.id,
            token_count: s.token_count,
            r_hat: s.r_hat,
            constraints_ok: s.constraints_ok,
            comparable: s.comparable,
            reward,
            mode: s.mode,
            advantage,
        })
        .collect();
    Group { problem: problem.to_string(), samples }
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("non-finite log-probability {value} at group {group}, sample {sample}, token {token}")]
    NonFinite { group: usize, sample: usize, token: usize, value: f64 },
}

/// `-sum_i sum_t a_{i,t} * logprob(group, sample, t)`, with `t` 1-based.
pub fn loss(groups: &[Group], mut logprob: impl FnMut(usize, usize, usize) -> f64) -> Result<f64, LossError> {
    let mut total = 0.0;
    for (g, group) in groups.iter().enumerate() {
        for (i, sample) in group.samples.iter().enumerate() {
            for (t, &a) in sample.token_advantages.iter().enumerate() {
                let lp = logprob(g, i, t + 1);
                if !lp.is_finite() {
                    return Err(LossError::NonFinite { group: g, sample: i, token: t + 1, value: lp });
                }
                total -= a * lp;
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub id: String,
    pub mode: ModeKind,
    #[serde(rename = "A")]
    pub advantage: f64,
    pub span: Option<TokenRange>,
    pub r_hat: f64,
    pub token_advantages: Vec<f64>,
}

/// Serialized credit for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditReport {
    pub problem: String,
    pub samples: Vec<SampleReport>,
}

impl From<&Group> for CreditReport {
    fn from(g: &Group) -> Self {
        CreditReport {
            problem: g.problem.clone(),
            samples: g
                .samples
                .iter()
                .map(|s| SampleReport {
                    id: s.id.clone(),
                    mode: s.mode.kind(),
                    advantage: s.advantage,
                    span: s.mode.span(),
                    r_hat: s.r_hat,
                    token_advantages: s.token_advantages.clone(),
                })
                .collect(),
        }
    }
}
