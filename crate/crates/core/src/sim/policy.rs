use rand::Rng;

use super::space::{Rendering, TemplateSpace};

/// Factored categorical policy: one softmax per hole.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub logits: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl TabularPolicy {
    /// Policy at the space's initial logits.
    pub fn initial(space: &TemplateSpace, temperature: f64) -> TabularPolicy {
        let logits = space
            .holes()
            .iter()
            .map(|h| h.init_logits.clone().unwrap_or_else(|| vec![0.0; h.choices.len()]))
            .collect();
        TabularPolicy { logits, temperature }
    }

    pub fn probs(&self, hole: usize) -> Vec<f64> {
        softmax(&self.logits[hole], self.temperature)
    }

    pub fn log_prob(&self, hole: usize, choice: usize) -> f64 {
        let z = &self.logits[hole];
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) / self.temperature;
        let lse = m + z.iter().map(|x| (x / self.temperature - m).exp()).sum::<f64>().ln();
        z[choice] / self.temperature - lse
    }

    /// Choice with the highest logit, lowest index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        self.logits
            .iter()
            .map(|z| z.iter().enumerate().fold(0, |best, (i, &x)| if x > z[best] { i } else { best }))
            .collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<usize> {
        (0..self.logits.len())
            .map(|h| {
                let p = self.probs(h);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return i;
                    }
                }
                p.len() - 1
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.temperature > 0.0 && self.logits.iter().flatten().all(|x| x.is_finite())
    }
}

pub fn softmax(z: &[f64], temperature: f64) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| ((x - m) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub assignment: Vec<usize>,
    pub rendering: Rendering,
    /// `log π(choice)` per hole.
    pub hole_logprobs: Vec<f64>,
}

/// Draw `g` programs from the policy.
pub fn sample_group(policy: &TabularPolicy, space: &TemplateSpace, g: usize, rng: &mut impl Rng) -> Vec<Sample> {
    (0..g)
        .map(|_| {
            let assignment = policy.sample(rng);
            let hole_logprobs = assignment.iter().enumerate().map(|(h, &c)| policy.log_prob(h, c)).collect();
            Sample { rendering: space.render(&assignment), assignment, hole_logprobs }
        })
        .collect()
}
