use super::MeanLengths;
use crate::corpus::{Corpus, SetSummary};
use crate::error::{Error, Result};
use crate::grammar::SampledSequence;

pub const SIGMA_FLOOR: f64 = 15.0;
const MAX_ITERATIONS: usize = 100_000;
const STATIONARITY_TOL: f64 = 1e-6;

/// Splits each video's frames evenly among its actions and averages per class.
/// Classes absent from every set receive the mean of the others and are flagged.
pub fn naive_means(sets: &[SetSummary], num_classes: usize) -> Result<MeanLengths> {
    if sets.is_empty() {
        return Err(Error::Validation("cannot estimate lengths from an empty corpus".into()));
    }
    let mut sum = vec![0.0; num_classes];
    let mut count = vec![0usize; num_classes];
    for s in sets {
        if s.actions.is_empty() {
            return Err(Error::Validation("empty action set".into()));
        }
        let share = s.frames as f64 / s.actions.len() as f64;
        for &c in &s.actions {
            sum[c] += share;
            count[c] += 1;
        }
    }
    let seen: Vec<f64> = (0..num_classes)
        .filter(|&c| count[c] > 0)
        .map(|c| sum[c] / count[c] as f64)
        .collect();
    let fallback = seen.iter().sum::<f64>() / seen.len() as f64;
    let lambda = (0..num_classes)
        .map(|c| if count[c] > 0 { sum[c] / count[c] as f64 } else { fallback })
        .collect();
    let flagged = count.iter().map(|&n| n == 0).collect();
    Ok(MeanLengths { lambda, flagged })
}

pub fn estimate_naive(corpus: &Corpus) -> Result<MeanLengths> {
    naive_means(&corpus.set_summaries(), corpus.num_classes())
}

/// Which reading of the squared-error objective to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossForm {
    /// `sum_i (sum_{c in A_i} lambda_c - T_i)^2`: the set's means add up to the video length.
    #[default]
    Coupled,
    /// `sum_i sum_{c in A_i} (lambda_c - T_i)^2`: separable per class.
    Decoupled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossFit {
    pub means: MeanLengths,
    pub iterations: usize,
    /// Norm of the projected gradient at the returned point.
    pub residual: f64,
    pub objective: f64,
}

pub fn coupled_objective(sets: &[SetSummary], lambda: &[f64]) -> f64 {
    sets.iter()
        .map(|s| {
            let r: f64 = s.actions.iter().map(|&c| lambda[c]).sum::<f64>() - s.frames as f64;
            r * r
        })
        .sum()
}

/// Minimizes the squared-error objective subject to `lambda_c >= l_min`.
///
/// The coupled form is solved by projected gradient descent with step `1/L`,
/// `L` bounding the Hessian's spectrum by its largest absolute row sum,
/// started from the naive estimate clamped to the bound.
pub fn loss_based_means(sets: &[SetSummary], num_classes: usize, l_min: f64, form: LossForm) -> Result<LossFit> {
    if !(l_min >= 1.0) {
        return Err(Error::Config(format!("minimum length must be at least 1, got {l_min}")));
    }
    let init = naive_means(sets, num_classes)?;
    match form {
        LossForm::Decoupled => Ok(decoupled(sets, num_classes, l_min, init)),
        LossForm::Coupled => coupled(sets, num_classes, l_min, init),
    }
}

pub fn estimate_loss_based(corpus: &Corpus, l_min: f64) -> Result<MeanLengths> {
    loss_based_means(&corpus.set_summaries(), corpus.num_classes(), l_min, LossForm::Coupled).map(|f| f.means)
}

fn decoupled(sets: &[SetSummary], n: usize, l_min: f64, init: MeanLengths) -> LossFit {
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for s in sets {
        for &c in &s.actions {
            sum[c] += s.frames as f64;
            count[c] += 1;
        }
    }
    let lambda: Vec<f64> = (0..n)
        .map(|c| {
            let v = if count[c] > 0 { sum[c] / count[c] as f64 } else { init.lambda[c] };
            v.max(l_min)
        })
        .collect();
    let objective = sets
        .iter()
        .map(|s| s.actions.iter().map(|&c| (lambda[c] - s.frames as f64).powi(2)).sum::<f64>())
        .sum();
    LossFit {
        means: MeanLengths {
            lambda,
            flagged: init.flagged,
        },
        iterations: 0,
        residual: 0.0,
        objective,
    }
}

fn coupled(sets: &[SetSummary], n: usize, l_min: f64, init: MeanLengths) -> Result<LossFit> {
    // Hessian/2 = A^T A and linear term A^T T for indicator rows A_i
    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for s in sets {
        for &a in &s.actions {
            rhs[a] += s.frames as f64;
            for &b in &s.actions {
                gram[a * n + b] += 1.0;
            }
        }
    }
    let lipschitz = 2.0
        * (0..n)
            .map(|r| gram[r * n..(r + 1) * n].iter().sum::<f64>())
            .fold(0.0, f64::max);
    let mut lambda: Vec<f64> = init.lambda.iter().map(|&v| v.max(l_min)).collect();
    if lipschitz == 0.0 {
        return Ok(LossFit {
            objective: coupled_objective(sets, &lambda),
            means: MeanLengths { lambda, flagged: init.flagged },
            iterations: 0,
            residual: 0.0,
        });
    }
    let step = 1.0 / lipschitz;
    let mut grad = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..=MAX_ITERATIONS {
        for r in 0..n {
            let row = &gram[r * n..(r + 1) * n];
            grad[r] = 2.0 * (row.iter().zip(&lambda).map(|(g, l)| g * l).sum::<f64>() - rhs[r]);
        }
        residual = projected_gradient_norm(&lambda, &grad, l_min);
        let scale = lambda.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        if residual <= STATIONARITY_TOL * scale {
            return Ok(LossFit {
                objective: coupled_objective(sets, &lambda),
                means: MeanLengths { lambda, flagged: init.flagged },
                iterations: it,
                residual,
            });
        }
        if it == MAX_ITERATIONS {
            break;
        }
        for (l, g) in lambda.iter_mut().zip(&grad) {
            *l = (*l - step * g).max(l_min);
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        residual,
        best: lambda,
    })
}

fn projected_gradient_norm(lambda: &[f64], grad: &[f64], l_min: f64) -> f64 {
    lambda
        .iter()
        .zip(grad)
        .map(|(&l, &g)| if l <= l_min && g > 0.0 { 0.0 } else { g * g })
        .sum::<f64>()
        .sqrt()
}

/// Spread of each class's length, read off the sampled sequences.
///
/// Each sampled sequence for video `i` splits `T_i` among its symbols in
/// proportion to their means; `sigma_c` is the sample standard deviation of
/// the frames allotted to `c`, floored at [`SIGMA_FLOOR`]. Classes with fewer
/// than two allotments get the floor and are flagged.
pub fn estimate_sigma(
    sets: &[SetSummary],
    samples: &[SampledSequence],
    lambda: &[f64],
) -> (Vec<f64>, Vec<bool>) {
    let n = lambda.len();
    let mut observed: Vec<Vec<f64>> = vec![Vec::new(); n];
    for s in samples {
        let total: f64 = s.labels.iter().map(|&c| lambda[c]).sum();
        let frames = sets[s.video].frames as f64;
        for &c in &s.labels {
            observed[c].push(frames * lambda[c] / total);
        }
    }
    let mut sigma = Vec::with_capacity(n);
    let mut flagged = Vec::with_capacity(n);
    for obs in observed {
        if obs.len() < 2 {
            sigma.push(SIGMA_FLOOR);
            flagged.push(true);
            continue;
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
        sigma.push(var.sqrt().max(SIGMA_FLOOR));
        flagged.push(false);
    }
    (sigma, flagged)
}
