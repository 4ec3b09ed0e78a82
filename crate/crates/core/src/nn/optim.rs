use serde::{Deserialize, Serialize};

use super::tensor::{Param, Real};
use crate::error::{invalid, Error, Result};

/// Elementwise SmoothL1: `0.5 d² / beta` for `|d| < beta`, else `|d| - 0.5 beta`.
/// `beta = 0` is plain L1.
pub fn smooth_l1_value(d: f64, beta: f64) -> f64 {
    if d.abs() < beta {
        0.5 * d * d / beta
    } else {
        d.abs() - 0.5 * beta
    }
}

/// Mean SmoothL1 loss over all elements and its gradient with respect to `pred`.
pub fn smooth_l1<T: Real>(pred: &[T], target: &[T], beta: f64) -> Result<(f64, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(invalid(format!("loss over {} predictions and {} targets", pred.len(), target.len())));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid("smooth L1 beta must be finite and non-negative"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = (p - t).as_f64();
            loss += smooth_l1_value(d, beta);
            let g = if d.abs() < beta { d / beta } else if d == 0.0 { 0.0 } else { d.signum() };
            T::lit(g / n)
        })
        .collect();
    Ok((loss / n, grad))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// Bias-corrected Adam; `l2` is added to the gradient as `l2 θ`.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, l2: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, l2, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        if let Some(i) = params.iter().position(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::TrainingDiverged { epoch: 0, reason: format!("non-finite gradient in parameter {i}") });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.value.len()) {
            return Err(Error::State("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (c1, c2) = (T::lit(1.0 - self.beta1.powi(t)), T::lit(1.0 - self.beta2.powi(t)));
        let (lr, eps, l2) = (T::lit(self.lr), T::lit(self.eps), T::lit(self.l2));
        let one = T::one();
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i] + l2 * p.value[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p.value[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn state(&self) -> AdamState {
        let wide = |v: &Vec<Vec<T>>| v.iter().map(|b| b.iter().map(|x| x.as_f64()).collect()).collect();
        AdamState { step: self.step, m: wide(&self.m), v: wide(&self.v) }
    }

    pub fn load_state(&mut self, s: &AdamState) {
        let narrow = |v: &Vec<Vec<f64>>| v.iter().map(|b| b.iter().map(|&x| T::lit(x)).collect()).collect();
        self.step = s.step;
        self.m = narrow(&s.m);
        self.v = narrow(&s.v);
    }
}
