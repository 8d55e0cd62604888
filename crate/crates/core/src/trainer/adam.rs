use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam parameters {self:?}")))
        }
    }
}

/// Moments of one parameter block with its own step counter, so blocks that
/// are updated at different rates each get the correct bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamBlock {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamBlock {
    pub fn new(n: usize) -> Self {
        AdamBlock {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Bias-corrected Adam increment for `grad`; `lr_scale[i]` multiplies the
    /// learning rate of coordinate `i` (all 1 when empty).
    ///
    /// Returns `None`, leaving the moments untouched, when the gradient is not
    /// finite.
    pub fn increment(&mut self, grad: &[f64], lr: f64, lr_scale: &[f64], hp: &AdamParams) -> Option<Vec<f64>> {
        assert_eq!(grad.len(), self.m.len(), "adam: gradient size mismatch");
        if !grad.iter().all(|g| g.is_finite()) {
            return None;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - hp.beta1.powi(t);
        let c2 = 1.0 - hp.beta2.powi(t);
        let mut out = Vec::with_capacity(grad.len());
        for (i, &g) in grad.iter().enumerate() {
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g;
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            let scale = lr_scale.get(i).copied().unwrap_or(1.0);
            out.push(-lr * scale * mhat / (vhat.sqrt() + hp.eps));
        }
        Some(out)
    }
}

/// Adds the Adam increment to `params` in place. Returns `false` (and leaves
/// everything unchanged) when the step is rejected for a non-finite gradient.
pub fn adam_step(block: &mut AdamBlock, params: &mut [f64], grad: &[f64], lr: f64, hp: &AdamParams) -> bool {
    assert_eq!(params.len(), grad.len(), "adam: parameter size mismatch");
    match block.increment(grad, lr, &[], hp) {
        Some(d) => {
            for (p, d) in params.iter_mut().zip(d) {
                *p += d;
            }
            true
        }
        None => {
            log::warn!("adam step rejected: non-finite gradient");
            false
        }
    }
}

/// Optimizer moments for every pose pair and every depth field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub poses: Vec<AdamBlock>,
    pub depth: Vec<AdamBlock>,
    pub rejected_steps: u64,
}

impl OptimizerState {
    pub fn new(n_pairs: usize, depth_params: &[usize]) -> Self {
        OptimizerState {
            poses: (0..n_pairs).map(|_| AdamBlock::new(6)).collect(),
            depth: depth_params.iter().map(|&n| AdamBlock::new(n)).collect(),
            rejected_steps: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.poses.iter().chain(&self.depth).all(AdamBlock::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut b = AdamBlock::new(3);
        let mut p = [1.0, -2.0, 3.0];
        assert!(adam_step(&mut b, &mut p, &[0.0; 3], 0.1, &AdamParams::default()));
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_by_hand() {
        // m = 0.1g, v = 0.001g², m̂ = g, v̂ = g² ⇒ Δ = -lr·g/(|g| + ε).
        let hp = AdamParams::default();
        for g in [0.5, -3.0, 1e-6] {
            let mut b = AdamBlock::new(1);
            let mut p = [2.0];
            adam_step(&mut b, &mut p, &[g], 0.01, &hp);
            let want = 2.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - want).abs() < 1e-15, "{g}: {} vs {want}", p[0]);
        }
    }

    #[test]
    fn second_step_by_hand() {
        let hp = AdamParams::default();
        let mut b = AdamBlock::new(1);
        let mut p = [0.0];
        adam_step(&mut b, &mut p, &[1.0], 0.1, &hp);
        adam_step(&mut b, &mut p, &[-2.0], 0.1, &hp);
        let m = 0.9 * 0.1 + 0.1 * -2.0;
        let v = 0.999 * 0.001 + 0.001 * 4.0;
        let mhat = m / (1.0 - 0.81);
        let vhat = v / (1.0 - 0.999f64 * 0.999);
        let want = -0.1 * (1.0 / (1.0 + 1e-8)) - 0.1 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut b = AdamBlock::new(2);
        let mut p = [1.0, 1.0];
        adam_step(&mut b, &mut p, &[0.5, 0.5], 0.1, &AdamParams::default());
        let (before_b, before_p) = (b.clone(), p);
        assert!(!adam_step(&mut b, &mut p, &[f64::NAN, 0.0], 0.1, &AdamParams::default()));
        assert_eq!(b, before_b);
        assert_eq!(p, before_p);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut b = AdamBlock::new(2);
            let mut p = [0.3, -0.7];
            for k in 0..50 {
                let g = [p[0] * 2.0 + k as f64 * 0.01, (p[1] - 1.0).sin()];
                adam_step(&mut b, &mut p, &g, 0.05, &AdamParams::default());
            }
            (b, p)
        };
        assert_eq!(run(), run());
    }
}
