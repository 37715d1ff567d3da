//! Adam optimizer and the halving learning-rate schedule.

use super::tensor::Param;
use crate::error::{Error, Result};

/// Learning rate halved every `halve_every` epochs from `initial`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub halve_every: u32,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 0.01,
            halve_every: 10,
        }
    }
}

impl LrSchedule {
    pub fn rate(&self, epoch: u32) -> f64 {
        self.initial * 0.5f64.powi((epoch / self.halve_every) as i32)
    }
}

/// Adam with bias correction at the reference defaults.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}

impl Adam {
    pub fn new() -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over `params` (stable order across calls) at rate `lr`.
    pub fn step(&mut self, lr: f64, params: &mut [&mut Param]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.value.numel()], vec![0.0; p.value.numel()]))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::invalid("optimizer state does not match parameters"));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);

        for (param, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            if param.value.numel() != m.len() {
                return Err(Error::invalid("parameter shape changed under optimizer"));
            }
            let grads = param.grad.data();
            for i in 0..m.len() {
                let g = grads[i] as f64;
                let mi = self.beta1 * m[i] as f64 + (1.0 - self.beta1) * g;
                let vi = self.beta2 * v[i] as f64 + (1.0 - self.beta2) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let delta = lr * m_hat / (v_hat.sqrt() + self.eps);
                let pv = &mut param.value.data_mut()[i];
                *pv = (*pv as f64 - delta) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn schedule_halves_every_ten_epochs() {
        let s = LrSchedule::default();
        assert_eq!(s.rate(0), 0.01);
        assert_eq!(s.rate(9), 0.01);
        assert_eq!(s.rate(10), 0.005);
        assert_eq!(s.rate(19), 0.005);
        assert_eq!(s.rate(20), 0.0025);
    }

    #[test]
    fn first_step_moves_by_about_lr_against_gradient_sign() {
        let mut p = Param::new(Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap());
        p.grad.data_mut().copy_from_slice(&[0.3, -2.0]);
        let mut adam = Adam::new();
        adam.step(0.01, &mut [&mut p]).unwrap();
        // Bias-corrected first step is lr * g / (|g| + eps) = lr * sign(g).
        assert!((p.value.data()[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((p.value.data()[1] - (1.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut p = Param::new(Tensor::from_vec(&[1], vec![0.5]).unwrap());
        let mut adam = Adam::new();
        adam.step(0.01, &mut [&mut p]).unwrap();
        assert_eq!(p.value.data()[0], 0.5);
    }
}
