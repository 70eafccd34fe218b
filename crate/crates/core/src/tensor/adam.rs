use super::{Element, ParamStore};
use crate::error::{contract_err, Result};

/// Adam with per-parameter first and second moment buffers.
#[derive(Debug, Clone)]
pub struct Adam<F: Element> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Element> Adam<F> {
    /// Default betas `(0.9, 0.999)` and `eps = 1e-8`.
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the populated gradients and clears them.
    pub fn step(&mut self, params: &mut ParamStore<F>) -> Result<()> {
        if self.first.is_empty() {
            for (_, _, t) in params.iter() {
                self.first.push(vec![F::ZERO; t.numel()]);
                self.second.push(vec![F::ZERO; t.numel()]);
            }
        }
        if self.first.len() != params.len() {
            return Err(contract_err!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                params.len()
            ));
        }
        for (_, name, t) in params.iter() {
            if t.requires_grad && t.grad.is_none() {
                return Err(contract_err!("parameter {name} has no gradient"));
            }
        }

        self.step += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one = F::ONE;
        let bc1 = F::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = F::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let lr = F::from_f64(self.lr);
        let eps = F::from_f64(self.eps);

        for ((t, m), v) in params
            .tensors_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            if !t.requires_grad {
                continue;
            }
            let grad = t.grad.take().expect("checked above");
            if m.len() != grad.len() {
                return Err(contract_err!("moment buffer does not match parameter shape"));
            }
            for (((p, &g), mi), vi) in t
                .data_mut()
                .iter_mut()
                .zip(&grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
