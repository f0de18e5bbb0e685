use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Contract(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// First and second moment estimates, one pair of buffers per parameter.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Contract(format!("learning rate {learning_rate} must be finite and >= 0")));
        }
        Ok(Optimizer {
            kind,
            learning_rate,
            step: 0,
            moments: Vec::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradient buffers of `params`. Each entry is
    /// updated from its own state only, so parameter order is irrelevant.
    pub fn step(&mut self, params: &mut ModelParams) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
            return Err(Error::Contract(format!("parameter '{}' has no gradient", p.name)));
        }
        if self.moments.is_empty() && self.kind == OptimizerKind::Adam {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                .collect();
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let g = p.grad.as_ref().expect("checked above");
                    for (w, gv) in p.value.data_mut().iter_mut().zip(g) {
                        *w -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.moments.len() != params.len() {
                    return Err(Error::Contract("optimizer state does not match parameters".into()));
                }
                let t = self.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (p, (m, v)) in params.iter_mut().zip(&mut self.moments) {
                    let g = p.grad.as_ref().expect("checked above");
                    for (((w, gv), mi), vi) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gv;
                        *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gv * gv;
                        let mh = *mi / c1;
                        let vh = *vi / c2;
                        *w -= lr * mh / (vh.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(value: f64, grad: f64) -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("encoder.w", Tensor::new(vec![1], vec![value]).unwrap()).unwrap();
        p.get_mut(0).grad = Some(vec![grad]);
        p
    }

    #[test]
    fn sgd_unit_rate() {
        let mut p = single(1.0, 0.25);
        Optimizer::new(OptimizerKind::Sgd, 1.0).unwrap().step(&mut p).unwrap();
        assert_eq!(p.get(0).value.data(), &[0.75]);
        let mut p = single(1.0, 0.0);
        Optimizer::new(OptimizerKind::Sgd, 1.0).unwrap().step(&mut p).unwrap();
        assert_eq!(p.get(0).value.data(), &[1.0]);
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        for g in [1e-3, 0.5, -40.0] {
            let mut p = single(0.0, g);
            Optimizer::new(OptimizerKind::Adam, 0.01).unwrap().step(&mut p).unwrap();
            let want = -0.01 * g / (g.abs() + ADAM_EPS);
            assert!((p.get(0).value.data()[0] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_gradient_rejected() {
        let mut p = single(0.0, 0.0);
        p.get_mut(0).grad = None;
        assert!(Optimizer::new(OptimizerKind::Adam, 0.1).unwrap().step(&mut p).is_err());
    }
}
