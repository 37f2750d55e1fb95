use super::matrix::Matrix;
use crate::error::{Result, SniaError};

/// Learning-rate schedule applied on top of the base rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiplies the base rate by `1 - step/total_steps`, floored at zero.
    LinearDecay { total_steps: usize },
}

/// Adam optimizer state for a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 penalty: `weight_decay * w` is added to each gradient.
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    step: usize,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64, schedule: LrSchedule, params: &[&Matrix]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            schedule,
            step: 0,
            first_moment: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            second_moment: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Effective learning rate for the upcoming step.
    pub fn current_lr(&self) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::LinearDecay { total_steps } => {
                let frac = 1.0 - self.step as f64 / total_steps as f64;
                self.lr * frac.max(0.0)
            }
        }
    }

    /// One bias-corrected Adam update over the parameter list.
    ///
    /// `grads[i]` may be `None` when nothing flowed into that parameter; its
    /// moments still decay so the schedule stays aligned.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Option<&Matrix>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(SniaError::Usage(format!(
                "adam_step over {} params with {} grads, state built for {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let p = &mut *params[i];
            if p.shape() != self.first_moment[i].shape() {
                return Err(SniaError::dimension(
                    "adam_step",
                    format!("{}x{}", p.rows(), p.cols()),
                    format!("{}x{}", self.first_moment[i].rows(), self.first_moment[i].cols()),
                ));
            }
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            let g = grads[i];
            for j in 0..p.data().len() {
                let mut gj = g.map_or(0.0, |gm| gm.data()[j]);
                if self.weight_decay != 0.0 {
                    gj += self.weight_decay * p.data()[j];
                }
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p.data_mut()[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Scale gradients so their global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let total: f64 = grads.iter().map(|g| g.frobenius_sq()).sum::<f64>().sqrt();
    if total > max_norm && total > 0.0 {
        let factor = max_norm / total;
        for g in grads.iter_mut() {
            g.scale_assign(factor);
        }
    }
    total
}
