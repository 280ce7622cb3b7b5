use super::NetworkParams;
use crate::error::{Error, Result};

/// One ADADELTA coordinate update. Updates both running averages in place
/// and returns the parameter change:
///
/// ```text
/// E[g²]  ← ρ·E[g²] + (1−ρ)·g²
/// Δx     = −√(E[Δx²] + ε) / √(E[g²] + ε) · g
/// E[Δx²] ← ρ·E[Δx²] + (1−ρ)·Δx²
/// ```
pub fn adadelta_delta(sq_grad: &mut f64, sq_delta: &mut f64, g: f64, rho: f64, eps: f64) -> f64 {
    *sq_grad = rho * *sq_grad + (1.0 - rho) * g * g;
    let dx = -((*sq_delta + eps).sqrt() / (*sq_grad + eps).sqrt()) * g;
    *sq_delta = rho * *sq_delta + (1.0 - rho) * dx * dx;
    dx
}

/// ADADELTA optimizer state: per-parameter running averages of squared
/// gradients and squared updates. There is no learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    sq_grad: Vec<Vec<f64>>,
    sq_delta: Vec<Vec<f64>>,
}

impl Adadelta {
    pub const DEFAULT_RHO: f64 = 0.95;
    pub const DEFAULT_EPS: f64 = 1e-6;

    pub fn new(params: &NetworkParams, rho: f64, eps: f64) -> Result<Self> {
        Self::with_lengths(params.tensors().iter().map(|t| t.len()), rho, eps)
    }

    pub fn with_defaults(params: &NetworkParams) -> Self {
        Self::new(params, Self::DEFAULT_RHO, Self::DEFAULT_EPS).expect("default hyperparameters are valid")
    }

    /// State for an arbitrary list of flat parameter buffers.
    pub fn with_lengths(lengths: impl IntoIterator<Item = usize>, rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidArgument(format!("ADADELTA rho must lie in (0, 1), got {rho}")));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("ADADELTA epsilon must be > 0, got {eps}")));
        }
        let lengths: Vec<usize> = lengths.into_iter().collect();
        Ok(Self {
            rho,
            eps,
            sq_grad: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            sq_delta: lengths.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn sq_grad(&self) -> &[Vec<f64>] {
        &self.sq_grad
    }

    pub fn sq_delta(&self) -> &[Vec<f64>] {
        &self.sq_delta
    }

    /// Updates buffer `slot` with gradient `grads`, writing the parameter
    /// change into `delta`.
    pub fn update(&mut self, slot: usize, grads: &[f64], delta: &mut [f64]) -> Result<()> {
        let (sg, sd) = match (self.sq_grad.get_mut(slot), self.sq_delta.get_mut(slot)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Shape(format!("no optimizer slot {slot}"))),
        };
        if grads.len() != sg.len() || delta.len() != sg.len() {
            return Err(Error::Shape(format!(
                "optimizer slot {slot} holds {} values, got {} gradients",
                sg.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient in optimizer slot {slot}")));
        }
        for (((g, a), b), d) in grads.iter().zip(sg.iter_mut()).zip(sd.iter_mut()).zip(delta) {
            *d = adadelta_delta(a, b, *g, self.rho, self.eps);
        }
        Ok(())
    }

    /// Applies one update to every parameter tensor in place.
    pub fn apply(&mut self, params: &mut NetworkParams, grads: &NetworkParams) -> Result<()> {
        if self.sq_grad.len() != 10 {
            return Err(Error::Shape("optimizer was not built for network parameters".into()));
        }
        let rho = self.rho;
        let eps = self.eps;
        for (slot, (p, g)) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
            let (sg, sd) = (&mut self.sq_grad[slot], &mut self.sq_delta[slot]);
            if p.len() != sg.len() || g.len() != sg.len() {
                return Err(Error::Shape(format!("optimizer slot {slot} does not match its parameter")));
            }
            for (((x, &gv), a), b) in p.data_mut().iter_mut().zip(g.data()).zip(sg.iter_mut()).zip(sd.iter_mut()) {
                *x += adadelta_delta(a, b, gv, rho, eps);
            }
        }
        Ok(())
    }
}
