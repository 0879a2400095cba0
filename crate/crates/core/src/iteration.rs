//! Successive-approximation driver shared by every solver.

use crate::diagnostics::IterationTrace;
use crate::error::{Error, Result};
use crate::StopCriteria;

pub(crate) struct Picard<'a> {
    pub what: &'static str,
    pub stop: StopCriteria,
    /// Node-wise map into equation space for the residual (`Q` for the
    /// nonlinear equations, identity otherwise).
    pub residual_map: Option<&'a (dyn Fn(f64) -> f64 + Sync)>,
    /// Abort once the sup-norm of an iterate exceeds this value.
    pub ceiling: Option<f64>,
}

impl Picard<'_> {
    /// Runs `x_{n+1} = step(x_n)` from `start`. `observe(n, x_n, x_{n+1})`
    /// sees every transition before the stopping test.
    pub fn run<S, O>(&self, start: Vec<f64>, mut step: S, mut observe: O) -> Result<(Vec<f64>, IterationTrace)>
    where
        S: FnMut(&[f64], &mut Vec<f64>) -> Result<()>,
        O: FnMut(usize, &[f64], &[f64]),
    {
        let mut current = start;
        let mut next = vec![0.0; current.len()];
        let mut trace = IterationTrace::new(self.stop.tol);
        for n in 0..self.stop.max_iter {
            step(&current, &mut next)?;
            if let Some(index) = next.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
            let mut delta: f64 = 0.0;
            let mut residual: f64 = 0.0;
            let mut rise = f64::NEG_INFINITY;
            let mut drop = f64::NEG_INFINITY;
            for (a, b) in current.iter().zip(&next) {
                delta = delta.max((b - a).abs());
                rise = rise.max(b - a);
                drop = drop.max(a - b);
                let r = match self.residual_map {
                    Some(f) => (f(*b) - f(*a)).abs(),
                    None => (b - a).abs(),
                };
                residual = residual.max(r);
            }
            trace.push(delta, residual, rise, drop);
            observe(n, &current, &next);
            if let Some(ceiling) = self.ceiling {
                let sup = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if sup > ceiling {
                    return Err(Error::Divergence {
                        what: self.what,
                        sup,
                        ceiling,
                    });
                }
            }
            std::mem::swap(&mut current, &mut next);
            if delta < self.stop.tol {
                trace.converged = true;
                return Ok((current, trace));
            }
        }
        Err(Error::IterationCap {
            what: self.what,
            iterations: trace.iterations,
            last_delta: trace.sup_deltas.last().copied().unwrap_or(f64::NAN),
        })
    }
}
