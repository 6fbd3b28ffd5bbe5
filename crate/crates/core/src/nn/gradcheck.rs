//! Central finite-difference verification of tape gradients.

use crate::error::Result;
use crate::nn::module::Module;
use crate::nn::tape::{Tape, Var};

/// Relative errors are measured as `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor, element)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the tape gradient of the scalar `loss` with
/// `(f(θ + ε) - f(θ - ε)) / 2ε` for every element of every tensor in
/// `module`. `loss` must be deterministic in the module's values.
pub fn grad_check<M, F>(module: &mut M, eps: f64, loss: F) -> Result<GradCheckReport>
where
    M: Module,
    F: Fn(&mut Tape, &M::Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let analytic: Vec<Vec<f64>> = {
        let (bound, vars) = module.bind(&mut tape);
        let out = loss(&mut tape, &bound)?;
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.wrt(v).to_vec()).collect()
    };

    let mut eval = |module: &M| -> Result<f64> {
        tape.clear();
        let (bound, _) = module.bind(&mut tape);
        let out = loss(&mut tape, &bound)?;
        tape.check_finite()?;
        Ok(tape.scalar(out))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (ti, grad) in analytic.iter().enumerate() {
        for (ei, &a) in grad.iter().enumerate() {
            let orig = module.tensors()[ti].values()[ei];
            module.tensors_mut()[ti].values_mut()[ei] = orig + eps;
            let plus = eval(module)?;
            module.tensors_mut()[ti].values_mut()[ei] = orig - eps;
            let minus = eval(module)?;
            module.tensors_mut()[ti].values_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst = (ti, ei);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
