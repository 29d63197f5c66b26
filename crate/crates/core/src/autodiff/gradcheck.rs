use super::{AdjointFault, AutodiffError, Tape, Tensor, Var};
use crate::Result;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |autodiff - central| / (|central| + 1e-8)` over all coordinates.
    pub max_rel_error: f64,
    /// `(tensor index, flat coordinate)` attaining the maximum.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(AutodiffError::NonScalarLoss {
            rows: v.rows(),
            cols: v.cols(),
        }
        .into());
    }
    let v = v.item();
    if !v.is_finite() {
        return Err(AutodiffError::NonFiniteObjective.into());
    }
    Ok(v)
}

/// Checks the gradient of the scalar function `f` at `params`.
///
/// `f` receives the parameters as trainable leaves of a fresh tape and must
/// be deterministic: it is re-evaluated twice per coordinate.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with_fault(f, params, eps, None)
}

/// [`grad_check`] with a deliberately broken adjoint on the analytic pass.
pub fn grad_check_with_fault<F>(
    f: F,
    params: &[Tensor],
    eps: f64,
    fault: Option<AdjointFault>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(crate::Error::config("eps", "must be positive"));
    }
    let mut tape = match fault {
        Some(fault) => Tape::with_fault(fault),
        None => Tape::new(),
    };
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let loss = f(&mut tape, &vars)?;
    if !tape.value(loss).is_scalar() || !tape.value(loss).item().is_finite() {
        return Err(AutodiffError::NonFiniteObjective.into());
    }
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.wrt_or_zeros(v, p))
        .collect();

    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for k in 0..params.len() {
        for i in 0..params[k].len() {
            let orig = params[k].data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let up = evaluate(&f, &probe)?;
            probe[k].data_mut()[i] = orig - eps;
            let down = evaluate(&f, &probe)?;
            probe[k].data_mut()[i] = orig;

            let central = (up - down) / (2.0 * eps);
            let rel = (analytic[k].data()[i] - central).abs() / (central.abs() + 1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((k, i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let theta = Tensor::column(vec![1.0, 2.0]);
        let r = grad_check(
            |tape, v| {
                let sq = tape.mul(v[0], v[0])?;
                Ok(tape.sum(sq)?)
            },
            &[theta],
            1e-6,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
        assert_eq!(r.coordinates, 2);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let theta = Tensor::column(vec![0.5, -3.0, 4.0]);
        let r = grad_check(
            |tape, _| Ok(tape.constant(Tensor::scalar(7.0))?),
            &[theta],
            1e-6,
        )
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn rejects_non_positive_eps() {
        let r = grad_check(|tape, v| Ok(tape.sum(v[0])?), &[Tensor::scalar(1.0)], 0.0);
        assert!(r.is_err());
    }
}
