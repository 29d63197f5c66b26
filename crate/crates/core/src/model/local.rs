//! Closed-form per-series ridge head.
//!
//! `w = argmin Σ_t (wᵀh_t − z_t)² + γ‖w − w₀‖²`, i.e. the solution of
//! `(HᵀH + γI) w = Hᵀz + γ w₀` (`w₀ = 0` when unanchored).

use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Per-series head fitted on one context window.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalWeights {
    pub w: Vec<f64>,
}

/// Differentiable ridge solve on the tape.
///
/// `h` is `n x d` (one row per real context position), `z` is `n x 1`,
/// `gamma` is `1 x 1` and `anchor`, when present, is `d x 1`.
pub fn fit_local_on_tape(
    tape: &mut Tape,
    h: Var,
    z: Var,
    gamma: Var,
    anchor: Option<Var>,
) -> Result<Var> {
    let [n, d] = tape.value(h).shape();
    if n == 0 {
        return Err(Error::Data("local fit needs at least one context row".into()));
    }
    if tape.value(z).shape() != [n, 1] {
        return Err(Error::Data(format!(
            "local fit targets are {:?}, expected {n}x1",
            tape.value(z).shape()
        )));
    }
    let ht = tape.transpose(h)?;
    let gram = tape.matmul(ht, h)?;
    let eye = tape.constant(Tensor::identity(d))?;
    let ridge = tape.mul(gamma, eye)?;
    let system = tape.add(gram, ridge)?;
    let mut rhs = tape.matmul(ht, z)?;
    if let Some(w0) = anchor {
        let pull = tape.mul(gamma, w0)?;
        rhs = tape.add(rhs, pull)?;
    }
    Ok(tape.solve_spd(system, rhs)?)
}

/// Ridge head for a fixed representation matrix.
pub fn fit_local(
    h_context: &Tensor,
    z_context: &[f64],
    gamma: f64,
    anchor: Option<&[f64]>,
) -> Result<LocalWeights> {
    if !(gamma > 0.0) {
        return Err(Error::config("gamma", "ridge penalty must be positive"));
    }
    if h_context.rows() != z_context.len() {
        return Err(Error::Data(format!(
            "{} representation rows but {} targets",
            h_context.rows(),
            z_context.len()
        )));
    }
    let mut tape = Tape::new();
    let h = tape.constant(h_context.clone())?;
    let z = tape.constant(Tensor::column(z_context.to_vec()))?;
    let g = tape.constant(Tensor::scalar(gamma))?;
    let a = match anchor {
        Some(w0) => {
            if w0.len() != h_context.cols() {
                return Err(Error::Data(format!(
                    "anchor has {} entries for representation width {}",
                    w0.len(),
                    h_context.cols()
                )));
            }
            Some(tape.constant(Tensor::column(w0.to_vec()))?)
        }
        None => None,
    };
    let w = fit_local_on_tape(&mut tape, h, z, g, a)?;
    Ok(LocalWeights {
        w: tape.value(w).data().to_vec(),
    })
}

/// `‖(HᵀH + γI)w − Hᵀz − γw₀‖∞` and `‖Hᵀz + γw₀‖∞`.
pub fn normal_equation_residual(
    h: &Tensor,
    z: &[f64],
    gamma: f64,
    anchor: Option<&[f64]>,
    w: &[f64],
) -> (f64, f64) {
    let d = h.cols();
    let zc = Tensor::column(z.to_vec());
    let wc = Tensor::column(w.to_vec());
    let gram = h.t_matmul(h).expect("square by construction");
    let mut lhs = gram.matmul(&wc).expect("conforming");
    for i in 0..d {
        lhs.data_mut()[i] += gamma * w[i];
    }
    let mut rhs = h.t_matmul(&zc).expect("conforming");
    if let Some(w0) = anchor {
        for i in 0..d {
            rhs.data_mut()[i] += gamma * w0[i];
        }
    }
    let res = lhs
        .data()
        .iter()
        .zip(rhs.data())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    (res, rhs.max_abs())
}
