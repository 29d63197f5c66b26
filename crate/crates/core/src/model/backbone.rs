//! Representation networks `h_t = h(x_t, h_{t-1}; Θ)`.

use rand::{Rng, RngCore};

use super::params::{BackboneKind, GlobalParams};
use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Zoneout masks are sampled.
    Train,
    /// Zoneout is replaced by its expectation; fully deterministic.
    Eval,
}

/// Tape handles for one LSTM layer. Gate rows are ordered input, forget,
/// output, candidate.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub enum BackboneVars {
    Rnn {
        layer1: LstmWeights,
        layer2: LstmWeights,
        proj_w: Var,
        proj_b: Var,
    },
    Ff {
        w1: Var,
        b1: Var,
        w2: Var,
        b2: Var,
    },
    Linear {
        w: Var,
        b: Var,
    },
}

/// Every global parameter registered on a tape.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub backbone: BackboneVars,
    pub gamma_raw: Var,
    pub head: Var,
    /// All parameter vars, parallel to `GlobalParams::params`.
    pub all: Vec<Var>,
}

impl ModelVars {
    /// Places the parameters on `tape`, as trainable leaves when `trainable`.
    pub fn register(tape: &mut Tape, params: &GlobalParams, trainable: bool) -> Result<Self> {
        let all = params
            .params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone(), trainable))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_vars(params, all)
    }

    /// Wraps vars already on a tape, given in `GlobalParams::params` order.
    pub fn from_vars(params: &GlobalParams, all: Vec<Var>) -> Result<Self> {
        if all.len() != params.params.len() {
            return Err(Error::Data(format!(
                "{} vars for {} parameter tensors",
                all.len(),
                params.params.len()
            )));
        }
        let var = |name: &str| -> Result<Var> {
            params
                .index_of(name)
                .map(|i| all[i])
                .ok_or_else(|| Error::Data(format!("model lacks tensor {name}")))
        };
        let lstm = |prefix: &str| -> Result<LstmWeights> {
            Ok(LstmWeights {
                w_ih: var(&format!("{prefix}.w_ih"))?,
                w_hh: var(&format!("{prefix}.w_hh"))?,
                bias: var(&format!("{prefix}.bias"))?,
            })
        };
        let backbone = match params.config.backbone {
            BackboneKind::Rnn => BackboneVars::Rnn {
                layer1: lstm("lstm1")?,
                layer2: lstm("lstm2")?,
                proj_w: var("proj.weight")?,
                proj_b: var("proj.bias")?,
            },
            BackboneKind::Ff => BackboneVars::Ff {
                w1: var("ff1.weight")?,
                b1: var("ff1.bias")?,
                w2: var("ff2.weight")?,
                b2: var("ff2.bias")?,
            },
            BackboneKind::Linear => BackboneVars::Linear {
                w: var("lin.weight")?,
                b: var("lin.bias")?,
            },
        };
        Ok(Self {
            backbone,
            gamma_raw: var("gamma_raw")?,
            head: var("head")?,
            all,
        })
    }
}

/// Hidden and cell vectors of one LSTM layer.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub hidden: Var,
    pub cell: Var,
}

/// Per-layer recurrent state; empty for the stateless backbones.
#[derive(Clone, Debug, Default)]
pub struct LstmState {
    pub layers: Vec<CellState>,
}

impl LstmState {
    /// Zero state for every layer.
    pub fn zeros(tape: &mut Tape, layers: usize, hidden: usize) -> Result<Self> {
        let z = tape.constant(Tensor::zeros(hidden, 1))?;
        Ok(Self {
            layers: vec![CellState { hidden: z, cell: z }; layers],
        })
    }
}

/// Zoneout mask: 1 keeps the previous coordinate.
fn zoneout_mask(len: usize, rate: f64, mode: Mode, rng: &mut dyn RngCore) -> Vec<f64> {
    match mode {
        Mode::Eval => vec![rate; len],
        Mode::Train => (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 1.0 } else { 0.0 })
            .collect(),
    }
}

/// One LSTM step with zoneout on the hidden and cell vectors.
///
/// Returns the layer output, which is the (zoned-out) hidden state.
pub fn lstm_cell(
    tape: &mut Tape,
    x: Var,
    state: CellState,
    w: &LstmWeights,
    zoneout: f64,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<CellState> {
    let hidden = tape.value(state.hidden).rows();
    let wx = tape.matmul(w.w_ih, x)?;
    let wh = tape.matmul(w.w_hh, state.hidden)?;
    let pre = tape.add(wx, wh)?;
    let pre = tape.add(pre, w.bias)?;
    if tape.value(pre).rows() != 4 * hidden {
        return Err(Error::Data(format!(
            "gate pre-activations have {} rows for hidden size {hidden}",
            tape.value(pre).rows()
        )));
    }
    let gates = tape.slice_rows(pre, 0, 3 * hidden)?;
    let gates = tape.sigmoid(gates)?;
    let cand = tape.slice_rows(pre, 3 * hidden, hidden)?;
    let cand = tape.tanh(cand)?;
    let input = tape.slice_rows(gates, 0, hidden)?;
    let forget = tape.slice_rows(gates, hidden, hidden)?;
    let output = tape.slice_rows(gates, 2 * hidden, hidden)?;

    let kept = tape.mul(forget, state.cell)?;
    let written = tape.mul(input, cand)?;
    let cell = tape.add(kept, written)?;
    let squashed = tape.tanh(cell)?;
    let hid = tape.mul(output, squashed)?;

    if zoneout == 0.0 {
        return Ok(CellState { hidden: hid, cell });
    }
    let mask_c = zoneout_mask(hidden, zoneout, mode, rng);
    let mask_h = zoneout_mask(hidden, zoneout, mode, rng);
    let cell = tape.blend(state.cell, cell, mask_c)?;
    let hid = tape.blend(state.hidden, hid, mask_h)?;
    Ok(CellState { hidden: hid, cell })
}

fn affine(tape: &mut Tape, w: Var, b: Var, x: Var) -> Result<Var> {
    let y = tape.matmul(w, x)?;
    Ok(tape.add(y, b)?)
}

/// Advances the backbone by one position, returning `h_t` (`d x 1`).
pub fn step(
    tape: &mut Tape,
    vars: &BackboneVars,
    x: Var,
    state: &mut LstmState,
    zoneout: f64,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    match *vars {
        BackboneVars::Rnn {
            layer1,
            layer2,
            proj_w,
            proj_b,
        } => {
            let s1 = lstm_cell(tape, x, state.layers[0], &layer1, zoneout, mode, rng)?;
            let s2 = lstm_cell(tape, s1.hidden, state.layers[1], &layer2, zoneout, mode, rng)?;
            state.layers[0] = s1;
            state.layers[1] = s2;
            let residual = tape.add(s2.hidden, s1.hidden)?;
            affine(tape, proj_w, proj_b, residual)
        }
        BackboneVars::Ff { w1, b1, w2, b2 } => {
            let a = affine(tape, w1, b1, x)?;
            let a = tape.relu(a)?;
            let b = affine(tape, w2, b2, a)?;
            Ok(tape.relu(b)?)
        }
        BackboneVars::Linear { w, b } => affine(tape, w, b, x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_weights(tape: &mut Tape, input: usize, hidden: usize) -> LstmWeights {
        LstmWeights {
            w_ih: tape.param(Tensor::zeros(4 * hidden, input)).unwrap(),
            w_hh: tape.param(Tensor::zeros(4 * hidden, hidden)).unwrap(),
            bias: tape.param(Tensor::zeros(4 * hidden, 1)).unwrap(),
        }
    }

    fn random_weights(tape: &mut Tape, input: usize, hidden: usize, seed: u64) -> LstmWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = |r: usize, c: usize| {
            let data = (0..r * c).map(|_| rng.gen_range(-0.5..0.5)).collect();
            tape.param(Tensor::new(r, c, data).unwrap()).unwrap()
        };
        LstmWeights {
            w_ih: t(4 * hidden, input),
            w_hh: t(4 * hidden, hidden),
            bias: t(4 * hidden, 1),
        }
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let mut tape = Tape::new();
        let w = zero_weights(&mut tape, 3, 4);
        let state = LstmState::zeros(&mut tape, 1, 4).unwrap().layers[0];
        let x = tape.constant(Tensor::zeros(3, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = lstm_cell(&mut tape, x, state, &w, 0.1, Mode::Eval, &mut rng).unwrap();
        assert_eq!(tape.value(out.hidden).data(), &[0.0; 4]);
        assert_eq!(tape.value(out.cell).data(), &[0.0; 4]);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let w = random_weights(&mut tape, 3, 4, 11);
            let mut state = LstmState::zeros(&mut tape, 1, 4).unwrap().layers[0];
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            for t in 0..5 {
                let x = tape
                    .constant(Tensor::column(vec![t as f64, 0.5, -1.0]))
                    .unwrap();
                state = lstm_cell(&mut tape, x, state, &w, 0.1, Mode::Eval, &mut rng).unwrap();
            }
            tape.value(state.hidden).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn full_zoneout_freezes_state() {
        let mut tape = Tape::new();
        let w = random_weights(&mut tape, 2, 3, 5);
        let h0 = tape.constant(Tensor::column(vec![0.1, -0.2, 0.3])).unwrap();
        let c0 = tape.constant(Tensor::column(vec![1.0, 2.0, -3.0])).unwrap();
        let mut state = CellState { hidden: h0, cell: c0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..4 {
            let x = tape.constant(Tensor::column(vec![1.0, -1.0])).unwrap();
            state = lstm_cell(&mut tape, x, state, &w, 1.0, Mode::Train, &mut rng).unwrap();
        }
        assert_eq!(tape.value(state.hidden).data(), &[0.1, -0.2, 0.3]);
        assert_eq!(tape.value(state.cell).data(), &[1.0, 2.0, -3.0]);
    }

    #[test]
    fn eval_zoneout_is_expectation_of_train_masks() {
        let mut tape = Tape::new();
        let w = random_weights(&mut tape, 2, 3, 5);
        let h0 = tape.constant(Tensor::column(vec![0.4, -0.2, 0.3])).unwrap();
        let c0 = tape.constant(Tensor::column(vec![1.0, 0.5, -0.3])).unwrap();
        let state = CellState { hidden: h0, cell: c0 };
        let x = tape.constant(Tensor::column(vec![1.0, -1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let no_zoneout = lstm_cell(&mut tape, x, state, &w, 0.0, Mode::Eval, &mut rng).unwrap();
        let eval = lstm_cell(&mut tape, x, state, &w, 0.1, Mode::Eval, &mut rng).unwrap();
        for i in 0..3 {
            let expected =
                0.1 * tape.value(c0).data()[i] + 0.9 * tape.value(no_zoneout.cell).data()[i];
            assert!((tape.value(eval.cell).data()[i] - expected).abs() < 1e-15);
        }
    }
}
