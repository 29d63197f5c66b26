use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

/// sMAPE/100 on the tape: `(2/H) Σ |z − ẑ| / (|z| + |ẑ|)`, in `[0, 2]`.
///
/// `forecast` is `H x 1`. Terms with `|z| + |ẑ| = 0` contribute 0.
pub fn smape_loss(tape: &mut Tape, forecast: Var, target: &[f64]) -> Result<Var> {
    let [h, cols] = tape.value(forecast).shape();
    if cols != 1 || h != target.len() || h == 0 {
        return Err(Error::Data(format!(
            "loss needs matching non-empty vectors, got {h}x{cols} forecasts and {} targets",
            target.len()
        )));
    }
    let z = tape.constant(Tensor::column(target.to_vec()))?;
    let diff = tape.sub(forecast, z)?;
    let num = tape.abs(diff)?;
    let mag = tape.abs(forecast)?;
    let offsets: Vec<f64> = target
        .iter()
        .zip(tape.value(mag).data())
        .map(|(zv, fv)| {
            let d = zv.abs() + fv;
            // 0/0 becomes 0/1; the numerator is then exactly 0
            if d == 0.0 {
                1.0
            } else {
                zv.abs()
            }
        })
        .collect();
    let offsets = tape.constant(Tensor::column(offsets))?;
    let den = tape.add(mag, offsets)?;
    let ratio = tape.div(num, den)?;
    let total = tape.sum(ratio)?;
    Ok(tape.scale(total, 2.0 / h as f64)?)
}

/// Plain-number version of [`smape_loss`].
pub fn smape_loss_value(forecast: &[f64], target: &[f64]) -> Result<f64> {
    if forecast.len() != target.len() || forecast.is_empty() {
        return Err(Error::Data(format!(
            "loss needs matching non-empty vectors, got {} forecasts and {} targets",
            forecast.len(),
            target.len()
        )));
    }
    let s: f64 = forecast
        .iter()
        .zip(target)
        .map(|(&f, &z)| {
            let d = f.abs() + z.abs();
            if d == 0.0 {
                0.0
            } else {
                (z - f).abs() / d
            }
        })
        .sum();
    Ok(2.0 * s / forecast.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_tape(f: &[f64], z: &[f64]) -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let v = tape.param(Tensor::column(f.to_vec())).unwrap();
        let l = smape_loss(&mut tape, v, z).unwrap();
        let g = tape.backward(l).unwrap();
        (tape.value(l).item(), g.get(v).unwrap().data().to_vec())
    }

    #[test]
    fn spec_examples() {
        assert_eq!(on_tape(&[3.0, -2.0], &[3.0, -2.0]).0, 0.0);
        assert_eq!(on_tape(&[300.0], &[100.0]).0, 1.0);
        let (l, g) = on_tape(&[0.0], &[0.0]);
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn matches_plain_value_and_stays_bounded() {
        let f = [1.0, -4.0, 0.0, 2.5];
        let z = [2.0, 3.0, 0.0, -1.0];
        let (l, _) = on_tape(&f, &z);
        assert!((l - smape_loss_value(&f, &z).unwrap()).abs() < 1e-15);
        assert!((0.0..=2.0).contains(&l));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut tape = Tape::new();
        let v = tape.param(Tensor::column(vec![1.0, 2.0])).unwrap();
        assert!(smape_loss(&mut tape, v, &[1.0]).is_err());
        assert!(smape_loss_value(&[1.0], &[]).is_err());
    }
}
