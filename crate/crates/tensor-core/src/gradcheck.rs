//! Central finite-difference gradient checking.

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::TensorError;

pub const STEP: f64 = 1e-4;

/// `‖a − n‖ / max(‖a‖, ‖n‖, 1e-12)`.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff = analytic.sub(numeric).expect("same shape").frobenius();
    diff / analytic.frobenius().max(numeric.frobenius()).max(1e-12)
}

/// Numeric gradient of `f` at `x` by central differences.
pub fn numeric_gradient(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut g = Tensor::zeros(x.rows, x.cols);
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + STEP;
        let plus = f(&probe);
        probe.data[i] = orig - STEP;
        let minus = f(&probe);
        probe.data[i] = orig;
        g.data[i] = (plus - minus) / (2.0 * STEP);
    }
    g
}

/// Compare reverse-mode gradients of a scalar function of several inputs with
/// central differences. Returns the largest relative error over the inputs.
pub fn check<F>(inputs: &[Tensor], build: F) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let store = crate::tape::ParamStore::new();
    let eval = |xs: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new(&store);
        let vars: Vec<Var> = xs.iter().map(|x| tape.input(x.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let mut tape = Tape::new(&store);
    let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].rows, inputs[i].cols));
        let mut failure = None;
        let numeric = numeric_gradient(&inputs[i], |probe| {
            let mut xs = inputs.to_vec();
            xs[i] = probe.clone();
            eval(&xs).unwrap_or_else(|e| {
                failure = Some(e);
                f64::NAN
            })
        });
        if let Some(e) = failure {
            return Err(e);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Compare parameter gradients (dense or row-sparse) of a scalar function of a
/// parameter store with central differences, for each parameter in `ids`.
pub fn check_params<F>(
    store: &crate::tape::ParamStore,
    ids: &[crate::tape::ParamId],
    build: F,
) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape) -> Result<Var, TensorError>,
{
    let grads = {
        let mut tape = Tape::new(store);
        let out = build(&mut tape)?;
        tape.backward(out)?.params
    };
    let mut worst: f64 = 0.0;
    for &id in ids {
        let value = store.value(id);
        let mut analytic = grads
            .dense
            .get(&id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(value.rows, value.cols));
        if let Some(rows) = grads.rows.get(&id) {
            for (r, g) in rows {
                for (a, x) in analytic.row_slice_mut(*r).iter_mut().zip(g) {
                    *a += x;
                }
            }
        }
        let mut failure = None;
        let numeric = numeric_gradient(value, |probe| {
            let mut s = store.clone();
            *s.value_mut(id) = probe.clone();
            let mut tape = Tape::new(&s);
            match build(&mut tape) {
                Ok(v) => tape.value(v).item(),
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}
