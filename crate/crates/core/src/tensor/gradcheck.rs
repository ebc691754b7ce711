use super::{NodeId, ParamSet, Tape};
use crate::error::Result;

/// Largest elementwise `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn evaluate<F>(params: &ParamSet, f: &F) -> Result<f64>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<NodeId>,
{
    let mut tape = Tape::with_params(params);
    let root = f(&mut tape)?;
    Ok(tape.scalar(root))
}

/// Compares the tape's analytic gradients against central differences
/// `(f(p+h) - f(p-h)) / 2h` for every element of every parameter and returns
/// the maximum relative error.
///
/// `f` must build the same deterministic scalar function on each call.
/// Parameters are restored bit-exactly afterwards.
pub fn grad_check<F>(params: &mut ParamSet, h: f64, f: F) -> Result<f64>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<NodeId>,
{
    let grads = {
        let mut tape = Tape::with_params(params);
        let root = f(&mut tape)?;
        tape.backward(root)?
    };

    let mut worst = 0.0f64;
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let n = params.get(id).numel();
        let analytic = grads.get(id).map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let original = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = original + h;
            let plus = evaluate(params, &f);
            params.get_mut(id).data_mut()[i] = original - h;
            let minus = evaluate(params, &f);
            params.get_mut(id).data_mut()[i] = original;
            *slot = (plus? - minus?) / (2.0 * h);
        }
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_function_is_exact() {
        let mut set = ParamSet::new();
        let w = set.insert("w", Tensor::vector(vec![0.3, -1.2, 2.5]));
        let err = grad_check(&mut set, 1e-4, |t| {
            let x = t.param(w)?;
            let y = t.scale(x, 3.0);
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn params_are_restored() {
        let mut set = ParamSet::new();
        let w = set.insert("w", Tensor::vector(vec![0.1, 0.7]));
        let before = set.clone();
        grad_check(&mut set, 1e-4, |t| {
            let x = t.param(w)?;
            let y = t.gelu(x);
            Ok(t.sum(y))
        })
        .unwrap();
        assert_eq!(set, before);
    }

    #[test]
    fn corrupted_rule_is_detected() {
        let mut set = ParamSet::new();
        let w = set.insert("w", Tensor::vector(vec![0.4, -0.9]));
        let err = grad_check(&mut set, 1e-4, |t| {
            let x = t.param(w)?;
            let y = t.sigmoid(x);
            t.inject_backward_fault(y, 1.5);
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(err > 1e-2, "{err}");
    }
}
