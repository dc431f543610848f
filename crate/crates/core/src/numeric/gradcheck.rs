use super::params::{ParamId, ParameterStore};
use super::tape::{Tape, Var};
use super::NumericError;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max |analytic − numeric| / max(1, |numeric|) over trainable parameters.
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub params: Vec<ParamCheck>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub frozen: bool,
    pub max_rel_error: f64,
    /// Largest |analytic gradient| entry; exactly zero for frozen parameters.
    pub analytic_max_abs: f64,
}

impl GradCheckReport {
    pub fn param(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Checks the gradient of a scalar tape program against central differences
/// with step `eps`. Frozen parameters are reported but excluded from the
/// maximum, since their analytic gradient is zero by construction.
pub fn grad_check<F>(store: &ParameterStore, eps: f64, f: F) -> Result<GradCheckReport, NumericError>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var, NumericError>,
{
    let eval = |s: &ParameterStore| -> Result<f64, NumericError> {
        let mut tape = Tape::new();
        let out = f(&mut tape, s)?;
        tape.check_finite()?;
        let v = tape.value(out);
        if v.len() != 1 {
            return Err(NumericError::NotScalar {
                shape: v.shape().to_vec(),
            });
        }
        Ok(v.item())
    };

    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let grads = tape.backward(out, store)?;
    drop(tape);

    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        params: Vec::new(),
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let frozen = store.is_frozen(id);
        let analytic = grads.get(id);
        let analytic_max_abs = analytic.map_or(0.0, |g| g.max_abs());
        let mut worst = 0.0f64;
        if !frozen {
            for k in 0..store.value(id).len() {
                let orig = store.value(id).data()[k];
                work.value_mut(id).data_mut()[k] = orig + eps;
                let plus = eval(&work)?;
                work.value_mut(id).data_mut()[k] = orig - eps;
                let minus = eval(&work)?;
                work.value_mut(id).data_mut()[k] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic.map_or(0.0, |g| g.data()[k]);
                let err = (a - numeric).abs() / numeric.abs().max(1.0);
                if !err.is_finite() {
                    return Err(NumericError::NonFinite { op: "grad_check" });
                }
                worst = worst.max(err);
            }
        }
        if !frozen && (report.worst_param.is_none() || worst > report.max_rel_error) {
            report.max_rel_error = worst;
            report.worst_param = Some(store.name(id).to_string());
        }
        report.params.push(ParamCheck {
            name: store.name(id).to_string(),
            frozen,
            max_rel_error: worst,
            analytic_max_abs,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    #[test]
    fn sum_has_unit_gradient() {
        let mut s = ParameterStore::new();
        s.insert("theta", Tensor::from_rows(&[vec![0.3, -1.2, 4.0]]), false)
            .unwrap();
        let r = grad_check(&s, 1e-4, |tape, s| {
            let t = tape.param(s, s.id("theta").unwrap());
            Ok(tape.sum(t))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-10, "{}", r.max_rel_error);
        assert_eq!(r.params[0].analytic_max_abs, 1.0);
    }

    #[test]
    fn sigmoid_of_dot_product() {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::from_rows(&[vec![0.5, -0.25, 0.75]]), false)
            .unwrap();
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![-0.5]]);
        let r = grad_check(&s, 1e-4, |tape, s| {
            let w = tape.param(s, s.id("w").unwrap());
            let xv = tape.constant(x.clone());
            let z = tape.matmul(w, xv)?;
            Ok(tape.sigmoid(z))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{}", r.max_rel_error);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        // abs at exactly zero has a zero subgradient but a finite-difference of 0
        // as well, so use a deliberately non-differentiable kink away from zero.
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::scalar(1e-5), false).unwrap();
        let r = grad_check(&s, 1e-4, |tape, s| {
            let w = tape.param(s, s.id("w").unwrap());
            Ok(tape.abs(w))
        })
        .unwrap();
        assert!(r.max_rel_error > 0.5);
    }
}
