//! Finite-difference verification harness. Every trainable operation in
//! the crate has to pass this before it is trusted in the training path.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::NumericsError;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub op_name: String,
    pub max_rel_err: f64,
    pub per_param_err: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// One evaluation of the function under test: the scalar loss and, when
/// requested, its analytic gradients keyed by parameter name.
pub struct GradEval {
    pub loss: f64,
    pub grads: Option<BTreeMap<String, Tensor<f64>>>,
}

/// Compare analytic gradients against central differences
/// (f(θ+ε) − f(θ−ε)) / 2ε for every scalar entry of every named parameter.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
pub fn gradcheck<F>(
    op_name: &str,
    params: &[(String, Tensor<f64>)],
    eps: f64,
    tolerance: f64,
    eval: F,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&[(String, Tensor<f64>)], bool) -> Result<GradEval, NumericsError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(NumericsError::InvalidEps(eps));
    }

    let base = eval(params, true)?;
    if !base.loss.is_finite() {
        return Err(NumericsError::NonFiniteLoss {
            context: format!("{}: unperturbed evaluation", op_name),
        });
    }
    let analytic = base
        .grads
        .ok_or_else(|| NumericsError::MissingGradients(op_name.to_string()))?;

    let mut per_param_err = BTreeMap::new();
    let mut max_rel_err = 0.0f64;

    for (p_idx, (name, tensor)) in params.iter().enumerate() {
        let a_grad = analytic
            .get(name)
            .ok_or_else(|| NumericsError::MissingGradients(format!("{}: {}", op_name, name)))?;
        let mut param_max = 0.0f64;

        for i in 0..tensor.len() {
            let probe = |delta: f64, sign: &str| -> Result<f64, NumericsError> {
                let mut perturbed: Vec<(String, Tensor<f64>)> = params.to_vec();
                perturbed[p_idx].1.data_mut()[i] += delta;
                let out = eval(&perturbed, false)?;
                if !out.loss.is_finite() {
                    return Err(NumericsError::NonFiniteLoss {
                        context: format!("{}: {}[{}] {}eps", op_name, name, i, sign),
                    });
                }
                Ok(out.loss)
            };
            let plus = probe(eps, "+")?;
            let minus = probe(-eps, "-")?;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = a_grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            param_max = param_max.max(rel);
        }
        per_param_err.insert(name.clone(), param_max);
        max_rel_err = max_rel_err.max(param_max);
    }

    Ok(GradCheckReport {
        op_name: op_name.to_string(),
        max_rel_err,
        per_param_err,
        tolerance,
        passed: max_rel_err <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        let params = vec![("w".to_string(), Tensor::scalar(3.0))];
        let report = gradcheck("quadratic", &params, 1e-5, 1e-9, |p, want| {
            let w = p[0].1.data()[0];
            Ok(GradEval {
                loss: w * w,
                grads: want.then(|| {
                    let mut m = BTreeMap::new();
                    m.insert("w".to_string(), Tensor::scalar(2.0 * w));
                    m
                }),
            })
        })
        .unwrap();
        assert!(report.passed, "rel err {}", report.max_rel_err);
        assert!(report.max_rel_err < 1e-9);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let params = vec![("w".to_string(), Tensor::scalar(2.0))];
        let report = gradcheck("broken", &params, 1e-5, 1e-6, |p, want| {
            let w = p[0].1.data()[0];
            Ok(GradEval {
                loss: w * w,
                grads: want.then(|| {
                    let mut m = BTreeMap::new();
                    m.insert("w".to_string(), Tensor::scalar(3.0 * w));
                    m
                }),
            })
        })
        .unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn eps_outside_range_rejected() {
        let params = vec![("w".to_string(), Tensor::scalar(1.0))];
        let err = gradcheck("bad-eps", &params, 1e-2, 1e-6, |_, _| {
            Ok(GradEval {
                loss: 0.0,
                grads: Some(BTreeMap::new()),
            })
        });
        assert!(matches!(err, Err(NumericsError::InvalidEps(_))));
    }

    #[test]
    fn non_finite_loss_names_the_perturbation() {
        let params = vec![("w".to_string(), Tensor::scalar(1.0))];
        let err = gradcheck("nan-producer", &params, 1e-5, 1e-6, |p, want| {
            let w = p[0].1.data()[0];
            let loss = if w > 1.0 { f64::NAN } else { w };
            Ok(GradEval {
                loss,
                grads: want.then(|| {
                    let mut m = BTreeMap::new();
                    m.insert("w".to_string(), Tensor::scalar(1.0));
                    m
                }),
            })
        });
        match err {
            Err(NumericsError::NonFiniteLoss { context }) => {
                assert!(context.contains("w[0] +eps"), "context: {}", context);
            }
            other => panic!("expected NonFiniteLoss, got {:?}", other.map(|r| r.passed)),
        }
    }
}
