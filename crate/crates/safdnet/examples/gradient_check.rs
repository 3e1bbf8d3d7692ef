//! Finite-difference verification of the whole trainable surface: the
//! full network loss is gradchecked parameter group by parameter group,
//! for every ablation variant, in 64-bit.
//!
//! Run with: cargo run --release --example gradient_check

use safdnet::model::{Ablation, ConvSpec, HyperConfig, Mode, ModelParams};
use safdnet::numerics::{gradcheck, GradEval, NumericsError, Tensor};
use safdnet::rng::Rng;
use safdnet::training::model_loss_and_grads;

fn main() {
    let hyper = HyperConfig {
        channels: 2,
        window_len: 64,
        conv: vec![
            ConvSpec { kernel: 5, stride: 2, out_channels: 8 },
            ConvSpec { kernel: 5, stride: 2, out_channels: 8 },
        ],
        lstm_hidden: 8,
        lstm_pool: 4,
        d_k: 8,
        d_v: 8,
        dropout_p: 0.0,
        horizon_min: 5,
        standardize: true,
    };
    let mut rng = Rng::seed_from(424242);
    let x = Tensor::<f64>::from_vec(&[2, 64], (0..128).map(|_| rng.gauss()).collect());

    for ablation in Ablation::ALL {
        let template = ModelParams::<f64>::init(hyper.clone(), ablation, 7);
        let live = template.live_param_names();
        let params: Vec<(String, Tensor<f64>)> = template
            .named_tensors()
            .into_iter()
            .filter(|(n, _)| live.contains(n))
            .map(|(n, t)| (n, t.clone()))
            .collect();
        let n_scalars: usize = params.iter().map(|(_, t)| t.len()).sum();
        let template_ref = &template;
        let x_ref = &x;
        let report = gradcheck(
            &format!("safdnet-{}", ablation),
            &params,
            1e-4,
            1e-5,
            |p, want| {
                let mut model = template_ref.clone();
                for (name, tensor) in p {
                    *model.tensor_mut(name).expect("known param") = tensor.clone();
                }
                let (loss, grads) = model_loss_and_grads(&model, x_ref, 1.0, Mode::Eval, None)
                    .map_err(|e| NumericsError::NonFiniteLoss {
                        context: e.to_string(),
                    })?;
                Ok(GradEval {
                    loss,
                    grads: want.then(|| grads.into_iter().collect()),
                })
            },
        )
        .expect("gradcheck runs");

        println!(
            "{:<14} {} scalars in {} groups: max rel err {:.3e} (tolerance {:.0e}) -> {}",
            ablation.name(),
            n_scalars,
            report.per_param_err.len(),
            report.max_rel_err,
            report.tolerance,
            if report.passed { "pass" } else { "FAIL" }
        );
        let mut worst: Vec<_> = report.per_param_err.iter().collect();
        worst.sort_by(|a, b| b.1.partial_cmp(a.1).unwrap());
        for (name, err) in worst.iter().take(3) {
            println!("    {:<14} {:.3e}", name, err);
        }
        assert!(report.passed);
    }
}
