//! Interpretability exports: the learned frequency-importance mask and
//! Grad-CAM style time-domain sensitivity maps.

use serde::{Deserialize, Serialize};

use crate::model::{self, Ablation, Mode, ModelError, ModelParams};
use crate::numerics::{Scalar, Tensor};
use crate::signal_io::{ChannelMode, Segment, GRID_HZ};

/// The sigmoid of the trained filter weights with its frequency axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskExport {
    pub freqs_hz: Vec<f64>,
    /// (C, F) mask values in (0, 1).
    pub mask_shape: (usize, usize),
    pub mask: Vec<f64>,
    pub channel_names: Vec<String>,
}

impl MaskExport {
    pub fn mask_at(&self, channel: usize, bin: usize) -> f64 {
        self.mask[channel * self.mask_shape.1 + bin]
    }

    pub fn channel_row(&self, channel: usize) -> &[f64] {
        let f = self.mask_shape.1;
        &self.mask[channel * f..(channel + 1) * f]
    }
}

/// Deterministic sigmoid of the stored filter weights. The frequency axis
/// is i·(grid rate / T). Errors for no_safb checkpoints, which have no
/// mask to export.
pub fn export_filter_mask<S: Scalar>(params: &ModelParams<S>) -> Result<MaskExport, ModelError> {
    if !params.ablation.uses_safb() {
        return Err(ModelError::NoMask);
    }
    let (c, f) = (params.filter_w.rows(), params.filter_w.cols());
    let freqs_hz = (0..f)
        .map(|i| i as f64 * (GRID_HZ / params.hyper.window_len as f64))
        .collect();
    let mask = params
        .filter_w
        .data()
        .iter()
        .map(|&w| w.sigmoid().to_f64())
        .collect();
    let names = match params.hyper.channels {
        1 => ChannelMode::AbpOnly.names(),
        _ => ChannelMode::Multi.names(),
    };
    Ok(MaskExport {
        freqs_hz,
        mask_shape: (c, f),
        mask,
        channel_names: names.iter().map(|s| s.to_string()).collect(),
    })
}

/// Nonnegative (C, T) attribution for one segment.
#[derive(Clone, Debug)]
pub struct SensitivityMap {
    pub saliency: Tensor<f64>,
    pub case_id: String,
    pub t_start: f64,
    pub predicted_p: f64,
}

/// Grad-CAM over the final conv layer: channel weights are the
/// time-average of ∂logit/∂feature-map, the map is ReLU of the weighted
/// feature sum, linearly upsampled to the input length, then broadcast
/// across input channels scaled by each channel's input-gradient norm.
pub fn sensitivity_map<S: Scalar>(
    params: &ModelParams<S>,
    segment: &Segment,
) -> Result<SensitivityMap, ModelError> {
    match params.ablation {
        Ablation::Full | Ablation::NoSafb => {}
        other => {
            return Err(ModelError::Unsupported(format!(
                "sensitivity maps are defined for full and no_safb models, not {}",
                other
            )))
        }
    }
    let x = segment.data.cast::<S>();
    let built = model::build_forward(params, &x, Mode::Eval, None, true)?;
    let predicted_p = built.graph.value(built.prob).data()[0].to_f64();
    let grads = built.graph.backward(built.logit);

    let feats = built.graph.value(built.conv_feature);
    let feat_grad = grads
        .get(built.conv_feature)
        .expect("conv feature on the gradient path");
    let (d_s, t_s) = (feats.rows(), feats.cols());

    // Per-feature-map weights: time-averaged logit gradient.
    let weights: Vec<f64> = (0..d_s)
        .map(|k| {
            feat_grad.row(k).iter().map(|v| v.to_f64()).sum::<f64>() / t_s as f64
        })
        .collect();

    // Weighted feature sum, rectified.
    let mut cam = vec![0.0f64; t_s];
    for (k, &wk) in weights.iter().enumerate() {
        for (t, v) in feats.row(k).iter().enumerate() {
            cam[t] += wk * v.to_f64();
        }
    }
    for v in cam.iter_mut() {
        *v = v.max(0.0);
    }

    // Linear upsample to the input length.
    let t_in = segment.data.cols();
    let upsampled: Vec<f64> = if t_s == 1 {
        vec![cam[0]; t_in]
    } else {
        (0..t_in)
            .map(|t| {
                let pos = t as f64 * (t_s - 1) as f64 / (t_in - 1) as f64;
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                if lo + 1 < t_s {
                    cam[lo] + frac * (cam[lo + 1] - cam[lo])
                } else {
                    cam[t_s - 1]
                }
            })
            .collect()
    };

    // Per-channel scaling by input-gradient magnitude.
    let input_grad = grads.get(built.input).expect("input gradients requested");
    let c = segment.data.rows();
    let mut saliency = Tensor::zeros(&[c, t_in]);
    for ch in 0..c {
        let norm = input_grad.row(ch).iter().map(|v| {
            let f = v.to_f64();
            f * f
        }).sum::<f64>().sqrt();
        for (t, v) in upsampled.iter().enumerate() {
            saliency.set2(ch, t, v * norm);
        }
    }

    Ok(SensitivityMap {
        saliency,
        case_id: segment.case_id.clone(),
        t_start: segment.t_start,
        predicted_p,
    })
}

/// CSV matrix for the mask: header `freq_hz,<channels...>`, F rows.
pub fn mask_csv(export: &MaskExport) -> String {
    let mut out = String::from("freq_hz");
    for name in &export.channel_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let (c, f) = export.mask_shape;
    for bin in 0..f {
        out.push_str(&format!("{}", export.freqs_hz[bin]));
        for ch in 0..c {
            out.push_str(&format!(",{}", export.mask_at(ch, bin)));
        }
        out.push('\n');
    }
    out
}

/// CSV matrix for a sensitivity map: header `time_s,<channels...>`, T rows.
pub fn saliency_csv(map: &SensitivityMap, channel_names: &[&str]) -> String {
    let mut out = String::from("time_s");
    for name in channel_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let (c, t) = (map.saliency.rows(), map.saliency.cols());
    for i in 0..t {
        out.push_str(&format!("{}", map.t_start + i as f64 / GRID_HZ));
        for ch in 0..c {
            out.push_str(&format!(",{}", map.saliency.at2(ch, i)));
        }
        out.push('\n');
    }
    out
}

/// Minimal SVG heatmap of a (rows, cols) matrix. Presentation only: the
/// color ramp is not part of any contract.
pub fn heatmap_svg(values: &Tensor<f64>, row_labels: &[String], title: &str) -> String {
    let (rows, cols) = (values.rows(), values.cols());
    let cell_w = (1000.0 / cols.max(1) as f64).max(0.25);
    let cell_h = 40.0;
    let label_w = 60.0;
    let width = label_w + cols as f64 * cell_w;
    let height = 30.0 + rows as f64 * cell_h;
    let lo = values.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\">\n<text x=\"4\" y=\"16\" font-size=\"14\">{}</text>\n",
        width, height, title
    );
    for r in 0..rows {
        let label = row_labels.get(r).map(String::as_str).unwrap_or("");
        svg.push_str(&format!(
            "<text x=\"4\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            30.0 + r as f64 * cell_h + cell_h * 0.6,
            label
        ));
        for c in 0..cols {
            let v = (values.at2(r, c) - lo) / span;
            // Dark blue to yellow ramp.
            let red = (255.0 * v) as u8;
            let green = (220.0 * v + 20.0) as u8;
            let blue = (180.0 * (1.0 - v) + 40.0) as u8;
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.1}\" width=\"{:.2}\" height=\"{:.1}\" fill=\"rgb({},{},{})\"/>\n",
                label_w + c as f64 * cell_w,
                30.0 + r as f64 * cell_h,
                cell_w + 0.05,
                cell_h,
                red,
                green,
                blue
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
