//! Frame-rate conditioning network: pitch embedding concatenated with the
//! BFCCs and periodicity, two kernel-3 tanh convolutions with replicate
//! padding, then two tanh dense layers.

use crate::spectral_features::{FeatureFrame, NB_BANDS};

use super::params::{gemv_add, gemv_t_add, outer_add, axpy, Params};

/// Input standardization: BFCCs are scaled by this factor after shifting
/// c0 by [`C0_OFFSET`], bringing typical speech frames near unit range.
pub const BFCC_SCALE: f64 = 0.1;
pub const C0_OFFSET: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameInput {
    pub bfcc: [f64; NB_BANDS],
    pub pitch_bin: u8,
    pub periodicity: f64,
}

impl From<&FeatureFrame> for FrameInput {
    fn from(f: &FeatureFrame) -> Self {
        Self {
            bfcc: f.bfcc,
            pitch_bin: f.pitch_bin,
            periodicity: f.periodicity,
        }
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct FrameNetCache {
    inputs: Vec<Vec<f64>>,
    bins: Vec<u8>,
    conv1: Vec<Vec<f64>>,
    conv2: Vec<Vec<f64>>,
    dense1: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
}

fn neighbors(i: usize, n: usize) -> [usize; 3] {
    [i.saturating_sub(1), i, (i + 1).min(n - 1)]
}

fn stack3(rows: &[Vec<f64>], idx: [usize; 3]) -> Vec<f64> {
    idx.iter().flat_map(|&k| rows[k].iter().copied()).collect()
}

fn tanh_layer(w: &super::params::Param, b: &super::params::Param, x: &[f64]) -> Vec<f64> {
    let mut y = b.data.clone();
    gemv_add(w, x, &mut y);
    y.iter_mut().for_each(|v| *v = v.tanh());
    y
}

/// Conditioning vectors for every frame (`frames.len() x conditioning`).
pub fn frame_net_forward(p: &Params, frames: &[FrameInput]) -> FrameNetCache {
    let n = frames.len();
    let inputs: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let mut v = Vec::with_capacity(p.config.frame_input());
            v.push((f.bfcc[0] + C0_OFFSET) * BFCC_SCALE);
            v.extend(f.bfcc[1..].iter().map(|c| c * BFCC_SCALE));
            v.push(f.periodicity);
            v.extend_from_slice(p.pitch_embedding.row(f.pitch_bin as usize));
            v
        })
        .collect();
    let conv1: Vec<Vec<f64>> = (0..n)
        .map(|i| tanh_layer(&p.conv1_w, &p.conv1_b, &stack3(&inputs, neighbors(i, n))))
        .collect();
    let conv2: Vec<Vec<f64>> = (0..n)
        .map(|i| tanh_layer(&p.conv2_w, &p.conv2_b, &stack3(&conv1, neighbors(i, n))))
        .collect();
    let dense1: Vec<Vec<f64>> = conv2
        .iter()
        .map(|x| tanh_layer(&p.dense1_w, &p.dense1_b, x))
        .collect();
    let output = dense1
        .iter()
        .map(|x| tanh_layer(&p.dense2_w, &p.dense2_b, x))
        .collect();
    FrameNetCache {
        inputs,
        bins: frames.iter().map(|f| f.pitch_bin).collect(),
        conv1,
        conv2,
        dense1,
        output,
    }
}

fn tanh_grad(dy: &[f64], y: &[f64]) -> Vec<f64> {
    dy.iter().zip(y).map(|(d, v)| d * (1.0 - v * v)).collect()
}

/// Accumulates parameter gradients for upstream gradients `d_output`.
pub fn frame_net_backward(p: &Params, cache: &FrameNetCache, d_output: &[Vec<f64>], grad: &mut Params) {
    let n = cache.output.len();
    let channels = p.config.conv_channels;
    let mut d_conv2 = vec![vec![0.0; channels]; n];
    for i in 0..n {
        let g2 = tanh_grad(&d_output[i], &cache.output[i]);
        outer_add(&mut grad.dense2_w, &g2, &cache.dense1[i]);
        axpy(1.0, &g2, &mut grad.dense2_b.data);
        let mut d_dense1 = vec![0.0; p.config.conditioning];
        gemv_t_add(&p.dense2_w, &g2, &mut d_dense1);
        let g1 = tanh_grad(&d_dense1, &cache.dense1[i]);
        outer_add(&mut grad.dense1_w, &g1, &cache.conv2[i]);
        axpy(1.0, &g1, &mut grad.dense1_b.data);
        gemv_t_add(&p.dense1_w, &g1, &mut d_conv2[i]);
    }
    let mut d_conv1 = vec![vec![0.0; channels]; n];
    for i in 0..n {
        let g = tanh_grad(&d_conv2[i], &cache.conv2[i]);
        let idx = neighbors(i, n);
        outer_add(&mut grad.conv2_w, &g, &stack3(&cache.conv1, idx));
        axpy(1.0, &g, &mut grad.conv2_b.data);
        let mut d_in = vec![0.0; 3 * channels];
        gemv_t_add(&p.conv2_w, &g, &mut d_in);
        for (k, &j) in idx.iter().enumerate() {
            axpy(1.0, &d_in[k * channels..(k + 1) * channels], &mut d_conv1[j]);
        }
    }
    let width = p.config.frame_input();
    let skip = width - p.config.pitch_embedding;
    let mut d_inputs = vec![vec![0.0; width]; n];
    for i in 0..n {
        let g = tanh_grad(&d_conv1[i], &cache.conv1[i]);
        let idx = neighbors(i, n);
        outer_add(&mut grad.conv1_w, &g, &stack3(&cache.inputs, idx));
        axpy(1.0, &g, &mut grad.conv1_b.data);
        let mut d_in = vec![0.0; 3 * width];
        gemv_t_add(&p.conv1_w, &g, &mut d_in);
        for (k, &j) in idx.iter().enumerate() {
            axpy(1.0, &d_in[k * width..(k + 1) * width], &mut d_inputs[j]);
        }
    }
    for (d, &bin) in d_inputs.iter().zip(&cache.bins) {
        axpy(1.0, &d[skip..], grad.pitch_embedding.row_mut(bin as usize));
    }
}
