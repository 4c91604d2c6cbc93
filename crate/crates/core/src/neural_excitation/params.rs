//! Parameter tensors, network sizes and initialization.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::spectral_features::NB_BANDS;

use super::dist::NUM_CODES;

/// Per-frame scalar inputs to the frame network: BFCCs and periodicity.
pub const FRAME_FEATURES: usize = NB_BANDS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub pitch_embedding: usize,
    pub conv_channels: usize,
    pub conditioning: usize,
    pub code_embedding: usize,
    pub gru_a: usize,
    pub gru_b: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            pitch_embedding: 64,
            conv_channels: 128,
            conditioning: 128,
            code_embedding: 128,
            gru_a: 128,
            gru_b: 16,
        }
    }
}

impl NetConfig {
    /// Reduced sizes for gradient checks.
    pub fn tiny() -> Self {
        Self {
            pitch_embedding: 4,
            conv_channels: 4,
            conditioning: 8,
            code_embedding: 4,
            gru_a: 8,
            gru_b: 8,
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.pitch_embedding,
            self.conv_channels,
            self.conditioning,
            self.code_embedding,
            self.gru_a,
            self.gru_b,
        ]
        .iter()
        .all(|&d| d > 0 && d <= 4096)
    }

    pub(crate) fn frame_input(&self) -> usize {
        FRAME_FEATURES + self.pitch_embedding
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    fn uniform<R: Rng + ?Sized>(shape: &[usize], limit: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        Self {
            shape: shape.to_vec(),
            data: (0..shape.iter().product()).map(|_| dist.sample(rng)).collect(),
        }
    }

    /// Glorot-uniform matrix of shape `[rows, cols]`.
    fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::uniform(&[rows, cols], (6.0 / (rows + cols) as f64).sqrt(), rng)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }
}

macro_rules! params {
    ($($field:ident),* $(,)?) => {
        /// All trainable tensors. GRU gate blocks are stacked as
        /// (reset, update, candidate).
        #[derive(Debug, Clone, PartialEq)]
        pub struct Params {
            pub config: NetConfig,
            $(pub $field: Param,)*
        }

        impl Params {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn tensors(&self) -> Vec<(&'static str, &Param)> {
                vec![$((stringify!($field), &self.$field)),*]
            }

            pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
                vec![$((stringify!($field), &mut self.$field)),*]
            }
        }
    };
}

params!(
    pitch_embedding,
    conv1_w,
    conv1_b,
    conv2_w,
    conv2_b,
    dense1_w,
    dense1_b,
    dense2_w,
    dense2_b,
    embed_excitation,
    embed_signal,
    embed_prediction,
    gru_a_wi_embed,
    gru_a_wi_cond,
    gru_a_bi,
    gru_a_wh,
    gru_a_bh,
    gru_b_wi_in,
    gru_b_wi_cond,
    gru_b_bi,
    gru_b_wh,
    gru_b_bh,
    out_w,
    out_b,
);

impl Params {
    /// Every tensor zero.
    pub fn zeros(config: NetConfig) -> Self {
        let shapes = Self::shapes(&config);
        let mut it = shapes.into_iter().map(|s| Param::zeros(&s));
        let mut next = || it.next().expect("shape per tensor");
        Self {
            config,
            pitch_embedding: next(),
            conv1_w: next(),
            conv1_b: next(),
            conv2_w: next(),
            conv2_b: next(),
            dense1_w: next(),
            dense1_b: next(),
            dense2_w: next(),
            dense2_b: next(),
            embed_excitation: next(),
            embed_signal: next(),
            embed_prediction: next(),
            gru_a_wi_embed: next(),
            gru_a_wi_cond: next(),
            gru_a_bi: next(),
            gru_a_wh: next(),
            gru_a_bh: next(),
            gru_b_wi_in: next(),
            gru_b_wi_cond: next(),
            gru_b_bi: next(),
            gru_b_wh: next(),
            gru_b_bh: next(),
            out_w: next(),
            out_b: next(),
        }
    }

    /// Tensor shapes in [`Params::NAMES`] order.
    pub fn shapes(c: &NetConfig) -> Vec<Vec<usize>> {
        let (h, g, d, e) = (c.gru_a, c.gru_b, c.conditioning, c.code_embedding);
        vec![
            vec![NUM_CODES, c.pitch_embedding],
            vec![c.conv_channels, 3 * c.frame_input()],
            vec![c.conv_channels],
            vec![c.conv_channels, 3 * c.conv_channels],
            vec![c.conv_channels],
            vec![d, c.conv_channels],
            vec![d],
            vec![d, d],
            vec![d],
            vec![NUM_CODES, e],
            vec![NUM_CODES, e],
            vec![NUM_CODES, e],
            vec![3 * h, e],
            vec![3 * h, d],
            vec![3 * h],
            vec![3 * h, h],
            vec![3 * h],
            vec![3 * g, h],
            vec![3 * g, d],
            vec![3 * g],
            vec![3 * g, g],
            vec![3 * g],
            vec![NUM_CODES, g],
            vec![NUM_CODES],
        ]
    }

    /// Glorot-uniform weights, unit-range embeddings, zero biases and a
    /// zero output layer (uniform initial prediction).
    pub fn init<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(config);
        let c = &config;
        let (h, g, d) = (c.gru_a, c.gru_b, c.conditioning);
        p.pitch_embedding = Param::uniform(&[NUM_CODES, c.pitch_embedding], 1.0, rng);
        p.conv1_w = Param::glorot(c.conv_channels, 3 * c.frame_input(), rng);
        p.conv2_w = Param::glorot(c.conv_channels, 3 * c.conv_channels, rng);
        p.dense1_w = Param::glorot(d, c.conv_channels, rng);
        p.dense2_w = Param::glorot(d, d, rng);
        for t in [
            &mut p.embed_excitation,
            &mut p.embed_signal,
            &mut p.embed_prediction,
        ] {
            *t = Param::uniform(&[NUM_CODES, c.code_embedding], 1.0, rng);
        }
        p.gru_a_wi_embed = Param::glorot(3 * h, c.code_embedding, rng);
        p.gru_a_wi_cond = Param::glorot(3 * h, d, rng);
        p.gru_a_wh = Param::glorot(3 * h, h, rng);
        p.gru_b_wi_in = Param::glorot(3 * g, h, rng);
        p.gru_b_wi_cond = Param::glorot(3 * g, d, rng);
        p.gru_b_wh = Param::glorot(3 * g, g, rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(scale, &b.data, &mut a.data);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y += W x` for row-major `W`.
pub(crate) fn gemv_add(w: &Param, x: &[f64], y: &mut [f64]) {
    for (row, yi) in w.data.chunks_exact(w.cols()).zip(y.iter_mut()) {
        *yi += dot(row, x);
    }
}

/// `y += W^T g`.
pub(crate) fn gemv_t_add(w: &Param, g: &[f64], y: &mut [f64]) {
    for (row, &gi) in w.data.chunks_exact(w.cols()).zip(g) {
        if gi != 0.0 {
            axpy(gi, row, y);
        }
    }
}

/// `dW += g x^T`.
pub(crate) fn outer_add(dw: &mut Param, g: &[f64], x: &[f64]) {
    let cols = dw.cols();
    for (row, &gi) in dw.data.chunks_exact_mut(cols).zip(g) {
        if gi != 0.0 {
            axpy(gi, x, row);
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
