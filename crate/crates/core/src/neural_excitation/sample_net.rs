//! Sample-rate network: summed code embeddings into GRU A (with the frame
//! conditioning), GRU B, then a dense softmax layer over 256 codes.
//! Gated recurrent cells apply the reset gate after the recurrent matmul.

use super::dist::{CategoricalDist256, NUM_CODES};
use super::params::{axpy, gemv_add, gemv_t_add, outer_add, sigmoid, Param, Params};

/// The three mu-law codes fed to the sample network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Codes {
    pub excitation: u8,
    pub signal: u8,
    pub prediction: u8,
}

/// Conditioning pushed through both GRU input matrices, plus input biases.
/// Constant over a frame.
#[derive(Debug, Clone)]
pub struct FrameProjection {
    a: Vec<f64>,
    b: Vec<f64>,
}

pub fn project_conditioning(p: &Params, cond: &[f64]) -> FrameProjection {
    let mut a = p.gru_a_bi.data.clone();
    gemv_add(&p.gru_a_wi_cond, cond, &mut a);
    let mut b = p.gru_b_bi.data.clone();
    gemv_add(&p.gru_b_wi_cond, cond, &mut b);
    FrameProjection { a, b }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleState {
    pub h_a: Vec<f64>,
    pub h_b: Vec<f64>,
}

impl SampleState {
    pub fn zeros(p: &Params) -> Self {
        Self {
            h_a: vec![0.0; p.config.gru_a],
            h_b: vec![0.0; p.config.gru_b],
        }
    }
}

#[derive(Debug, Clone, Default)]
struct GruCache {
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// Recurrent candidate pre-activation before the reset gate.
    gh_n: Vec<f64>,
}

/// One GRU update. `gi` holds the full input pre-activation (3 blocks).
fn gru_forward(gi: &[f64], wh: &Param, bh: &Param, h: &[f64]) -> (Vec<f64>, GruCache) {
    let size = h.len();
    let mut gh = bh.data.clone();
    gemv_add(wh, h, &mut gh);
    let mut c = GruCache {
        r: vec![0.0; size],
        z: vec![0.0; size],
        n: vec![0.0; size],
        gh_n: gh[2 * size..].to_vec(),
    };
    let mut out = vec![0.0; size];
    for k in 0..size {
        let r = sigmoid(gi[k] + gh[k]);
        let z = sigmoid(gi[size + k] + gh[size + k]);
        let n = (gi[2 * size + k] + r * gh[2 * size + k]).tanh();
        out[k] = z * h[k] + (1.0 - z) * n;
        c.r[k] = r;
        c.z[k] = z;
        c.n[k] = n;
    }
    (out, c)
}

/// Gradients of the input and recurrent pre-activations, and the direct
/// path to the previous state.
fn gru_backward(c: &GruCache, h_prev: &[f64], dh: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let size = h_prev.len();
    let mut dgi = vec![0.0; 3 * size];
    let mut dgh = vec![0.0; 3 * size];
    let mut dh_prev = vec![0.0; size];
    for k in 0..size {
        let (r, z, n) = (c.r[k], c.z[k], c.n[k]);
        let da_n = dh[k] * (1.0 - z) * (1.0 - n * n);
        let da_z = dh[k] * (h_prev[k] - n) * z * (1.0 - z);
        let da_r = da_n * c.gh_n[k] * r * (1.0 - r);
        dgi[k] = da_r;
        dgi[size + k] = da_z;
        dgi[2 * size + k] = da_n;
        dgh[k] = da_r;
        dgh[size + k] = da_z;
        dgh[2 * size + k] = da_n * r;
        dh_prev[k] = dh[k] * z;
    }
    (dgi, dgh, dh_prev)
}

fn embed(p: &Params, codes: Codes) -> Vec<f64> {
    let mut u = p.embed_excitation.row(codes.excitation as usize).to_vec();
    axpy(1.0, p.embed_signal.row(codes.signal as usize), &mut u);
    axpy(1.0, p.embed_prediction.row(codes.prediction as usize), &mut u);
    u
}

struct StepCache {
    u: Vec<f64>,
    a: GruCache,
    b: GruCache,
}

fn step(p: &Params, state: &SampleState, codes: Codes, proj: &FrameProjection) -> (Vec<f64>, SampleState, StepCache) {
    let u = embed(p, codes);
    let mut gi_a = proj.a.clone();
    gemv_add(&p.gru_a_wi_embed, &u, &mut gi_a);
    let (h_a, ca) = gru_forward(&gi_a, &p.gru_a_wh, &p.gru_a_bh, &state.h_a);
    let mut gi_b = proj.b.clone();
    gemv_add(&p.gru_b_wi_in, &h_a, &mut gi_b);
    let (h_b, cb) = gru_forward(&gi_b, &p.gru_b_wh, &p.gru_b_bh, &state.h_b);
    let mut logits = p.out_b.data.clone();
    gemv_add(&p.out_w, &h_b, &mut logits);
    (logits, SampleState { h_a, h_b }, StepCache { u, a: ca, b: cb })
}

/// Distribution over the next excitation code and the updated state.
pub fn sample_net_forward(
    p: &Params,
    state: &SampleState,
    codes: Codes,
    proj: &FrameProjection,
) -> (CategoricalDist256, SampleState) {
    let (logits, next, _) = step(p, state, codes, proj);
    (CategoricalDist256::from_logits(&logits), next)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Teacher-forced mean cross-entropy over a sequence starting from zero
/// state. Sample `t` uses conditioning frame `frame_of[t]`.
pub fn sequence_loss(p: &Params, cond: &[Vec<f64>], frame_of: &[usize], codes: &[Codes], targets: &[u8]) -> f64 {
    let proj: Vec<FrameProjection> = cond.iter().map(|c| project_conditioning(p, c)).collect();
    let mut state = SampleState::zeros(p);
    let mut total = 0.0;
    for t in 0..codes.len() {
        let (logits, next, _) = step(p, &state, codes[t], &proj[frame_of[t]]);
        total -= log_softmax(&logits)[targets[t] as usize];
        state = next;
    }
    total / codes.len().max(1) as f64
}

/// [`sequence_loss`] plus backpropagation through time. Parameter gradients
/// are accumulated into `grad` scaled by `scale`; returns the loss and the
/// gradient with respect to each conditioning vector (also scaled).
pub fn sequence_loss_grad(
    p: &Params,
    cond: &[Vec<f64>],
    frame_of: &[usize],
    codes: &[Codes],
    targets: &[u8],
    scale: f64,
    grad: &mut Params,
) -> (f64, Vec<Vec<f64>>) {
    let steps = codes.len();
    let (h, g) = (p.config.gru_a, p.config.gru_b);
    let proj: Vec<FrameProjection> = cond.iter().map(|c| project_conditioning(p, c)).collect();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(SampleState::zeros(p));
    let mut caches = Vec::with_capacity(steps);
    let mut probs = Vec::with_capacity(steps);
    let mut total = 0.0;
    for t in 0..steps {
        let (logits, next, cache) = step(p, &states[t], codes[t], &proj[frame_of[t]]);
        let lp = log_softmax(&logits);
        total -= lp[targets[t] as usize];
        probs.push(lp.iter().map(|v| v.exp()).collect::<Vec<f64>>());
        states.push(next);
        caches.push(cache);
    }
    let loss = total / steps.max(1) as f64;
    let w = scale / steps.max(1) as f64;

    let mut acc_a = vec![vec![0.0; 3 * h]; cond.len()];
    let mut acc_b = vec![vec![0.0; 3 * g]; cond.len()];
    let mut dh_a_next = vec![0.0; h];
    let mut dh_b_next = vec![0.0; g];
    for t in (0..steps).rev() {
        let mut dlogits: Vec<f64> = probs[t].iter().map(|q| q * w).collect();
        dlogits[targets[t] as usize] -= w;
        let (prev, cur, c) = (&states[t], &states[t + 1], &caches[t]);
        outer_add(&mut grad.out_w, &dlogits, &cur.h_b);
        axpy(1.0, &dlogits, &mut grad.out_b.data);
        let mut dh_b = dh_b_next;
        gemv_t_add(&p.out_w, &dlogits, &mut dh_b);

        let (dgi_b, dgh_b, mut dh_b_prev) = gru_backward(&c.b, &prev.h_b, &dh_b);
        outer_add(&mut grad.gru_b_wh, &dgh_b, &prev.h_b);
        axpy(1.0, &dgh_b, &mut grad.gru_b_bh.data);
        gemv_t_add(&p.gru_b_wh, &dgh_b, &mut dh_b_prev);
        outer_add(&mut grad.gru_b_wi_in, &dgi_b, &cur.h_a);
        let mut dh_a = dh_a_next;
        gemv_t_add(&p.gru_b_wi_in, &dgi_b, &mut dh_a);
        axpy(1.0, &dgi_b, &mut acc_b[frame_of[t]]);

        let (dgi_a, dgh_a, mut dh_a_prev) = gru_backward(&c.a, &prev.h_a, &dh_a);
        outer_add(&mut grad.gru_a_wh, &dgh_a, &prev.h_a);
        axpy(1.0, &dgh_a, &mut grad.gru_a_bh.data);
        gemv_t_add(&p.gru_a_wh, &dgh_a, &mut dh_a_prev);
        outer_add(&mut grad.gru_a_wi_embed, &dgi_a, &c.u);
        let mut du = vec![0.0; p.config.code_embedding];
        gemv_t_add(&p.gru_a_wi_embed, &dgi_a, &mut du);
        axpy(1.0, &du, grad.embed_excitation.row_mut(codes[t].excitation as usize));
        axpy(1.0, &du, grad.embed_signal.row_mut(codes[t].signal as usize));
        axpy(1.0, &du, grad.embed_prediction.row_mut(codes[t].prediction as usize));
        axpy(1.0, &dgi_a, &mut acc_a[frame_of[t]]);

        dh_a_next = dh_a_prev;
        dh_b_next = dh_b_prev;
    }

    let mut d_cond = vec![vec![0.0; p.config.conditioning]; cond.len()];
    for f in 0..cond.len() {
        axpy(1.0, &acc_a[f], &mut grad.gru_a_bi.data);
        outer_add(&mut grad.gru_a_wi_cond, &acc_a[f], &cond[f]);
        gemv_t_add(&p.gru_a_wi_cond, &acc_a[f], &mut d_cond[f]);
        axpy(1.0, &acc_b[f], &mut grad.gru_b_bi.data);
        outer_add(&mut grad.gru_b_wi_cond, &acc_b[f], &cond[f]);
        gemv_t_add(&p.gru_b_wi_cond, &acc_b[f], &mut d_cond[f]);
    }
    (loss, d_cond)
}

/// Uniform-loss reference, `ln 256`.
pub fn uniform_loss() -> f64 {
    (NUM_CODES as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural_excitation::params::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn codes(n: usize) -> Vec<Codes> {
        (0..n)
            .map(|t| Codes {
                excitation: (t * 37 % 256) as u8,
                signal: (t * 11 % 256) as u8,
                prediction: (255 - t % 256) as u8,
            })
            .collect()
    }

    #[test]
    fn zero_params_uniform() {
        let p = Params::zeros(NetConfig::tiny());
        let proj = project_conditioning(&p, &[0.3; 8]);
        let (d, _) = sample_net_forward(&p, &SampleState::zeros(&p), codes(1)[0], &proj);
        assert!(d.p.iter().all(|&v| (v - 1.0 / 256.0).abs() < 1e-15));
    }

    #[test]
    fn random_params_valid_and_pure() {
        let mut p = Params::init(NetConfig::tiny(), &mut ChaCha8Rng::seed_from_u64(9));
        p.out_w.data =(0..256 * 8).map(|i| ((i as f64) * 0.77).sin()).collect();
        let proj = project_conditioning(&p, &[0.1; 8]);
        let mut s = SampleState::zeros(&p);
        for c in codes(50) {
            let (d1, s1) = sample_net_forward(&p, &s, c, &proj);
            let (d2, s2) = sample_net_forward(&p, &s, c, &proj);
            assert!(d1.is_valid());
            assert_eq!(d1, d2);
            assert_eq!(s1, s2);
            s = s1;
        }
    }

    #[test]
    fn zero_output_layer_gives_ln256() {
        let p = Params::init(NetConfig::tiny(), &mut ChaCha8Rng::seed_from_u64(2));
        let cond = vec![vec![0.2; 8]; 2];
        let frame_of: Vec<usize> = (0..40).map(|t| t / 20).collect();
        let targets: Vec<u8> = (0..40).map(|t| (t * 5) as u8).collect();
        let loss = sequence_loss(&p, &cond, &frame_of, &codes(40), &targets);
        assert!((loss - uniform_loss()).abs() < 1e-12);
        let mut grad = p.zeros_like();
        let (l2, _) = sequence_loss_grad(&p, &cond, &frame_of, &codes(40), &targets, 1.0, &mut grad);
        assert_eq!(loss, l2);
    }
}
