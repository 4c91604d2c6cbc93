//! Teacher-forced training on 15-frame slices with AMSGrad.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lpc::{mulaw_encode, predict, LpcFrame, LPC_ORDER};
use crate::pipeline::{analyze, AnalysisConfig};
use crate::pitch_tracking::FRAME_HOP;
use crate::signal_io::{limit, preemphasis, AudioBuffer};
use crate::spectral_features::FeatureFrame;

use super::frame_net::{frame_net_backward, frame_net_forward, FrameInput};
use super::params::Params;
use super::sample_net::{sequence_loss, sequence_loss_grad, Codes};

pub const SLICE_FRAMES: usize = 15;
pub const SLICE_SAMPLES: usize = SLICE_FRAMES * FRAME_HOP;
/// Frames of context on each side so slice conditioning matches a forward
/// pass over the whole clip.
const CONTEXT_FRAMES: usize = 2;

/// Frame inputs plus per-sample input codes and target excitation codes,
/// derived from a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingClip {
    pub frames: Vec<FrameInput>,
    pub codes: Vec<Codes>,
    pub targets: Vec<u8>,
}

impl TrainingClip {
    /// `signal` is the preemphasized waveform the features were computed on.
    /// Inputs are teacher-forced from the true signal; the target is the code
    /// of the sample minus the prediction from the true history.
    pub fn from_parts(signal: &[f64], features: &[FeatureFrame]) -> Result<Self> {
        if features.len() != signal.len().div_ceil(FRAME_HOP) {
            return Err(Error::LengthMismatch {
                expected: signal.len().div_ceil(FRAME_HOP),
                actual: features.len(),
            });
        }
        let lpc: Vec<LpcFrame> = features
            .iter()
            .map(|f| LpcFrame::from_bfcc(&f.bfcc))
            .collect::<Result<_>>()?;
        let mut hist = [0.0; LPC_ORDER];
        let mut codes = Vec::with_capacity(signal.len());
        let mut targets = Vec::with_capacity(signal.len());
        let mut prev_exc = mulaw_encode(0.0);
        for (t, &x) in signal.iter().enumerate() {
            let p = predict(&hist, &lpc[t / FRAME_HOP].a);
            let target = mulaw_encode(x - p);
            codes.push(Codes {
                excitation: prev_exc,
                signal: mulaw_encode(hist[LPC_ORDER - 1]),
                prediction: mulaw_encode(p),
            });
            targets.push(target);
            prev_exc = target;
            hist.rotate_left(1);
            hist[LPC_ORDER - 1] = x;
        }
        Ok(Self {
            frames: features.iter().map(FrameInput::from).collect(),
            codes,
            targets,
        })
    }

    /// Runs the analysis front end on `audio` and derives the clip.
    pub fn from_audio<R: Rng + ?Sized>(audio: &AudioBuffer, cfg: &AnalysisConfig, rng: &mut R) -> Result<Self> {
        let a = analyze(audio, cfg, rng)?;
        let signal = limit(&preemphasis(&a.audio, cfg.preemphasis)?);
        Self::from_parts(&signal.samples, &a.features)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Up to [`SLICE_FRAMES`] frames of one clip starting at `start_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slice {
    pub clip: usize,
    pub start_frame: usize,
}

impl Slice {
    fn frame_range(&self, clip: &TrainingClip) -> (usize, usize) {
        let end = (self.start_frame + SLICE_FRAMES).min(clip.n_frames());
        (self.start_frame, end)
    }
}

/// Uniformly chosen clip and start frame; clips shorter than a slice are
/// used whole.
pub fn random_slices<R: Rng + ?Sized>(clips: &[TrainingClip], count: usize, rng: &mut R) -> Vec<Slice> {
    (0..count)
        .map(|_| {
            let clip = rng.random_range(0..clips.len());
            let span = clips[clip].n_frames().saturating_sub(SLICE_FRAMES);
            Slice {
                clip,
                start_frame: rng.random_range(0..=span),
            }
        })
        .collect()
}

struct SliceView<'a> {
    context: &'a [FrameInput],
    offset: usize,
    n_frames: usize,
    frame_of: Vec<usize>,
    codes: &'a [Codes],
    targets: &'a [u8],
}

fn view<'a>(clips: &'a [TrainingClip], s: &Slice) -> Result<SliceView<'a>> {
    let clip = clips
        .get(s.clip)
        .ok_or_else(|| Error::InvalidArgument(format!("slice clip {}", s.clip)))?;
    if s.start_frame >= clip.n_frames() {
        return Err(Error::InvalidArgument(format!("slice start frame {}", s.start_frame)));
    }
    let (lo, hi) = s.frame_range(clip);
    let ctx_lo = lo.saturating_sub(CONTEXT_FRAMES);
    let ctx_hi = (hi + CONTEXT_FRAMES).min(clip.n_frames());
    let (t0, t1) = (lo * FRAME_HOP, (hi * FRAME_HOP).min(clip.len()));
    Ok(SliceView {
        context: &clip.frames[ctx_lo..ctx_hi],
        offset: lo - ctx_lo,
        n_frames: hi - lo,
        frame_of: (t0..t1).map(|t| t / FRAME_HOP - lo).collect(),
        codes: &clip.codes[t0..t1],
        targets: &clip.targets[t0..t1],
    })
}

/// Mean cross-entropy of one slice.
pub fn slice_loss(p: &Params, clips: &[TrainingClip], s: &Slice) -> Result<f64> {
    let v = view(clips, s)?;
    let out = frame_net_forward(p, v.context).output;
    let cond = &out[v.offset..v.offset + v.n_frames];
    Ok(sequence_loss(p, cond, &v.frame_of, v.codes, v.targets))
}

/// Loss of one slice and its gradient, accumulated into `grad` with `scale`.
pub fn slice_loss_grad(p: &Params, clips: &[TrainingClip], s: &Slice, scale: f64, grad: &mut Params) -> Result<f64> {
    let v = view(clips, s)?;
    let cache = frame_net_forward(p, v.context);
    let cond = &cache.output[v.offset..v.offset + v.n_frames];
    let (loss, d_cond) = sequence_loss_grad(p, cond, &v.frame_of, v.codes, v.targets, scale, grad);
    let mut d_out = vec![vec![0.0; p.config.conditioning]; v.context.len()];
    for (k, d) in d_cond.into_iter().enumerate() {
        d_out[v.offset + k] = d;
    }
    frame_net_backward(p, &cache, &d_out, grad);
    Ok(loss)
}

/// Mean loss over a batch and the gradient of that mean. Slices run in
/// parallel.
pub fn batch_loss_grad(p: &Params, clips: &[TrainingClip], batch: &[Slice]) -> Result<(f64, Params)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, Params)> = batch
        .par_iter()
        .map(|s| {
            let mut g = p.zeros_like();
            let loss = slice_loss_grad(p, clips, s, scale, &mut g)?;
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut parts = parts.into_iter();
    let (mut loss, mut grad) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        grad.add_scaled(&g, 1.0);
    }
    Ok((loss * scale, grad))
}

pub fn batch_loss(p: &Params, clips: &[TrainingClip], batch: &[Slice]) -> Result<f64> {
    let losses: Vec<f64> = batch
        .par_iter()
        .map(|s| slice_loss(p, clips, s))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// AMSGrad with bias-corrected step size. Weight decay adds
/// `weight_decay * w` to each gradient.
#[derive(Debug, Clone)]
pub struct AmsGrad {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub steps: u64,
    m: Params,
    v: Params,
    v_max: Params,
}

impl AmsGrad {
    pub fn new(params: &Params) -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            weight_decay: 5e-5,
            steps: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            v_max: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut Params, grad: &Params) {
        self.steps += 1;
        let t = self.steps as i32;
        let lr_t = self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t));
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(self.v_max.tensors_mut());
        for ((((( _, w), (_, g)), (_, m)), (_, v)), (_, vm)) in tensors {
            for i in 0..w.data.len() {
                let gi = g.data[i] + wd * w.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                vm.data[i] = vm.data[i].max(v.data[i]);
                w.data[i] -= lr_t * m.data[i] / (vm.data[i].sqrt() + eps);
            }
        }
    }
}

/// One optimizer update on `batch`; returns the batch loss before the
/// update.
pub fn train_step(params: &mut Params, opt: &mut AmsGrad, clips: &[TrainingClip], batch: &[Slice]) -> Result<f64> {
    let (loss, grad) = batch_loss_grad(params, clips, batch)?;
    opt.update(params, &grad);
    Ok(loss)
}
