//! Toy-scale trainable excitation model and the thresholded sampler.

pub mod checkpoint;
mod dist;
pub mod frame_net;
pub mod params;
pub mod sample_net;
pub mod train;

use rand::Rng;

use crate::error::Result;
use crate::lpc::LpcFrame;
use crate::signal_io::AudioBuffer;
use crate::synthesis::{synthesize, ControlScript, ExcitationBackend, FrameContext};

pub use dist::{sample_excitation, CategoricalDist256, NUM_CODES, SAMPLING_THRESHOLD};
pub use frame_net::{frame_net_forward, FrameInput};
pub use params::{NetConfig, Params};
pub use sample_net::{project_conditioning, sample_net_forward, Codes, FrameProjection, SampleState};
pub use train::{train_step, AmsGrad, Slice, TrainingClip, SLICE_FRAMES, SLICE_SAMPLES};

/// Conditioning inputs of a control frame: its BFCCs with the target pitch
/// and periodicity.
pub fn script_inputs(script: &ControlScript) -> Vec<FrameInput> {
    script
        .frames
        .iter()
        .map(|f| FrameInput {
            bfcc: f.features.bfcc,
            pitch_bin: f.target_pitch_bin,
            periodicity: f.periodicity,
        })
        .collect()
}

/// Excitation backend driven by the trained network.
pub struct NeuralBackend {
    params: Params,
    projections: Vec<FrameProjection>,
    state: SampleState,
}

impl NeuralBackend {
    pub fn new(params: Params) -> Self {
        let state = SampleState::zeros(&params);
        Self {
            params,
            projections: Vec::new(),
            state,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }
}

impl ExcitationBackend for NeuralBackend {
    fn prepare(&mut self, script: &ControlScript, _lpc: &[LpcFrame]) -> Result<()> {
        let cond = frame_net_forward(&self.params, &script_inputs(script)).output;
        self.projections = cond
            .iter()
            .map(|c| project_conditioning(&self.params, c))
            .collect();
        self.state = SampleState::zeros(&self.params);
        Ok(())
    }

    fn next(&mut self, prev_excitation: u8, prev_sample: u8, prediction: u8, ctx: &FrameContext) -> CategoricalDist256 {
        let codes = Codes {
            excitation: prev_excitation,
            signal: prev_sample,
            prediction,
        };
        let (dist, state) = sample_net_forward(&self.params, &self.state, codes, &self.projections[ctx.index]);
        self.state = state;
        dist
    }
}

/// Autoregressive synthesis of `script` with the network as excitation
/// source. Output is in the preemphasized domain.
pub fn generate<R: Rng + ?Sized>(script: &ControlScript, params: &Params, rng: &mut R) -> Result<AudioBuffer> {
    synthesize(script, &mut NeuralBackend::new(params.clone()), rng)
}
