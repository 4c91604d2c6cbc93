use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clpc::evaluate::{self, compare_contours, write_report, ReportRow};
use clpc::lpc::{write_lpc_csv, LpcFrame};
use clpc::neural_excitation::train::random_slices;
use clpc::neural_excitation::{checkpoint, train_step, AmsGrad, NetConfig, NeuralBackend, Params, TrainingClip};
use clpc::pipeline::{self, analyze, edit_with, render, AnalysisConfig};
use clpc::pitch_tracking::{PitchTracker, VOICING_THRESHOLD};
use clpc::psola::{detect_marks, psola_modify};
use clpc::signal_io::{load_wav, resample, save_wav, AudioBuffer};
use clpc::spectral_features::{read_features, write_features};
use clpc::synthesis::{passthrough_script, ControlScript, DspBackend, ExcitationBackend};
use clpc::{augment, stimuli, Error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Backend, BackendOpts, Cli, Command, GlobalOpts, System, DEFAULT_SEED};

/// Seed and front-end settings shared by every subcommand.
struct Ctx {
    seed: u64,
    cfg: AnalysisConfig,
    out_rate: u32,
}

impl Ctx {
    fn new(g: &GlobalOpts) -> Result<Self> {
        let seed = match g.seed {
            Some(s) => s,
            None => match std::env::var("CLPC_SEED") {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("CLPC_SEED={v} is not an integer")))?,
                Err(_) => DEFAULT_SEED,
            },
        };
        if !(0.0..1.0).contains(&g.preemphasis) {
            return Err(Error::InvalidArgument(format!("preemphasis {} outside [0, 1)", g.preemphasis)).into());
        }
        Ok(Self {
            seed,
            cfg: AnalysisConfig {
                highpass: !g.no_highpass,
                preemphasis: g.preemphasis,
                ..AnalysisConfig::default()
            },
            out_rate: g.sample_rate,
        })
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn write(&self, audio: &AudioBuffer, path: &Path) -> Result<()> {
        save_wav(&resample(audio, self.out_rate)?, path)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn backend(&self, opts: &BackendOpts) -> Result<Box<dyn ExcitationBackend>> {
        Ok(match opts.backend {
            Backend::Dsp => Box::new(DspBackend::new(self.seed.wrapping_add(1))),
            Backend::Neural => Box::new(NeuralBackend::new(load_checkpoint(opts.checkpoint.as_deref())?)),
        })
    }
}

fn load_checkpoint(path: Option<&Path>) -> Result<Params> {
    let path = path.ok_or_else(|| Error::InvalidArgument("the neural backend needs --checkpoint".into()))?;
    Ok(checkpoint::load(path)?)
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no WAV files in {}", dir.display())).into());
    }
    Ok(files)
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli.global)?;
    match cli.command {
        Command::Analyze {
            input,
            features,
            pitch,
            script,
            lpc,
        } => {
            let a = analyze(&load_wav(&input)?, &ctx.cfg, &mut ctx.rng())?;
            write_features(&a.features, &features)?;
            if let Some(p) = pitch {
                a.contour.write_csv(p)?;
            }
            if let Some(p) = script {
                passthrough_script(&a.features, &a.contour)?.write_csv(p)?;
            }
            if let Some(p) = lpc {
                let frames = a
                    .features
                    .iter()
                    .map(|f| LpcFrame::from_bfcc(&f.bfcc))
                    .collect::<clpc::Result<Vec<_>>>()?;
                write_lpc_csv(&frames, p)?;
            }
            println!("{} frames", a.features.len());
        }
        Command::Shift {
            input,
            output,
            ratio,
            backend,
        } => {
            let y = edit_with(&load_wav(&input)?, ratio, 1.0, &ctx.cfg, ctx.backend(&backend)?.as_mut(), ctx.seed)?;
            ctx.write(&y, &output)?;
        }
        Command::Stretch {
            input,
            output,
            ratio,
            backend,
        } => {
            let y = edit_with(&load_wav(&input)?, 1.0, ratio, &ctx.cfg, ctx.backend(&backend)?.as_mut(), ctx.seed)?;
            ctx.write(&y, &output)?;
        }
        Command::Edit {
            input,
            output,
            script,
            features,
            backend,
        } => {
            let mut rng = ctx.rng();
            let feats = match features {
                Some(p) => read_features(p)?,
                None => analyze(&load_wav(&input)?, &ctx.cfg, &mut rng)?.features,
            };
            let script = ControlScript::read_csv(&script, &feats)?;
            let y = render(&script, ctx.backend(&backend)?.as_mut(), &mut rng, &ctx.cfg)?;
            ctx.write(&y, &output)?;
        }
        Command::Psola {
            input,
            output,
            shift,
            stretch,
            marks,
        } => {
            let x = pipeline::condition(&load_wav(&input)?, &ctx.cfg)?;
            let contour = PitchTracker::new(ctx.cfg.tracker).track(&x)?;
            let m = detect_marks(&x, &contour)?;
            if let Some(p) = marks {
                m.write_csv(p)?;
            }
            let pitch: Vec<f64> = contour.f0_hz.iter().map(|f| f * shift).collect();
            let y = psola_modify(&x, &m, &contour, &pitch, &vec![stretch; contour.len()])?;
            ctx.write(&y, &output)?;
        }
        Command::Augment { input, output } => {
            let rows = augment::augment_corpus(&input, &output)?;
            println!("{} files written to {}", rows.len(), output.display());
        }
        Command::TrainToy {
            data,
            steps,
            checkpoint: out,
            batch,
            gru_a,
            embedding,
            conv_channels,
            log_every,
        } => train_toy(&ctx, &data, steps, &out, batch, gru_a, embedding, conv_channels, log_every)?,
        Command::Evaluate {
            system,
            ratios,
            data,
            checkpoint: ckpt,
            report,
        } => run_evaluate(&ctx, system, &ratios, data.as_deref(), ckpt.as_deref(), report.as_deref())?,
        Command::Compare { a, b, report } => {
            let ca = pipeline::track_conditioned(&load_wav(&a)?, &ctx.cfg)?;
            let cb = pipeline::track_conditioned(&load_wav(&b)?, &ctx.cfg)?;
            if ca.len() != cb.len() {
                log::warn!("{} has {} frames, {} has {}", a.display(), ca.len(), b.display(), cb.len());
            }
            let n = ca.len().min(cb.len());
            let m = compare_contours(&evaluate::truncate(&ca, n), &evaluate::truncate(&cb, n), VOICING_THRESHOLD)?;
            println!(
                "f1 {:.4} rms_cents {:.2} gpe {:.4} voiced_frames {}",
                m.f1, m.rms_cents, m.gpe, m.n_frames
            );
            if let Some(p) = report {
                write_report(
                    &[ReportRow {
                        system: "compare".into(),
                        ratio: 1.0,
                        f1: m.f1,
                        rms_cents: m.rms_cents,
                        gpe: m.gpe,
                        n_frames: m.n_frames,
                    }],
                    p,
                )?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_toy(
    ctx: &Ctx,
    data: &Path,
    steps: usize,
    out: &Path,
    batch: usize,
    gru_a: usize,
    embedding: usize,
    conv_channels: usize,
    log_every: usize,
) -> Result<()> {
    let config = NetConfig {
        gru_a,
        code_embedding: embedding,
        conv_channels,
        ..NetConfig::default()
    };
    if !config.is_valid() || batch == 0 {
        return Err(Error::InvalidArgument("network sizes and batch must be positive".into()).into());
    }
    let mut rng = ctx.rng();
    let clips = wav_files(data)?
        .iter()
        .map(|p| Ok(TrainingClip::from_audio(&load_wav(p)?, &ctx.cfg, &mut rng)?))
        .collect::<Result<Vec<_>>>()?;
    let mut params = Params::init(config, &mut rng);
    let mut opt = AmsGrad::new(&params);
    let start = Instant::now();
    for step in 1..=steps {
        let slices = random_slices(&clips, batch, &mut rng);
        let loss = train_step(&mut params, &mut opt, &clips, &slices)?;
        if step % log_every.max(1) == 0 || step == steps {
            println!("step {step} loss {loss:.4} elapsed {:.1}s", start.elapsed().as_secs_f64());
        }
    }
    checkpoint::save(&params, out)?;
    Ok(())
}

fn run_evaluate(
    ctx: &Ctx,
    system: System,
    ratios: &[f64],
    data: Option<&Path>,
    ckpt: Option<&Path>,
    report: Option<&Path>,
) -> Result<()> {
    let corpus: Vec<AudioBuffer> = match data {
        Some(dir) => wav_files(dir)?
            .iter()
            .map(|p| Ok(load_wav(p)?))
            .collect::<Result<_>>()?,
        None => stimuli::vowel_suite(20, 80.0, 300.0, 0.5, &mut ChaCha8Rng::seed_from_u64(ctx.seed))
            .into_iter()
            .map(|(_, v)| v)
            .collect(),
    };
    let cfg = ctx.cfg;
    let seed = ctx.seed;
    let tracker = |a: &AudioBuffer| pipeline::track_conditioned(a, &cfg);
    let rows = match system {
        System::ClpcDsp => evaluate::evaluate_corpus(
            |a: &AudioBuffer, r| pipeline::edit_dsp(a, r, 1.0, &cfg, seed),
            tracker,
            &corpus,
            ratios,
        )?,
        System::ClpcNeural => {
            let params = load_checkpoint(ckpt)?;
            evaluate::evaluate_corpus(
                |a: &AudioBuffer, r| edit_with(a, r, 1.0, &cfg, &mut NeuralBackend::new(params.clone()), seed),
                tracker,
                &corpus,
                ratios,
            )?
        }
        System::Psola => evaluate::evaluate_corpus(
            |a: &AudioBuffer, r| pipeline::edit_psola(a, r, 1.0, &cfg),
            tracker,
            &corpus,
            ratios,
        )?,
    };
    let name = match system {
        System::ClpcDsp => "clpc-dsp",
        System::ClpcNeural => "clpc-neural",
        System::Psola => "psola",
    };
    println!("system,ratio,f1,rms_cents,gpe,n_frames");
    let rows: Vec<ReportRow> = rows
        .into_iter()
        .map(|(ratio, m)| {
            println!("{name},{ratio},{:.4},{:.2},{:.4},{}", m.f1, m.rms_cents, m.gpe, m.n_frames);
            ReportRow {
                system: name.into(),
                ratio,
                f1: m.f1,
                rms_cents: m.rms_cents,
                gpe: m.gpe,
                n_frames: m.n_frames,
            }
        })
        .collect();
    if let Some(p) = report {
        write_report(&rows, p)?;
    }
    Ok(())
}

/// 1 for bad input or usage, 2 for failures inside the pipeline.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Io { .. }
                | Error::MalformedHeader(..)
                | Error::UnsupportedFormat(..)
                | Error::MultichannelUnsupported(..)
                | Error::InvalidSampleRate(..)
                | Error::InvalidArgument(..)
                | Error::LengthMismatch { .. }
                | Error::Csv(..)
                | Error::Parse(..)
                | Error::Checkpoint(..) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into()).into()), 1);
        assert_eq!(exit_code(&Error::Checkpoint("x".into()).into()), 1);
        assert_eq!(exit_code(&Error::NoVoicedOverlap.into()), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 2);
        let io: anyhow::Error = std::io::Error::other("gone").into();
        assert_eq!(exit_code(&io.context("reading")), 1);
    }
}
