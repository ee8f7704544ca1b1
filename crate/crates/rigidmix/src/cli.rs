//! Command-line front end.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand};
use rigidmix_core::eval::{adjusted_rand_index, matter_particles, matter_weighted_jaccard, probe_point_eval};
use rigidmix_core::geweke::{run_geweke, GewekeConfig};
use rigidmix_core::gibbs::sweep;
use rigidmix_core::init::{init_state, init_state_with_proposal};
use rigidmix_core::model::{sample_forward, Dim, ModelState, PointObservation};
use rigidmix_core::rng::mix;
use rigidmix_core::sva::sva_cluster;
use rigidmix_core::synth::{make_rigid_scene, motion_mask_proposal, NOISE};
use rigidmix_core::tracker::{map_point_labels, subsample_indices, track_step, track_with_proposal};
use serde::Serialize;

use crate::config::{ConfigFile, Settings};
use crate::dto::SceneDto;
use crate::dump::{DumpFrame, StateDump};
use crate::format::{read_labels, read_observations, write_labels, write_observations};
use crate::rdk::rdk_trial;
use crate::svg::write_frame_svg;

#[derive(Debug, Parser)]
#[command(name = "rigidmix", version, about = "Probabilistic grouping of moving points into rigid objects")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Random seed; every result is a deterministic function of it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Fraction of each frame's points used for inference, in (0, 1].
    #[arg(long, global = true)]
    pub subsample: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one frame of observations from the generative model.
    Simulate {
        #[arg(long, default_value_t = 500)]
        points: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Cluster label of every point.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Dump of the sampled latent state.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Generate a dot stimulus and its ground truth from a scene description.
    RdkGen {
        /// Scene description (JSON).
        #[arg(long, conflicts_with = "trial")]
        spec: Option<PathBuf>,
        /// Use the built-in random disc trial for `--seed` instead.
        #[arg(long)]
        trial: bool,
        /// Make the trial ambiguous: background moves with the disc.
        #[arg(long, requires = "trial")]
        ambiguous: bool,
        /// Ground-truth sidecar (default: next to the output).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write the scene description that was used.
        #[arg(long)]
        write_spec: Option<PathBuf>,
    },
    /// Infer a single frame.
    Fit {
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Render the fitted state to SVG.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Infer a whole sequence frame by frame.
    Track {
        #[arg(long)]
        obs: PathBuf,
        /// Continue from the last frame of an earlier state dump.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Render every frame to SVG; files are numbered after this path.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Hard-clustering baseline on a single frame.
    Sva {
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Report the adjusted Rand index against these labels.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Segmentation metrics of a state dump against ground truth.
    Eval {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Compare forward samples with a Gibbs chain.
    Geweke {
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 50)]
        batches: usize,
    },
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.threads {
        ensure!(n >= 1, "--threads must be at least 1");
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building thread pool")?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::Simulate {
            points,
            dim,
            truth,
            state,
        } => simulate(c, *points, *dim, truth.as_deref(), state.as_deref()),
        Command::RdkGen {
            spec,
            trial,
            ambiguous,
            truth,
            write_spec,
        } => rdk_gen(c, spec.as_deref(), *trial, *ambiguous, truth.as_deref(), write_spec.as_deref()),
        Command::Fit { obs, frame, plot } => fit(c, obs, *frame, plot.as_deref()),
        Command::Track { obs, resume, plot } => track(c, obs, resume.as_deref(), plot.as_deref()),
        Command::Sva { obs, frame, truth } => sva(c, obs, *frame, truth.as_deref()),
        Command::Eval { dump, obs, truth } => eval(c, dump, obs, truth),
        Command::Geweke { iterations, batches } => geweke(c, *iterations, *batches),
    }
}

fn out_path(c: &Common) -> anyhow::Result<&Path> {
    c.out.as_deref().context("--out is required for this command")
}

fn settings(c: &Common, dim: Dim) -> anyhow::Result<Settings> {
    let file = match &c.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut s = file.resolve(dim)?;
    if let Some(rate) = c.subsample {
        s.track.subsample_rate = rate;
        s.track.validate()?;
    }
    Ok(s)
}

fn frame_dim(frames: &[Vec<PointObservation>]) -> anyhow::Result<Dim> {
    let first = frames
        .iter()
        .flatten()
        .next()
        .context("observation file holds no points")?;
    Ok(Dim::from_value(first.position.len())?)
}

fn write_report<T: Serialize>(c: &Common, report: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match &c.out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

/// `plot.svg` becomes `plot_0003.svg` for frame 3.
fn numbered(path: &Path, t: usize) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("svg");
    path.with_file_name(format!("{stem}_{t:04}.{ext}"))
}

fn simulate(c: &Common, points: usize, dim: usize, truth: Option<&Path>, state: Option<&Path>) -> anyhow::Result<()> {
    let dim = Dim::from_value(dim)?;
    let s = settings(c, dim)?;
    let (latent, obs) = sample_forward(&s.hyper, s.clusters, s.particles, points, c.seed)?;
    write_observations(out_path(c)?, std::slice::from_ref(&obs))?;
    if let Some(p) = truth {
        let labels: Vec<i64> = latent
            .assignments
            .point_to_particle
            .iter()
            .map(|&l| latent.assignments.particle_to_cluster[l] as i64)
            .collect();
        write_labels(p, &[labels])?;
    }
    if let Some(p) = state {
        StateDump {
            seed: c.seed,
            hyper: s.hyper,
            frames: vec![DumpFrame {
                t: 0,
                used_indices: (0..points).collect(),
                state: latent,
            }],
        }
        .write(p)?;
    }
    Ok(())
}

fn rdk_gen(
    c: &Common,
    spec: Option<&Path>,
    trial: bool,
    ambiguous: bool,
    truth: Option<&Path>,
    write_spec: Option<&Path>,
) -> anyhow::Result<()> {
    let scene_spec = match (spec, trial) {
        (Some(p), false) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let dto: SceneDto = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            let mut s = dto.to_core()?;
            if c.seed != 0 {
                s.seed = c.seed;
            }
            s
        }
        (None, true) => rdk_trial(c.seed, ambiguous),
        _ => bail!("give either --spec or --trial"),
    };
    let scene = make_rigid_scene(&scene_spec)?;
    let out = out_path(c)?;
    write_observations(out, &scene.frames)?;
    let truth = truth.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("truth.jsonl"));
    write_labels(&truth, &scene.labels)?;
    if let Some(p) = write_spec {
        std::fs::write(p, serde_json::to_string_pretty(&SceneDto::from(&scene_spec))? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn initial_state(s: &Settings, obs: &[PointObservation], seed: u64) -> anyhow::Result<ModelState> {
    Ok(match s.proposal_factor {
        Some(f) => init_state_with_proposal(obs, s.clusters, s.particles, &s.hyper, seed, &motion_mask_proposal(obs, f))?,
        None => init_state(obs, s.clusters, s.particles, &s.hyper, seed)?,
    })
}

fn fit(c: &Common, obs_path: &Path, frame: usize, plot: Option<&Path>) -> anyhow::Result<()> {
    let frames = read_observations(obs_path)?;
    let all = frames
        .get(frame)
        .with_context(|| format!("frame {frame} not in {} ({} frames)", obs_path.display(), frames.len()))?;
    let s = settings(c, frame_dim(&frames)?)?;
    let used = subsample_indices(all.len(), s.track.subsample_rate, c.seed, frame);
    let obs: Vec<PointObservation> = used.iter().map(|&i| all[i].clone()).collect();
    let candidates = s.hyper.candidates()?;
    let mut state = initial_state(&s, &obs, c.seed)?;
    for _ in 0..s.fit_sweeps {
        state = sweep(&state, &obs, &s.hyper, &s.fit_schedule, &candidates)?;
    }
    if let Some(p) = plot {
        write_frame_svg(p, &state, all, &used)?;
    }
    StateDump {
        seed: c.seed,
        hyper: s.hyper,
        frames: vec![DumpFrame {
            t: frame,
            used_indices: used,
            state,
        }],
    }
    .write(out_path(c)?)?;
    Ok(())
}

fn track(c: &Common, obs_path: &Path, resume: Option<&Path>, plot: Option<&Path>) -> anyhow::Result<()> {
    let frames = read_observations(obs_path)?;
    let s = settings(c, frame_dim(&frames)?)?;
    let dump = match resume {
        None => {
            let proposal = s.proposal_factor.map(|f| motion_mask_proposal(&frames[0], f));
            let out = track_with_proposal(&frames, s.clusters, s.particles, &s.hyper, &s.track, c.seed, proposal.as_deref())?;
            StateDump {
                seed: c.seed,
                hyper: out.hyper,
                frames: out
                    .states
                    .into_iter()
                    .zip(out.used_indices)
                    .enumerate()
                    .map(|(t, (state, used_indices))| DumpFrame { t, used_indices, state })
                    .collect(),
            }
        }
        Some(p) => {
            let mut dump = StateDump::read(p)?;
            let last = dump.frames.last().context("state dump holds no frames")?;
            ensure!(
                last.t + 1 <= frames.len(),
                "dump ends at frame {} but the observations hold {} frames",
                last.t,
                frames.len()
            );
            let candidates = dump.hyper.candidates()?;
            let mut state = last.state.clone();
            for (t, frame) in frames.iter().enumerate().skip(last.t + 1) {
                let (next, used) = track_step(&state, frame, t, &dump.hyper, &s.track, &candidates)?;
                dump.frames.push(DumpFrame {
                    t,
                    used_indices: used,
                    state: next.clone(),
                });
                state = next;
            }
            dump
        }
    };
    if let Some(p) = plot {
        for f in &dump.frames {
            write_frame_svg(&numbered(p, f.t), &f.state, &frames[f.t], &f.used_indices)?;
        }
    }
    dump.write(out_path(c)?)?;
    Ok(())
}

#[derive(Serialize)]
struct SvaReport {
    point_to_particle: Vec<usize>,
    particle_to_cluster: Vec<usize>,
    rotations: Vec<Vec<Vec<f64>>>,
    translations: Vec<Vec<f64>>,
    losses: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ari: Option<f64>,
}

fn non_noise_ari(truth: &[i64], pred: &[usize]) -> anyhow::Result<f64> {
    let (a, b): (Vec<i64>, Vec<usize>) = truth
        .iter()
        .zip(pred)
        .filter(|(&g, _)| g != NOISE)
        .map(|(&g, &p)| (g, p))
        .unzip();
    Ok(adjusted_rand_index(&a, &b)?)
}

fn sva(c: &Common, obs_path: &Path, frame: usize, truth: Option<&Path>) -> anyhow::Result<()> {
    let frames = read_observations(obs_path)?;
    let obs = frames.get(frame).with_context(|| format!("frame {frame} not in {}", obs_path.display()))?;
    let s = settings(c, frame_dim(&frames)?)?;
    let r = sva_cluster(obs, s.clusters, s.particles, c.seed, s.sva_iterations)?;
    let ari = match truth {
        Some(p) => {
            let labels = read_labels(p)?;
            let gt = labels.get(frame).context("ground truth lacks this frame")?;
            ensure!(gt.len() == obs.len(), "ground truth has {} labels for {} points", gt.len(), obs.len());
            let pred: Vec<usize> = r.point_to_particle.iter().map(|&l| r.particle_to_cluster[l]).collect();
            Some(non_noise_ari(gt, &pred)?)
        }
        None => None,
    };
    let report = SvaReport {
        point_to_particle: r.point_to_particle,
        particle_to_cluster: r.particle_to_cluster,
        rotations: r.transforms.iter().map(|t| crate::dto::rows(&t.rotation)).collect(),
        translations: r.transforms.iter().map(|t| t.translation.iter().copied().collect()).collect(),
        losses: r.losses,
        ari,
    };
    write_report(c, &report)
}

#[derive(Serialize)]
struct ObjectScore {
    label: i64,
    probe_accuracy: f64,
    probe_jaccard: f64,
    matter_jaccard: f64,
}

#[derive(Serialize)]
struct FrameScore {
    t: usize,
    ari: f64,
    objects: Vec<ObjectScore>,
}

#[derive(Serialize)]
struct EvalReport {
    mean_ari: f64,
    mean_probe_jaccard: f64,
    mean_matter_jaccard: f64,
    frames: Vec<FrameScore>,
}

fn eval(c: &Common, dump_path: &Path, obs_path: &Path, truth_path: &Path) -> anyhow::Result<()> {
    let dump = StateDump::read(dump_path)?;
    let frames = read_observations(obs_path)?;
    let truth = read_labels(truth_path)?;
    let s = settings(c, dump.hyper.dim()?)?;
    let mut scores = Vec::with_capacity(dump.frames.len());
    for f in &dump.frames {
        let obs = frames.get(f.t).with_context(|| format!("frame {} missing from observations", f.t))?;
        let gt = truth.get(f.t).with_context(|| format!("frame {} missing from ground truth", f.t))?;
        ensure!(gt.len() == obs.len(), "frame {}: {} labels for {} points", f.t, gt.len(), obs.len());
        let pred = map_point_labels(&f.state, obs)?;
        let ari = non_noise_ari(gt, &pred)?;
        let pred_opt: Vec<Option<usize>> = pred.iter().map(|&p| Some(p)).collect();
        let mut objects: Vec<i64> = gt.iter().copied().filter(|&g| g != NOISE).collect();
        objects.sort_unstable();
        objects.dedup();
        let mut per_object = Vec::with_capacity(objects.len());
        for label in objects {
            let mask: Vec<bool> = gt.iter().map(|&g| g == label).collect();
            let probe = probe_point_eval(&pred_opt, &mask, None, s.probes, mix(&[c.seed, f.t as u64, label as u64]))?;
            let used_mask: Vec<bool> = f.used_indices.iter().map(|&i| mask[i]).collect();
            let matter = matter_weighted_jaccard(&matter_particles(&f.state, &used_mask)?);
            per_object.push(ObjectScore {
                label,
                probe_accuracy: probe.accuracy,
                probe_jaccard: probe.mean_jaccard,
                matter_jaccard: matter,
            });
        }
        scores.push(FrameScore {
            t: f.t,
            ari,
            objects: per_object,
        });
    }
    let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let report = EvalReport {
        mean_ari: mean(scores.iter().map(|f| f.ari).collect()),
        mean_probe_jaccard: mean(scores.iter().flat_map(|f| f.objects.iter().map(|o| o.probe_jaccard)).collect()),
        mean_matter_jaccard: mean(scores.iter().flat_map(|f| f.objects.iter().map(|o| o.matter_jaccard)).collect()),
        frames: scores,
    };
    write_report(c, &report)
}

#[derive(Serialize)]
struct GewekeLine {
    name: String,
    forward_mean: f64,
    forward_se: f64,
    chain_mean: f64,
    chain_se: f64,
    z: f64,
}

#[derive(Serialize)]
struct GewekeOut {
    iterations: usize,
    max_abs_z: f64,
    stats: Vec<GewekeLine>,
}

fn geweke(c: &Common, iterations: usize, batches: usize) -> anyhow::Result<()> {
    let mut cfg = GewekeConfig::small(c.seed);
    cfg.iterations = iterations;
    cfg.batches = batches;
    let r = run_geweke(&cfg)?;
    write_report(
        c,
        &GewekeOut {
            iterations,
            max_abs_z: r.max_abs_z,
            stats: r
                .stats
                .into_iter()
                .map(|s| GewekeLine {
                    name: s.name,
                    forward_mean: s.forward_mean,
                    forward_se: s.forward_se,
                    chain_mean: s.chain_mean,
                    chain_se: s.chain_se,
                    z: s.z,
                })
                .collect(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn plot_paths_are_numbered() {
        assert_eq!(numbered(Path::new("out/plot.svg"), 3), PathBuf::from("out/plot_0003.svg"));
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = Cli::try_parse_from(["rigidmix", "fit", "--obs", "a.jsonl", "--seed", "7", "--threads", "2"]).unwrap();
        assert_eq!(cli.common.seed, 7);
        assert_eq!(cli.common.threads, Some(2));
        assert!(matches!(cli.command, Command::Fit { frame: 0, .. }));
    }
}
