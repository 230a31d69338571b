use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use blendsplat::avatar::Driver;
use blendsplat::dataset::SequenceDataset;
use blendsplat::experiments::{self, ThroughputSetup, SAMPLING_VARIANTS};
use blendsplat::io::{load_model, load_sequence, save_model, write_json, write_rgb_png};
use blendsplat::mesh::DeformedFrames;
use blendsplat::online::{run_online, OnlineConfig, StreamMode};
use blendsplat::synth::{save_synthetic, synth_generate, SynthConfig};
use blendsplat::train::{evaluate, render_model, train_offline, RunManifest, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "blendsplat", version, about = "Gaussian blendshape head avatars on the CPU")]
struct Cli {
    /// Random seed for generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file with optional "synth", "train" and "online" sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic sequence and its hidden ground-truth model.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        size: Option<u32>,
    },
    /// Train offline on the training split of a sequence.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        blendshapes: Option<usize>,
        #[arg(long, value_enum)]
        driver: Option<DriverArg>,
        #[arg(long)]
        no_color_init: bool,
        /// Train on every frame instead of holding out the tail.
        #[arg(long)]
        all_frames: bool,
    },
    /// Train online while replaying the sequence as a stream.
    Stream {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps_per_frame: Option<usize>,
        /// Ingest at this rate and train continuously instead of a fixed
        /// number of steps per frame.
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        local: Option<usize>,
        #[arg(long)]
        global: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        no_global: bool,
        #[arg(long)]
        no_local: bool,
    },
    /// Render a model for given rig parameters, a parameter sweep or an orbit.
    Render {
        #[arg(long)]
        model: PathBuf,
        /// Sequence providing rig and camera.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON file holding a list of θ vectors.
        #[arg(long)]
        theta: Option<PathBuf>,
        /// Sweep this rig parameter from -1 to 1 (others zero).
        #[arg(long)]
        sweep: Option<usize>,
        /// Number of novel views orbiting the head at neutral θ.
        #[arg(long)]
        orbit: Option<usize>,
        #[arg(long, default_value_t = 9)]
        count: usize,
    },
    /// PSNR / SSIM on the held-out frames.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Markdown table; a JSON report is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid and write a summary table.
    Ablate {
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Seeds for multi-seed experiments.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DriverArg {
    Mlp,
    Identity,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Experiment {
    Batching,
    Sampling,
    ColorInit,
    Reducing,
    PoolSize,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct FileConfig {
    synth: SynthConfig,
    train: TrainConfig,
    online: Option<OnlineConfig>,
}

struct Settings {
    file: FileConfig,
    seed: Option<u64>,
    threads: Option<usize>,
}

impl Settings {
    fn train(&self) -> TrainConfig {
        let mut c = self.file.train.clone();
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(t) = self.threads {
            c.workers = t;
        }
        c
    }

    fn online(&self) -> OnlineConfig {
        let mut c = self.file.online.clone().unwrap_or_else(|| OnlineConfig {
            train: self.file.train.clone(),
            ..OnlineConfig::default()
        });
        if let Some(s) = self.seed {
            c.train.seed = s;
        }
        if let Some(t) = self.threads {
            c.train.workers = t;
        }
        c
    }
}

fn load_data(path: &Path) -> Result<SequenceDataset> {
    load_sequence(path).with_context(|| format!("loading sequence {}", path.display()))
}

fn write_lines<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FileConfig::default(),
    };
    let settings = Settings {
        file,
        seed: cli.seed,
        threads: cli.threads,
    };

    match cli.command {
        Command::Synth { out, frames, size } => {
            let mut cfg = settings.file.synth.clone();
            if let Some(f) = frames {
                cfg.frames = f;
            }
            if let Some(s) = size {
                cfg.size = s;
            }
            if let Some(s) = settings.seed {
                cfg.seed = s;
            }
            let generated = synth_generate(&cfg)?;
            save_synthetic(&out, &generated)?;
            write_json(&out.join("synth.json"), &cfg)?;
            println!(
                "wrote {} frames ({}x{}) to {}",
                cfg.frames,
                cfg.size,
                cfg.size,
                out.display()
            );
        }
        Command::Train {
            data,
            out,
            steps,
            blendshapes,
            driver,
            no_color_init,
            all_frames,
        } => {
            let dataset = load_data(&data)?;
            let mut cfg = settings.train();
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if let Some(k) = blendshapes {
                cfg.blendshapes = k;
            }
            if let Some(d) = driver {
                cfg.driver = match d {
                    DriverArg::Mlp => Driver::Mlp,
                    DriverArg::Identity => Driver::IdentitySlice,
                };
            }
            if no_color_init {
                cfg.color_init = false;
            }
            let frames: Vec<usize> = if all_frames {
                (0..dataset.len()).collect()
            } else {
                dataset.split().0.collect()
            };
            let result = train_offline(&dataset, &frames, &cfg)?;
            fs::create_dir_all(&out)?;
            save_model(&out.join("model.bin"), &result.model, &result.color_state)?;
            write_lines(&out.join("metrics.jsonl"), &result.log)?;
            write_json(
                &out.join("manifest.json"),
                &RunManifest {
                    config: cfg,
                    num_gaussians: result.model.num_gaussians(),
                    train_frames: frames,
                    eval_background: [0.0; 3],
                },
            )?;
            let last = result.log.last().map_or(f64::NAN, |r| r.loss);
            println!("trained {} steps, final loss {last:.5}", result.log.len());
        }
        Command::Stream {
            data,
            out,
            steps_per_frame,
            fps,
            local,
            global,
            eta,
            no_global,
            no_local,
        } => {
            let dataset = load_data(&data)?;
            let mut cfg = settings.online();
            if let Some(s) = steps_per_frame {
                cfg.steps_per_frame = s;
            }
            if let Some(f) = fps {
                cfg.mode = StreamMode::WallClock { fps: f };
            }
            if let Some(l) = local {
                cfg.local_capacity = l;
            }
            if let Some(g) = global {
                cfg.global_capacity = g;
            }
            if let Some(e) = eta {
                cfg.eta = e;
            }
            cfg.use_global &= !no_global;
            cfg.use_local &= !no_local;
            let stream: Vec<usize> = dataset.split().0.collect();
            let result = run_online(&dataset, &stream, &cfg)?;
            fs::create_dir_all(&out)?;
            save_model(&out.join("model.bin"), &result.model, &result.color_state)?;
            write_lines(&out.join("metrics.jsonl"), &result.log)?;
            write_lines(&out.join("forgetting.jsonl"), &result.history)?;
            write_json(&out.join("online.json"), &cfg)?;
            if !result.completed {
                eprintln!(
                    "stream ended after {} frames, before warmup finished",
                    result.frames_ingested
                );
            }
            println!(
                "streamed {} frames, {} steps, early forgetting gap {:.5}",
                result.frames_ingested,
                result.log.len(),
                result.forgetting.early_mean_gap
            );
        }
        Command::Render {
            model,
            data,
            out,
            theta,
            sweep,
            orbit,
            count,
        } => {
            let dataset = load_data(&data)?;
            let (model, _) = load_model(&model)?;
            let h = dataset.rig.param_dim();
            let mut views: Vec<(Vec<f64>, f64)> = Vec::new();
            if let Some(p) = theta {
                let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                let list: Vec<Vec<f64>> = serde_json::from_str(&text)?;
                views.extend(list.into_iter().map(|t| (t, 0.0)));
            }
            if let Some(dim) = sweep {
                if dim >= h {
                    bail!("sweep parameter {dim} out of range (rig has {h})");
                }
                for i in 0..count {
                    let mut t = vec![0.0; h];
                    t[dim] = -1.0 + 2.0 * i as f64 / (count.max(2) - 1) as f64;
                    views.push((t, 0.0));
                }
            }
            if let Some(n) = orbit {
                for i in 0..n {
                    let yaw = -0.8 + 1.6 * i as f64 / (n.max(2) - 1) as f64;
                    views.push((vec![0.0; h], yaw));
                }
            }
            if views.is_empty() {
                bail!("nothing to render: pass --theta, --sweep or --orbit");
            }
            fs::create_dir_all(&out)?;
            let render_cfg = settings.train().render;
            for (i, (t, yaw)) in views.iter().enumerate() {
                let frames = DeformedFrames::from_params(&dataset.rig, t)?;
                let camera = dataset.camera.orbit_yaw(*yaw);
                let img = render_model(&model, &frames, t, &camera, [0.0; 3], &render_cfg)?;
                write_rgb_png(&out.join(format!("{i:04}.png")), &img)?;
            }
            println!("rendered {} images to {}", views.len(), out.display());
        }
        Command::Eval { model, data, out } => {
            let dataset = load_data(&data)?;
            let (model, _) = load_model(&model)?;
            let test: Vec<usize> = dataset.split().1.collect();
            if test.is_empty() {
                bail!("sequence too short for a held-out split");
            }
            let report = evaluate(&model, &dataset, &test, &settings.train().render)?;
            let mut table = experiments::Table::new(&["frame", "PSNR", "SSIM"]);
            for m in &report.frames {
                table.push(vec![m.frame.to_string(), format!("{:.2}", m.psnr), format!("{:.4}", m.ssim)]);
            }
            table.push(vec!["mean".into(), format!("{:.2}", report.mean_psnr), format!("{:.4}", report.mean_ssim)]);
            fs::write(&out, table.render()).with_context(|| format!("writing {}", out.display()))?;
            write_json(&out.with_extension("json"), &report)?;
            println!(
                "held-out frames {}..={}: PSNR {:.2} dB, SSIM {:.4}",
                test[0],
                test[test.len() - 1],
                report.mean_psnr,
                report.mean_ssim
            );
        }
        Command::Ablate {
            experiment,
            data,
            out,
            seeds,
        } => {
            let seed_list: Vec<u64> = (0..seeds).map(|s| settings.seed.unwrap_or(0) + s).collect();
            let need_data = || -> Result<SequenceDataset> {
                match &data {
                    Some(d) => load_data(d),
                    None => bail!("--data is required for this experiment"),
                }
            };
            let table = match experiment {
                Experiment::Batching => {
                    let setup = ThroughputSetup {
                        workers: settings.threads.unwrap_or_else(|| settings.train().resolved_workers()),
                        ..ThroughputSetup::default()
                    };
                    experiments::throughput_table(&experiments::batching_throughput(&setup)?)
                }
                Experiment::Sampling => {
                    let rows = experiments::sampling_ablation(
                        &need_data()?,
                        &settings.online(),
                        &SAMPLING_VARIANTS,
                        &seed_list,
                    )?;
                    experiments::sampling_table(&rows)
                }
                Experiment::ColorInit => {
                    let rows = experiments::color_init_ablation(
                        &need_data()?,
                        &settings.train(),
                        &seed_list,
                        0.05,
                        10,
                    )?;
                    experiments::color_init_table(&rows, 0.05)
                }
                Experiment::Reducing => {
                    let rows = experiments::reducing_ablation(&need_data()?, &settings.train())?;
                    experiments::driver_table(&rows)
                }
                Experiment::PoolSize => {
                    let base = settings.online();
                    let sizes = [
                        (base.local_capacity / 2, base.global_capacity / 2),
                        (base.local_capacity, base.global_capacity),
                        (base.local_capacity * 2, base.global_capacity * 2),
                    ];
                    let rows = experiments::pool_size_ablation(&need_data()?, &base, &sizes, seed_list[0])?;
                    experiments::sampling_table(&rows)
                }
            };
            let text = table.render();
            fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
