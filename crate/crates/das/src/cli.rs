//! The `das` executable: dataset generation, training, feature extraction,
//! attribution, and the three benchmarks, each emitting its artifact plus a
//! manifest line (config hash, input hashes, wall time).

use crate::attribution::{
    lookup, method_names, write_scores_csv, AttributionContext, ScoringConfig, Target,
};
use crate::config::{append_manifest, file_digest, manifest_hit, ManifestEntry, RunConfig};
use crate::ddpm::{
    generate_dataset, read_dataset, read_model, train, write_dataset, write_model, DataPoint,
    DiffusionSchedule, NoisePredictor, TrainConfig,
};
use crate::error::{DasError, Result};
use crate::eval::{
    run_counterfactual, run_lds, run_output_function_experiment, write_bar_chart,
    CounterfactualConfig, LdsConfig, OutputFnConfig,
};
use crate::features::{
    extract_features, make_projection, store_write, timestep_grid, ExtractConfig, FeatureMode,
    ProjectionSpec, Scalarizer,
};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "das", version, about = "training-data attribution for small diffusion models")]
struct Cli {
    /// Worker pool size (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct TrainOpts {
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.02)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-6)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    timesteps: usize,
    #[arg(long, default_value_t = 1e-4)]
    beta_start: f64,
    #[arg(long, default_value_t = 0.02)]
    beta_end: f64,
    /// Comma-separated hidden layer sizes.
    #[arg(long, default_value = "32,32", value_delimiter = ',')]
    hidden: Vec<usize>,
    /// Evenly spaced checkpoints to keep (0 = none).
    #[arg(long, default_value_t = 0)]
    checkpoints: usize,
}

impl TrainOpts {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed: self.seed,
            num_timesteps: self.timesteps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            hidden: self.hidden.clone(),
            checkpoints: self.checkpoints,
        }
    }

    fn record(&self, cfg: &mut RunConfig) {
        let c = self.to_config();
        cfg.set("train", "epochs", c.epochs);
        cfg.set("train", "batch_size", c.batch_size);
        cfg.set("train", "learning_rate", c.learning_rate);
        cfg.set("train", "weight_decay", c.weight_decay);
        cfg.set("train", "seed", c.seed);
        cfg.set("schedule", "timesteps", c.num_timesteps);
        cfg.set("schedule", "beta_start", c.beta_start);
        cfg.set("schedule", "beta_end", c.beta_end);
        cfg.set(
            "train",
            "hidden",
            c.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        );
        cfg.set("train", "checkpoints", c.checkpoints);
    }
}

#[derive(Args, Debug, Clone)]
struct ScoringOpts {
    /// Timestep budget (evenly spaced grid over [1, T]).
    #[arg(long, default_value_t = 10)]
    t_budget: usize,
    /// Projected feature dimension.
    #[arg(long, default_value_t = 128)]
    k: usize,
    #[arg(long, default_value_t = 17)]
    projection_seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    /// Disable unit-energy normalization across timesteps.
    #[arg(long)]
    plain_average: bool,
    #[arg(long, default_value_t = 1)]
    draws: usize,
    #[arg(long, default_value_t = 23)]
    noise_seed: u64,
    /// Feature mode for the Newton-step score: exact | simple_loss |
    /// square_norm | output_sum.
    #[arg(long, default_value = "exact")]
    das_mode: String,
    /// Restrict scores to the m most raw-cosine-similar candidates.
    #[arg(long)]
    candidate_m: Option<usize>,
}

fn parse_mode(name: &str) -> Result<FeatureMode> {
    match name {
        "exact" => Ok(FeatureMode::ExactJacobian),
        "simple_loss" => Ok(FeatureMode::ScalarizedGradient(Scalarizer::SimpleLoss)),
        "square_norm" => Ok(FeatureMode::ScalarizedGradient(Scalarizer::SquareNorm)),
        "output_sum" => Ok(FeatureMode::ScalarizedGradient(Scalarizer::OutputSum)),
        _ => Err(DasError::Parameter(format!(
            "unknown feature mode '{name}' (exact, simple_loss, square_norm, output_sum)"
        ))),
    }
}

impl ScoringOpts {
    fn to_config(&self, num_timesteps: usize) -> Result<ScoringConfig> {
        let mut cfg =
            ScoringConfig::new(timestep_grid(num_timesteps, self.t_budget)?, self.k);
        cfg.projection_seed = self.projection_seed;
        cfg.lambda = self.lambda;
        cfg.normalize = !self.plain_average;
        cfg.draws = self.draws;
        cfg.noise_seed = self.noise_seed;
        cfg.das_mode = parse_mode(&self.das_mode)?;
        cfg.candidate_m = self.candidate_m;
        Ok(cfg)
    }

    fn record(&self, cfg: &mut RunConfig) {
        cfg.set("features", "t_budget", self.t_budget);
        cfg.set("features", "k", self.k);
        cfg.set("features", "projection_seed", self.projection_seed);
        cfg.set("features", "lambda", self.lambda);
        cfg.set("features", "normalize", !self.plain_average);
        cfg.set("features", "draws", self.draws);
        cfg.set("features", "noise_seed", self.noise_seed);
        cfg.set("features", "das_mode", &self.das_mode);
        if let Some(m) = self.candidate_m {
            cfg.set("features", "candidate_m", m);
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a deterministic toy dataset file.
    GenData {
        /// gauss2 or blobs8.
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the noise predictor on a dataset file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainOpts,
    },
    /// Extract per-sample gradient features into a feature store.
    Featurize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// exact | simple_loss | square_norm | output_sum.
        #[arg(long, default_value = "simple_loss")]
        mode: String,
        #[command(flatten)]
        scoring: ScoringOpts,
    },
    /// Score training samples for one or more targets.
    Attribute {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        method: String,
        /// Dataset indices used as validation targets.
        #[arg(long, value_delimiter = ',')]
        target_index: Vec<usize>,
        /// Sampling seeds for generated targets.
        #[arg(long, value_delimiter = ',')]
        gen_seed: Vec<u64>,
        /// Denoising steps for generated targets.
        #[arg(long, default_value_t = 50)]
        num_steps: usize,
        #[command(flatten)]
        scoring: ScoringOpts,
        /// Checkpoint files (for tracincp/gas).
        #[arg(long, value_delimiter = ',')]
        checkpoint: Vec<PathBuf>,
    },
    /// Linear datamodeling score benchmark.
    Lds {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value_t = 3)]
        seeds_per_subset: usize,
        #[arg(long, default_value_t = 1)]
        master_seed: u64,
        #[arg(long, default_value_t = 50)]
        val_targets: usize,
        #[arg(long, default_value_t = 50)]
        gen_targets: usize,
        #[arg(long, default_value_t = 50)]
        num_steps: usize,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        scoring: ScoringOpts,
        /// Checkpoint files (for tracincp/gas).
        #[arg(long, value_delimiter = ',')]
        checkpoint: Vec<PathBuf>,
    },
    /// Top-k removal counterfactual experiment.
    Counterfactual {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long, default_value_t = 20)]
        top_k: usize,
        #[arg(long, default_value_t = 8)]
        num_targets: usize,
        #[arg(long, default_value_t = 50)]
        num_steps: usize,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        scoring: ScoringOpts,
    },
    /// Output-function correlation experiment.
    Toyexp {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 60)]
        pairs: usize,
        #[arg(long, default_value_t = 0.2)]
        removal_fraction: f64,
        #[arg(long, default_value_t = 50)]
        num_steps: usize,
        #[command(flatten)]
        train: TrainOpts,
    },
}

pub fn cli_main() -> i32 {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // a failed re-init only means a pool already exists (tests); fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_data(path: &Path) -> Result<Vec<DataPoint>> {
    read_dataset(path)
}

fn load_model(path: &Path) -> Result<(NoisePredictor, DiffusionSchedule)> {
    read_model(path)
}

fn finish(
    out_dir: &Path,
    command: &str,
    cfg: &RunConfig,
    inputs: &[(&str, &Path)],
    output: &Path,
    started: Instant,
) -> Result<()> {
    let entry = ManifestEntry {
        command: command.to_string(),
        config_hash: cfg.hash(),
        input_hashes: inputs
            .iter()
            .map(|(name, p)| Ok((name.to_string(), file_digest(p)?)))
            .collect::<Result<Vec<_>>>()?,
        output: output.to_string_lossy().into_owned(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    append_manifest(out_dir, &entry)
}

/// Cache no-op check: true when this exact (command, config, inputs) already
/// produced this output.
fn is_noop(out_dir: &Path, command: &str, cfg: &RunConfig, inputs: &[(&str, &Path)], output: &Path) -> bool {
    let input_hashes: Option<Vec<(String, String)>> = inputs
        .iter()
        .map(|(name, p)| file_digest(p).ok().map(|h| (name.to_string(), h)))
        .collect();
    let Some(input_hashes) = input_hashes else {
        return false;
    };
    let entry = ManifestEntry {
        command: command.to_string(),
        config_hash: cfg.hash(),
        input_hashes,
        output: output.to_string_lossy().into_owned(),
        wall_seconds: 0.0,
    };
    manifest_hit(out_dir, &entry)
}

fn out_parent(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn build_targets(
    data: &[DataPoint],
    model: &NoisePredictor,
    schedule: &DiffusionSchedule,
    target_index: &[usize],
    gen_seeds: &[u64],
    num_steps: usize,
) -> Result<Vec<Target>> {
    let mut targets = Vec::new();
    for &i in target_index {
        let p = data.get(i).ok_or(DasError::Index { index: i, len: data.len() })?;
        targets.push(Target::from_x0(i as u64, p.features.clone()));
    }
    for (j, &seed) in gen_seeds.iter().enumerate() {
        targets.push(Target::generate(
            (data.len() + j) as u64,
            model,
            schedule,
            num_steps,
            seed,
        )?);
    }
    if targets.is_empty() {
        return Err(DasError::Parameter(
            "no targets: pass --target-index and/or --gen-seed".into(),
        ));
    }
    Ok(targets)
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<Vec<NoisePredictor>> {
    paths.iter().map(|p| Ok(load_model(p)?.0)).collect()
}

fn run(cmd: Cmd) -> Result<()> {
    let started = Instant::now();
    match cmd {
        Cmd::GenData { name, seed, n, out } => {
            let mut cfg = RunConfig::default();
            cfg.set("data", "name", &name);
            cfg.set("data", "seed", seed);
            cfg.set("data", "n", n);
            let dir = out_parent(&out);
            if is_noop(&dir, "gen-data", &cfg, &[], &out) {
                println!("gen-data: cache hit, nothing to do");
                return Ok(());
            }
            let data = generate_dataset(&name, n, seed)?;
            write_dataset(&out, &data)?;
            finish(&dir, "gen-data", &cfg, &[], &out, started)?;
            println!("wrote {} samples to {}", data.len(), out.display());
        }
        Cmd::Train { data, out, train: opts } => {
            let mut cfg = RunConfig::default();
            opts.record(&mut cfg);
            let dir = out_parent(&out);
            if is_noop(&dir, "train", &cfg, &[("data", &data)], &out) {
                println!("train: cache hit, nothing to do");
                return Ok(());
            }
            let dataset = load_data(&data)?;
            let tc = opts.to_config();
            let result = train(&dataset, &tc)?;
            let schedule = tc.schedule()?;
            write_model(&out, &result.model, &schedule)?;
            for (i, ckpt) in result.checkpoints.iter().enumerate() {
                let path = out.with_extension(format!("ckpt{i}.bin"));
                write_model(&path, ckpt, &schedule)?;
            }
            finish(&dir, "train", &cfg, &[("data", &data)], &out, started)?;
            println!(
                "trained {} params, {} checkpoints -> {}",
                result.model.num_params(),
                result.checkpoints.len(),
                out.display()
            );
        }
        Cmd::Featurize { data, model, out, mode, scoring } => {
            let mut cfg = RunConfig::default();
            scoring.record(&mut cfg);
            cfg.set("features", "mode", &mode);
            let dir = out_parent(&out);
            let inputs = [("data", data.as_path()), ("model", model.as_path())];
            if is_noop(&dir, "featurize", &cfg, &inputs, &out) {
                println!("featurize: cache hit, nothing to do");
                return Ok(());
            }
            let dataset = load_data(&data)?;
            let (net, schedule) = load_model(&model)?;
            let fmode = parse_mode(&mode)?;
            let sc = scoring.to_config(schedule.num_timesteps)?;
            let spec = if sc.k == net.num_params() {
                ProjectionSpec::identity(net.num_params())
            } else {
                ProjectionSpec::new(sc.k, sc.projection_seed)
            };
            let proj = make_projection(&spec, net.num_params())?;
            let xs: Vec<Vec<f64>> = dataset.iter().map(|p| p.features.clone()).collect();
            let mut ecfg = ExtractConfig::new(sc.timesteps.clone(), fmode, sc.noise_seed);
            ecfg.draws = sc.draws;
            let set = extract_features(&net, &schedule, &xs, &proj, &ecfg)?;
            store_write(&out, &set)?;
            finish(&dir, "featurize", &cfg, &inputs, &out, started)?;
            println!(
                "featurized {} samples x {} blocks -> {}",
                set.samples.len(),
                set.timesteps.len() * set.draws,
                out.display()
            );
        }
        Cmd::Attribute {
            data,
            model,
            out,
            method,
            target_index,
            gen_seed,
            num_steps,
            scoring,
            checkpoint,
        } => {
            let mut cfg = RunConfig::default();
            scoring.record(&mut cfg);
            cfg.set("methods", "method", &method);
            cfg.set(
                "targets",
                "indices",
                target_index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
            );
            cfg.set(
                "targets",
                "gen_seeds",
                gen_seed.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            );
            cfg.set("targets", "num_steps", num_steps);
            let dir = out_parent(&out);
            let inputs = [("data", data.as_path()), ("model", model.as_path())];
            if is_noop(&dir, "attribute", &cfg, &inputs, &out) {
                println!("attribute: cache hit, nothing to do");
                return Ok(());
            }
            let dataset = load_data(&data)?;
            let (net, schedule) = load_model(&model)?;
            let checkpoints = load_checkpoints(&checkpoint)?;
            let sc = scoring.to_config(schedule.num_timesteps)?;
            let xs: Vec<Vec<f64>> = dataset.iter().map(|p| p.features.clone()).collect();
            let ctx = AttributionContext::new(&net, &checkpoints, &schedule, &xs, sc)?;
            let strategy = lookup(&method)?;
            let targets =
                build_targets(&dataset, &net, &schedule, &target_index, &gen_seed, num_steps)?;
            let results: Result<Vec<_>> =
                targets.iter().map(|t| strategy.score(&ctx, t)).collect();
            let mut buf = Vec::new();
            write_scores_csv(&mut buf, &results?)?;
            std::fs::write(&out, buf)?;
            finish(&dir, "attribute", &cfg, &inputs, &out, started)?;
            println!("scored {} targets with {method} -> {}", targets.len(), out.display());
        }
        Cmd::Lds {
            data,
            model,
            out_dir,
            methods,
            m,
            fraction,
            seeds_per_subset,
            master_seed,
            val_targets,
            gen_targets,
            num_steps,
            cache_dir,
            train: topts,
            scoring,
            checkpoint,
        } => {
            let mut cfg = RunConfig::default();
            topts.record(&mut cfg);
            scoring.record(&mut cfg);
            cfg.set("experiment", "m", m);
            cfg.set("experiment", "fraction", fraction);
            cfg.set("experiment", "seeds_per_subset", seeds_per_subset);
            cfg.set("experiment", "master_seed", master_seed);
            cfg.set("experiment", "val_targets", val_targets);
            cfg.set("experiment", "gen_targets", gen_targets);
            cfg.set("experiment", "num_steps", num_steps);
            cfg.set("methods", "list", methods.join(","));
            let out = out_dir.join("lds_report.csv");
            let inputs = [("data", data.as_path()), ("model", model.as_path())];
            if is_noop(&out_dir, "lds", &cfg, &inputs, &out) {
                println!("lds: cache hit, nothing to do");
                return Ok(());
            }
            std::fs::create_dir_all(&out_dir)?;
            let dataset = load_data(&data)?;
            let (net, schedule) = load_model(&model)?;
            let checkpoints = load_checkpoints(&checkpoint)?;
            let sc = scoring.to_config(schedule.num_timesteps)?;
            let mut targets = Vec::new();
            for i in 0..val_targets.min(dataset.len()) {
                targets.push(Target::from_x0(i as u64, dataset[i].features.clone()));
            }
            for j in 0..gen_targets {
                targets.push(Target::generate(
                    (dataset.len() + j) as u64,
                    &net,
                    &schedule,
                    num_steps,
                    master_seed ^ (0x9E37 << 16) ^ j as u64,
                )?);
            }
            let lds_cfg = LdsConfig {
                m,
                fraction,
                seeds_per_subset,
                master_seed,
                train_cfg: topts.to_config(),
                scoring: sc,
                cache_dir,
            };
            let method_refs: Vec<&str> = methods.iter().map(|s| s.as_str()).collect();
            let reports = run_lds(
                &dataset,
                &net,
                &checkpoints,
                &schedule,
                &targets,
                &method_refs,
                &lds_cfg,
            )?;
            let mut csv = String::from("method,mean_lds,spread,degenerate_targets\n");
            let mut bars = Vec::new();
            for r in &reports {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    r.method, r.mean, r.spread, r.degenerate_targets
                ));
                bars.push((r.method.clone(), r.mean));
            }
            std::fs::write(&out, csv)?;
            write_bar_chart(&out_dir.join("lds_report.svg"), "mean LDS", &bars)?;
            finish(&out_dir, "lds", &cfg, &inputs, &out, started)?;
            for r in &reports {
                println!("lds {}: mean {:.4} (spread {:.4})", r.method, r.mean, r.spread);
            }
        }
        Cmd::Counterfactual {
            data,
            model,
            out_dir,
            methods,
            top_k,
            num_targets,
            num_steps,
            train: topts,
            scoring,
        } => {
            let mut cfg = RunConfig::default();
            topts.record(&mut cfg);
            scoring.record(&mut cfg);
            cfg.set("experiment", "top_k", top_k);
            cfg.set("experiment", "num_targets", num_targets);
            cfg.set("experiment", "num_steps", num_steps);
            cfg.set("methods", "list", methods.join(","));
            let out = out_dir.join("counterfactual_report.csv");
            let inputs = [("data", data.as_path()), ("model", model.as_path())];
            if is_noop(&out_dir, "counterfactual", &cfg, &inputs, &out) {
                println!("counterfactual: cache hit, nothing to do");
                return Ok(());
            }
            std::fs::create_dir_all(&out_dir)?;
            let dataset = load_data(&data)?;
            let (net, schedule) = load_model(&model)?;
            let sc = scoring.to_config(schedule.num_timesteps)?;
            let ccfg = CounterfactualConfig {
                top_k,
                gen_seeds: (0..num_targets as u64).map(|j| 1000 + j).collect(),
                num_steps,
                train_cfg: topts.to_config(),
                scoring: sc,
            };
            let method_refs: Vec<&str> = methods.iter().map(|s| s.as_str()).collect();
            let reports =
                run_counterfactual(&dataset, &net, &[], &schedule, &method_refs, &ccfg)?;
            let mut csv = String::from("method,mean_l2,mean_cosine\n");
            let mut bars = Vec::new();
            for r in &reports {
                csv.push_str(&format!("{},{},{}\n", r.method, r.mean_l2, r.mean_cosine));
                bars.push((r.method.clone(), r.mean_l2));
            }
            std::fs::write(&out, csv)?;
            write_bar_chart(
                &out_dir.join("counterfactual_report.svg"),
                &format!("regeneration L2 after top-{top_k} removal"),
                &bars,
            )?;
            finish(&out_dir, "counterfactual", &cfg, &inputs, &out, started)?;
            for r in &reports {
                println!(
                    "counterfactual {}: mean L2 {:.4}, mean cos {:.4}",
                    r.method, r.mean_l2, r.mean_cosine
                );
            }
        }
        Cmd::Toyexp { data, model, out_dir, pairs, removal_fraction, num_steps, train: topts } => {
            let mut cfg = RunConfig::default();
            topts.record(&mut cfg);
            cfg.set("experiment", "pairs", pairs);
            cfg.set("experiment", "removal_fraction", removal_fraction);
            cfg.set("experiment", "num_steps", num_steps);
            let out = out_dir.join("output_function_report.csv");
            let inputs = [("data", data.as_path()), ("model", model.as_path())];
            if is_noop(&out_dir, "toyexp", &cfg, &inputs, &out) {
                println!("toyexp: cache hit, nothing to do");
                return Ok(());
            }
            std::fs::create_dir_all(&out_dir)?;
            let dataset = load_data(&data)?;
            let (net, schedule) = load_model(&model)?;
            let ocfg = OutputFnConfig {
                num_pairs: pairs,
                removal_fraction,
                num_steps,
                train_cfg: topts.to_config(),
                seed: topts.seed ^ 0x70_EEB5,
            };
            let report = run_output_function_experiment(&dataset, &net, &schedule, &ocfg)?;
            let csv = format!(
                "signal,pearson_with_l2,pairs,degenerate\noutput_difference,{},{},{}\nloss_difference,{},{},{}\n",
                report.pearson_output_diff,
                report.pairs,
                report.degenerate,
                report.pearson_loss_diff,
                report.pairs,
                report.degenerate,
            );
            std::fs::write(&out, csv)?;
            write_bar_chart(
                &out_dir.join("output_function_report.svg"),
                "Pearson correlation with regeneration L2",
                &[
                    ("output diff".to_string(), report.pearson_output_diff),
                    ("loss diff".to_string(), report.pearson_loss_diff),
                ],
            )?;
            finish(&out_dir, "toyexp", &cfg, &inputs, &out, started)?;
            println!(
                "toyexp: pearson(output diff, L2) = {:.4}, pearson(loss diff, L2) = {:.4}{}",
                report.pearson_output_diff,
                report.pearson_loss_diff,
                if report.degenerate { " (degenerate)" } else { "" }
            );
        }
    }
    Ok(())
}

/// Exists so `--help` output lists known method names somewhere discoverable.
pub fn known_methods() -> Vec<&'static str> {
    method_names()
}
