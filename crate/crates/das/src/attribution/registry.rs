//! Name-keyed strategy registry: every attribution method sits behind one
//! trait, and a scoring context lazily extracts and caches the feature packs
//! (per feature mode and checkpoint) the methods ask for.

use super::kernel::{build_kernel, Kernel};
use super::scores::*;
use crate::ddpm::{sample_with_trajectory, DiffusionSchedule, NoisePredictor};
use crate::error::{DasError, Result};
use crate::features::{
    average_set, extract_at_latents, extract_features, make_projection, normalize_and_average,
    plain_average, AveragedFeatures, ExtractConfig, FeatureMode, Projection, ProjectionSpec,
    SampleFeatures, Scalarizer,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Stream ids below this belong to training samples; targets live above it.
const TARGET_STREAM_BASE: u64 = 1 << 32;

/// Index meaning "the final model" in checkpoint-keyed caches.
const FINAL: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct Target {
    pub id: u64,
    pub x0: Vec<f64>,
    /// Recorded denoising trajectory, required by the journey method.
    pub trajectory: Option<Vec<(usize, Vec<f64>)>>,
}

impl Target {
    pub fn from_x0(id: u64, x0: Vec<f64>) -> Self {
        Target { id, x0, trajectory: None }
    }

    /// Deterministically generates a sample (with its trajectory) and wraps
    /// it as a target.
    pub fn generate(
        id: u64,
        model: &NoisePredictor,
        schedule: &DiffusionSchedule,
        num_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let traj = sample_with_trajectory(model, schedule, num_steps, seed)?;
        Ok(Target { id, x0: traj.sample, trajectory: Some(traj.latents) })
    }
}

#[derive(Debug, Clone)]
pub struct ScoringConfig {
    pub timesteps: Vec<usize>,
    pub k: usize,
    pub projection_seed: u64,
    pub lambda: f64,
    /// Unit-energy normalization across timesteps before averaging.
    pub normalize: bool,
    pub draws: usize,
    pub noise_seed: u64,
    /// Feature mode used by the Newton-step score.
    pub das_mode: FeatureMode,
    /// Restrict nonzero scores to the m most raw-cosine-similar samples.
    pub candidate_m: Option<usize>,
    pub memory_budget_floats: usize,
}

impl ScoringConfig {
    pub fn new(timesteps: Vec<usize>, k: usize) -> Self {
        ScoringConfig {
            timesteps,
            k,
            projection_seed: 17,
            lambda: 1e-2,
            normalize: true,
            draws: 1,
            noise_seed: 23,
            das_mode: FeatureMode::ExactJacobian,
            candidate_m: None,
            memory_budget_floats: 1 << 26,
        }
    }
}

struct Pack {
    avg: Vec<AveragedFeatures>,
}

type PackKey = (FeatureMode, usize);

pub struct AttributionContext<'a> {
    pub model: &'a NoisePredictor,
    pub checkpoints: &'a [NoisePredictor],
    pub schedule: &'a DiffusionSchedule,
    pub train_x0: &'a [Vec<f64>],
    pub cfg: ScoringConfig,
    projection: Projection,
    packs: Mutex<HashMap<PackKey, Arc<Pack>>>,
    kernels: Mutex<HashMap<PackKey, Arc<Kernel>>>,
    target_feats: Mutex<HashMap<(PackKey, u64), Arc<AveragedFeatures>>>,
}

impl<'a> AttributionContext<'a> {
    pub fn new(
        model: &'a NoisePredictor,
        checkpoints: &'a [NoisePredictor],
        schedule: &'a DiffusionSchedule,
        train_x0: &'a [Vec<f64>],
        cfg: ScoringConfig,
    ) -> Result<Self> {
        let spec = if cfg.k == model.num_params() {
            ProjectionSpec::identity(model.num_params())
        } else {
            ProjectionSpec::new(cfg.k, cfg.projection_seed)
        };
        let projection = make_projection(&spec, model.num_params())?;
        Ok(AttributionContext {
            model,
            checkpoints,
            schedule,
            train_x0,
            cfg,
            projection,
            packs: Mutex::new(HashMap::new()),
            kernels: Mutex::new(HashMap::new()),
            target_feats: Mutex::new(HashMap::new()),
        })
    }

    fn model_at(&self, ckpt: usize) -> Result<&NoisePredictor> {
        if ckpt == FINAL {
            Ok(self.model)
        } else {
            self.checkpoints.get(ckpt).ok_or(DasError::Index {
                index: ckpt,
                len: self.checkpoints.len(),
            })
        }
    }

    fn extract_cfg(&self, mode: FeatureMode) -> ExtractConfig {
        ExtractConfig {
            timesteps: self.cfg.timesteps.clone(),
            mode,
            draws: self.cfg.draws,
            noise_seed: self.cfg.noise_seed,
            stream_offset: 0,
            memory_budget_floats: self.cfg.memory_budget_floats,
        }
    }

    fn pack(&self, mode: FeatureMode, ckpt: usize) -> Result<Arc<Pack>> {
        if let Some(p) = self.packs.lock().unwrap().get(&(mode, ckpt)) {
            return Ok(p.clone());
        }
        let model = self.model_at(ckpt)?;
        let set = extract_features(
            model,
            self.schedule,
            self.train_x0,
            &self.projection,
            &self.extract_cfg(mode),
        )?;
        let avg = average_set(&set, self.cfg.normalize);
        let pack = Arc::new(Pack { avg });
        self.packs.lock().unwrap().insert((mode, ckpt), pack.clone());
        Ok(pack)
    }

    fn kernel(&self, mode: FeatureMode, ckpt: usize) -> Result<Arc<Kernel>> {
        if let Some(k) = self.kernels.lock().unwrap().get(&(mode, ckpt)) {
            return Ok(k.clone());
        }
        let pack = self.pack(mode, ckpt)?;
        let kernel = Arc::new(build_kernel(&pack.avg, self.cfg.lambda)?);
        self.kernels.lock().unwrap().insert((mode, ckpt), kernel.clone());
        Ok(kernel)
    }

    fn target_features(
        &self,
        target: &Target,
        mode: FeatureMode,
        ckpt: usize,
    ) -> Result<Arc<AveragedFeatures>> {
        let key = ((mode, ckpt), target.id);
        if let Some(f) = self.target_feats.lock().unwrap().get(&key) {
            return Ok(f.clone());
        }
        let model = self.model_at(ckpt)?;
        let mut cfg = self.extract_cfg(mode);
        cfg.stream_offset = TARGET_STREAM_BASE + target.id;
        let set = extract_features(
            model,
            self.schedule,
            std::slice::from_ref(&target.x0),
            &self.projection,
            &cfg,
        )?;
        let mut avg = if self.cfg.normalize {
            normalize_and_average(&set.samples[0])
        } else {
            plain_average(&set.samples[0])
        };
        avg.sample_id = target.id;
        let avg = Arc::new(avg);
        self.target_feats.lock().unwrap().insert(key, avg.clone());
        Ok(avg)
    }

    /// Per-sample non-averaged blocks (per-timestep scoring).
    pub fn raw_blocks(
        &self,
        target: &Target,
        mode: FeatureMode,
    ) -> Result<(SampleFeatures, Vec<SampleFeatures>)> {
        let train = extract_features(
            self.model,
            self.schedule,
            self.train_x0,
            &self.projection,
            &self.extract_cfg(mode),
        )?;
        let mut cfg = self.extract_cfg(mode);
        cfg.stream_offset = TARGET_STREAM_BASE + target.id;
        let tset = extract_features(
            self.model,
            self.schedule,
            std::slice::from_ref(&target.x0),
            &self.projection,
            &cfg,
        )?;
        let mut t = tset.samples.into_iter().next().unwrap();
        t.sample_id = target.id;
        Ok((t, train.samples))
    }

    fn trajectory_features(&self, target: &Target, mode: FeatureMode) -> Result<SampleFeatures> {
        let latents = target.trajectory.as_ref().ok_or_else(|| {
            DasError::Config("journey scoring needs a target with a recorded trajectory".into())
        })?;
        let mut f = extract_at_latents(
            self.model,
            latents,
            &self.projection,
            mode,
            self.cfg.noise_seed ^ (TARGET_STREAM_BASE + target.id),
        )?;
        f.sample_id = target.id;
        Ok(f)
    }

    fn apply_filter(&self, target: &Target, result: &mut AttributionResult) -> Result<()> {
        if let Some(m) = self.cfg.candidate_m {
            let keep = candidate_filter(&target.x0, self.train_x0, m)?;
            apply_candidate_filter(result, &keep);
        }
        Ok(())
    }
}

pub trait AttributionStrategy: Sync {
    fn name(&self) -> &'static str;
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult>;
}

struct Das;
struct DasPerTimestep;
struct Trak;
struct DTrak {
    scalarizer: Scalarizer,
    /// Divide scores by d² so the scalarized function is the output mean.
    average_output: bool,
    name: &'static str,
}
struct JourneyTrak;
struct NormalizedIf {
    relative: bool,
}
struct GradientSim {
    cos: bool,
}
struct TracIn {
    cos: bool,
}
struct RawSim {
    cos: bool,
}
struct RandomScores;

impl AttributionStrategy for Das {
    fn name(&self) -> &'static str {
        "das"
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let mode = ctx.cfg.das_mode;
        let pack = ctx.pack(mode, FINAL)?;
        let kernel = ctx.kernel(mode, FINAL)?;
        let tf = ctx.target_features(target, mode, FINAL)?;
        let mut res = das_score(&tf, &pack.avg, &kernel)?;
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for DasPerTimestep {
    fn name(&self) -> &'static str {
        "das_per_timestep"
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let (t_blocks, train_blocks) = ctx.raw_blocks(target, ctx.cfg.das_mode)?;
        let per_t = das_per_timestep(&t_blocks, &train_blocks, ctx.cfg.lambda)?;
        // report the mean over timesteps as the sample's score
        let n = train_blocks.len();
        let mut scores = vec![0.0; n];
        let mut leverage = vec![false; n];
        for (_, r) in &per_t {
            for i in 0..n {
                scores[i] += r.scores[i] / per_t.len() as f64;
                leverage[i] |= r.leverage[i];
            }
        }
        let mut res =
            AttributionResult::new(target.id, self.name(), ctx.cfg.lambda, scores);
        res.leverage = leverage;
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for Trak {
    fn name(&self) -> &'static str {
        "trak"
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let mode = FeatureMode::ScalarizedGradient(Scalarizer::SimpleLoss);
        let pack = ctx.pack(mode, FINAL)?;
        let kernel = ctx.kernel(mode, FINAL)?;
        let tf = ctx.target_features(target, mode, FINAL)?;
        let mut res = trak_score(&tf, &pack.avg, &kernel)?;
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for DTrak {
    fn name(&self) -> &'static str {
        self.name
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let mode = FeatureMode::ScalarizedGradient(self.scalarizer);
        let pack = ctx.pack(mode, FINAL)?;
        let kernel = ctx.kernel(mode, FINAL)?;
        let tf = ctx.target_features(target, mode, FINAL)?;
        let mut res = dtrak_score(&tf, &pack.avg, &kernel, self.name)?;
        if self.average_output {
            let d = ctx.model.output_dim() as f64;
            for s in &mut res.scores {
                *s /= d * d;
            }
        }
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for JourneyTrak {
    fn name(&self) -> &'static str {
        "journey_trak"
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let mode = FeatureMode::ScalarizedGradient(Scalarizer::SimpleLoss);
        let pack = ctx.pack(mode, FINAL)?;
        let kernel = ctx.kernel(mode, FINAL)?;
        let traj = ctx.trajectory_features(target, mode)?;
        let mut res = journey_trak_score(&traj, &pack.avg, &kernel)?;
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for NormalizedIf {
    fn name(&self) -> &'static str {
        if self.relative {
            "relative_if"
        } else {
            "renormalized_if"
        }
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let mode = FeatureMode::ScalarizedGradient(Scalarizer::SimpleLoss);
        let pack = ctx.pack(mode, FINAL)?;
        let kernel = ctx.kernel(mode, FINAL)?;
        let tf = ctx.target_features(target, mode, FINAL)?;
        let mut res = normalized_if_score(&tf, &pack.avg, &kernel, self.relative)?;
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for GradientSim {
    fn name(&self) -> &'static str {
        if self.cos {
            "gradient_cos"
        } else {
            "gradient_dot"
        }
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let mode = FeatureMode::ScalarizedGradient(Scalarizer::SimpleLoss);
        let pack = ctx.pack(mode, FINAL)?;
        let tf = ctx.target_features(target, mode, FINAL)?;
        let mut res = gradient_similarity(&tf, &pack.avg, self.cos)?;
        res.target_id = target.id;
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for TracIn {
    fn name(&self) -> &'static str {
        if self.cos {
            "gas"
        } else {
            "tracincp"
        }
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        if ctx.checkpoints.is_empty() {
            return Err(DasError::Config(format!(
                "{} needs training checkpoints (retrain with checkpoints > 0)",
                self.name()
            )));
        }
        let mode = FeatureMode::ScalarizedGradient(Scalarizer::SimpleLoss);
        let mut per_ckpt = Vec::with_capacity(ctx.checkpoints.len());
        for c in 0..ctx.checkpoints.len() {
            let pack = ctx.pack(mode, c)?;
            let tf = ctx.target_features(target, mode, c)?;
            per_ckpt.push(((*tf).clone(), pack.avg.clone()));
        }
        let mut res = tracincp_score(&per_ckpt, self.cos)?;
        res.target_id = target.id;
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for RawSim {
    fn name(&self) -> &'static str {
        if self.cos {
            "raw_pixel_cos"
        } else {
            "raw_pixel_dot"
        }
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let mut res = raw_similarity(target.id, &target.x0, ctx.train_x0, self.cos);
        ctx.apply_filter(target, &mut res)?;
        Ok(res)
    }
}

impl AttributionStrategy for RandomScores {
    fn name(&self) -> &'static str {
        "random"
    }
    fn score(&self, ctx: &AttributionContext, target: &Target) -> Result<AttributionResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.noise_seed);
        rng.set_stream(TARGET_STREAM_BASE * 2 + target.id);
        let scores = (0..ctx.train_x0.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
        Ok(AttributionResult::new(target.id, self.name(), 0.0, scores))
    }
}

/// Every registered method, in a stable order.
pub fn registry() -> Vec<Box<dyn AttributionStrategy>> {
    vec![
        Box::new(Das),
        Box::new(DasPerTimestep),
        Box::new(Trak),
        Box::new(DTrak {
            scalarizer: Scalarizer::SimpleLoss,
            average_output: false,
            name: "dtrak_simple_loss",
        }),
        Box::new(DTrak {
            scalarizer: Scalarizer::SquareNorm,
            average_output: false,
            name: "dtrak_square_norm",
        }),
        Box::new(DTrak {
            scalarizer: Scalarizer::OutputSum,
            average_output: true,
            name: "dtrak_output_avg",
        }),
        Box::new(JourneyTrak),
        Box::new(NormalizedIf { relative: true }),
        Box::new(NormalizedIf { relative: false }),
        Box::new(GradientSim { cos: false }),
        Box::new(GradientSim { cos: true }),
        Box::new(TracIn { cos: false }),
        Box::new(TracIn { cos: true }),
        Box::new(RawSim { cos: false }),
        Box::new(RawSim { cos: true }),
        Box::new(RandomScores),
    ]
}

pub fn method_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

pub fn lookup(name: &str) -> Result<Box<dyn AttributionStrategy>> {
    registry()
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| {
            DasError::Parameter(format!(
                "unknown method '{name}'; known: {}",
                method_names().join(", ")
            ))
        })
}
