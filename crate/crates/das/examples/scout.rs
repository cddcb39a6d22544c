//! Scratch scouting harness for the blobs8 retraining benchmark (not part of
//! the test suite).
use das::attribution::{ScoringConfig, Target};
use das::ddpm::{generate_dataset, train, TrainConfig};
use das::eval::{run_lds, LdsConfig};
use das::features::{timestep_grid, FeatureMode, Scalarizer};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let h1: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(96);
    let h2: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(64);
    let ep: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2400);
    let lam: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let dr: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(32);
    let t0 = Instant::now();
    let (n, n_val, big_t) = (100usize, 30usize, 200usize);
    let data_full = generate_dataset("blobs8", n + n_val, 7).unwrap();
    let data = data_full[..n].to_vec();
    let tc = TrainConfig {
        epochs: ep,
        hidden: vec![h1, h2],
        seed: seed * 101,
        num_timesteps: big_t,
        ..TrainConfig::default()
    };
    let result = train(&data, &tc).unwrap();
    let schedule = tc.schedule().unwrap();
    let mut scoring = ScoringConfig::new(timestep_grid(big_t, 10).unwrap(), 256);
    scoring.draws = dr;
    scoring.noise_seed = seed ^ 0xFEED;
    scoring.das_mode = FeatureMode::ScalarizedGradient(Scalarizer::SimpleLoss);
    scoring.lambda = lam;
    let targets: Vec<Target> = (0..n_val)
        .map(|i| Target::from_x0(i as u64, data_full[n + i].features.clone()))
        .collect();
    let cfg = LdsConfig {
        m: 32,
        fraction: 0.5,
        seeds_per_subset: 1,
        master_seed: seed,
        train_cfg: tc.clone(),
        scoring,
        cache_dir: Some(std::path::PathBuf::from(format!(
            "/tmp/scout_blobs8_{seed}_h{h1}x{h2}_e{ep}"
        ))),
    };
    let methods = ["das", "dtrak_square_norm", "raw_pixel_cos", "random"];
    let reports =
        run_lds(&data, &result.model, &result.checkpoints, &schedule, &targets, &methods, &cfg)
            .unwrap();
    let get = |name: &str| reports.iter().find(|r| r.method == name).unwrap().mean;
    println!(
        "blobs8 seed={seed} h={h1}x{h2} ep={ep} lam={lam} dr={dr}: das {:+.4} dtrak {:+.4} raw {:+.4} random {:+.4} [{:.0}s]",
        get("das"),
        get("dtrak_square_norm"),
        get("raw_pixel_cos"),
        get("random"),
        t0.elapsed().as_secs_f64()
    );
}
