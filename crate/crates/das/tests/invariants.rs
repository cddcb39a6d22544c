//! Property-based checks of the algebraic invariants the pipeline relies on:
//! projection linearity, normalization scale invariance, rank-correlation
//! symmetries, and the sign/degeneracy structure of the scores.

use proptest::prelude::*;
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use das::attribution::{build_kernel, das_score, trak_score};
use das::ddpm::make_linear_schedule;
use das::eval::spearman;
use das::features::{
    make_projection, normalize_and_average, AveragedFeatures, ProjectionSpec, SampleFeatures,
    TimestepFeatures,
};
use das::linalg::{norm2, Mat};

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_features(seed: u64, n: usize, k: usize, d: usize) -> Vec<AveragedFeatures> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let rows: Vec<Vec<f64>> = (0..d).map(|_| gaussian_vec(&mut rng, k)).collect();
            AveragedFeatures {
                sample_id: i as u64,
                g: Mat::from_rows(&rows),
                r: gaussian_vec(&mut rng, d),
                normalized: false,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (p, k) = (40usize, 12usize);
        let proj = make_projection(&ProjectionSpec::new(k, seed), p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A);
        let u = gaussian_vec(&mut rng, p);
        let v = gaussian_vec(&mut rng, p);
        let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let lhs = proj.project(&combo);
        let pu = proj.project(&u);
        let pv = proj.project(&v);
        for i in 0..k {
            let rhs = a * pu[i] + b * pv[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn normalized_average_ignores_per_sample_scale(seed in 0u64..1000, c in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, d, blocks) = (6usize, 2usize, 4usize);
        let make = |scale: f64, rng: &mut ChaCha8Rng| SampleFeatures {
            sample_id: 0,
            blocks: (0..blocks)
                .map(|b| TimestepFeatures {
                    t: b + 1,
                    g: Mat::from_rows(
                        &(0..d)
                            .map(|_| gaussian_vec(rng, k).iter().map(|x| scale * x).collect())
                            .collect::<Vec<_>>(),
                    ),
                    r: gaussian_vec(rng, d),
                })
                .collect(),
        };
        let base = make(1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let scaled = make(c, &mut ChaCha8Rng::seed_from_u64(seed));
        let _ = &mut rng;
        let ga = normalize_and_average(&base);
        let gb = normalize_and_average(&scaled);
        for a in 0..d {
            for (x, y) in ga.g.row(a).iter().zip(gb.g.row(a)) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn spearman_is_symmetric_and_monotone_invariant(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_vec(&mut rng, 25);
        let b = gaussian_vec(&mut rng, 25);
        let ab = spearman(&a, &b).unwrap();
        let ba = spearman(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
        // A strictly increasing transform of either argument changes nothing.
        let warped: Vec<f64> = a.iter().map(|x| x.exp() + 3.0 * x).collect();
        let rho = spearman(&warped, &b).unwrap();
        prop_assert!((ab - rho).abs() < 1e-12);
    }

    #[test]
    fn das_scores_are_nonnegative_and_scale_as_c_squared(
        seed in 0u64..1000,
        c in 1e-2f64..1e2,
        lambda in 1e-3f64..1.0,
    ) {
        let train = random_features(seed, 20, 8, 2);
        let kernel = build_kernel(&train, lambda).unwrap();
        let target = random_features(seed ^ 0xD00D, 1, 8, 2).pop().unwrap();
        let res = das_score(&target, &train, &kernel).unwrap();
        for &s in &res.scores {
            prop_assert!(s >= 0.0, "squared norm went negative: {s}");
        }
        // Scaling the target multiplies every score by c²; ranking unchanged.
        let mut scaled = target.clone();
        for a in 0..scaled.g.rows {
            scaled.g.row_mut(a).iter_mut().for_each(|x| *x *= c);
        }
        let res2 = das_score(&scaled, &train, &kernel).unwrap();
        for (s, s2) in res.scores.iter().zip(&res2.scores) {
            prop_assert!((s2 - c * c * s).abs() <= 1e-9 * (1.0 + c * c * s.abs()));
        }
        prop_assert_eq!(res.ranks(), res2.ranks());
    }

    #[test]
    fn zero_residual_kills_newton_and_trak_scores(seed in 0u64..1000) {
        let mut train = random_features(seed, 15, 8, 1);
        train[3].r = vec![0.0];
        let kernel = build_kernel(&train, 1e-2).unwrap();
        let target = random_features(seed ^ 0xF00, 1, 8, 1).pop().unwrap();
        let das = das_score(&target, &train, &kernel).unwrap();
        let trak = trak_score(&target, &train, &kernel).unwrap();
        prop_assert_eq!(das.scores[3], 0.0);
        prop_assert_eq!(trak.scores[3], 0.0);
        prop_assert!(das.scores.iter().enumerate().any(|(i, &s)| i != 3 && s != 0.0));
    }

    #[test]
    fn kernel_solve_residual_is_tiny(seed in 0u64..1000, lambda in 1e-4f64..1.0) {
        let train = random_features(seed, 30, 10, 1);
        let kernel = build_kernel(&train, lambda).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABC);
        let b = gaussian_vec(&mut rng, 10);
        let x = kernel.solve(&b);
        // H x where H = ΦᵀΦ + λI, accumulated densely.
        let mut h = Mat::zeros(10, 10);
        for f in &train {
            h.add_outer(f.g.row(0), 1.0);
        }
        h.add_diag(lambda);
        let hx = h.matvec(&x);
        let resid: Vec<f64> = hx.iter().zip(&b).map(|(p, q)| p - q).collect();
        prop_assert!(norm2(&resid) / norm2(&b) < 1e-10);
    }

    #[test]
    fn alpha_bar_strictly_decreases(t in 2usize..500, b0 in 1e-5f64..1e-3, b1 in 0.01f64..0.05) {
        let s = make_linear_schedule(t, b0, b1).unwrap();
        for i in 1..t {
            prop_assert!(s.alpha_bars[i] < s.alpha_bars[i - 1]);
        }
    }
}
