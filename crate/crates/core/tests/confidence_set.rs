mod common;

use common::oracle::{self, Inputs};
use mcci_core::confset::{
    build_confset, radius_sq, residual_stat, xi_alpha, ConfSetConstants, ConfidenceSet, Mode,
};
use mcci_core::linalg::{frob_dist_sq, Matrix};
use mcci_core::model::{gen_low_rank, minimax_rate, sample_observation};
use mcci_core::rng::keyed_rng;
use mcci_core::selection::select_rank;
use mcci_core::{ModelParams, NoiseSpec};
use proptest::prelude::*;
use rand::Rng;

fn random_inputs<R: Rng>(rng: &mut R) -> Inputs {
    let m1 = rng.random_range(5..60);
    let m2 = rng.random_range(5..60);
    let n = rng.random_range(1..=m1 * m2);
    let sigma = rng.random_range(0.0..2.0);
    Inputs {
        m1,
        m2,
        n,
        a: rng.random_range(0.1..3.0),
        sigma,
        u: sigma * rng.random_range(1.0..2.0),
        k: rng.random_range(1..=m1.min(m2)),
        z: 10f64.powf(rng.random_range(-3.0..4.0)),
        c_star: rng.random_range(2.0..5.0),
        alpha: rng.random_range(0.001..0.999),
        r_hat: rng.random_range(-0.5..2.0),
    }
}

fn library_radius(x: &Inputs) -> f64 {
    let params = ModelParams::new(x.m1, x.m2, x.n, x.a, x.sigma, x.u).unwrap();
    let consts = ConfSetConstants {
        c_star: x.c_star,
        ..ConfSetConstants::calibrated(x.alpha, x.z).unwrap()
    };
    radius_sq(x.r_hat, x.k, &params, &consts).unwrap()
}

#[test]
fn formulas_match_scalar_oracle() {
    let mut rng = keyed_rng(11, &[]);
    for _ in 0..200 {
        let x = random_inputs(&mut rng);
        let params = ModelParams::new(x.m1, x.m2, x.n, x.a, x.sigma, x.u).unwrap();
        let c = rng.random_range(0.01..10.0);
        assert!(oracle::rel_err(xi_alpha(x.alpha, x.u, x.n).unwrap(), oracle::xi(x.alpha, x.u, x.n)) <= 1e-12);
        let r = minimax_rate(x.k, &params, c).unwrap();
        assert!(oracle::rel_err(r, oracle::rate(c, x.sigma, x.a, x.m1, x.m2, x.k, x.n)) <= 1e-12);
        assert!(oracle::rel_err(library_radius(&x), oracle::radius_sq(&x)) <= 1e-12);
    }
}

#[test]
fn paper_mode_uses_z_not_z_cal() {
    let params = ModelParams::new(30, 30, 450, 1.0, 0.1, 0.1).unwrap();
    let paper = ConfSetConstants::paper(0.1).unwrap();
    let cal = ConfSetConstants::calibrated(0.1, 0.01).unwrap();
    let mut x = Inputs {
        m1: 30,
        m2: 30,
        n: 450,
        a: 1.0,
        sigma: 0.1,
        u: 0.1,
        k: 2,
        z: 6240.0,
        c_star: 2.0,
        alpha: 0.1,
        r_hat: 0.02,
    };
    assert!(oracle::rel_err(radius_sq(0.02, 2, &params, &paper).unwrap(), oracle::radius_sq(&x)) <= 1e-12);
    x.z = 0.01;
    assert!(oracle::rel_err(radius_sq(0.02, 2, &params, &cal).unwrap(), oracle::radius_sq(&x)) <= 1e-12);
    assert_eq!(cal.with_mode(Mode::Paper).effective_z(), 6240.0);
}

/// Explicit ball membership agrees with the implicit inequality, including points
/// placed on, just inside and just outside the boundary.
#[test]
fn explicit_radius_round_trips_through_implicit_form() {
    let mut rng = keyed_rng(12, &[]);
    let mut checked = 0;
    while checked < 300 {
        let x = random_inputs(&mut rng);
        let rho = library_radius(&x);
        let entries = (x.m1 * x.m2) as f64;
        if rho == 0.0 {
            // nonpositive bracket: the implicit set holds at most M̃, the floored ball is {M̃}
            assert!(!oracle::implicit_member(1e-9 * entries, &x));
            continue;
        }
        for scale in [0.0, 0.5, 1.0 - 1e-9, 1.0 + 1e-9, 2.0] {
            let dist_sq = scale * rho * entries;
            let explicit = dist_sq / entries <= rho;
            assert_eq!(explicit, oracle::implicit_member(dist_sq, &x), "scale {scale}");
        }
        checked += 1;
    }
}

/// On the boundary both sides of the implicit inequality coincide.
#[test]
fn boundary_satisfies_implicit_form_with_equality() {
    let mut rng = keyed_rng(13, &[]);
    for _ in 0..100 {
        let x = random_inputs(&mut rng);
        let rho = library_radius(&x);
        if rho == 0.0 {
            continue;
        }
        let (m1, m2, n) = (x.m1 as f64, x.m2 as f64, x.n as f64);
        let d = m1 + m2;
        let k = x.k as f64;
        let dist_sq = rho * m1 * m2;
        let z_bar = n / (m1 * m2) / 256.0 * dist_sq + x.z * (x.u * x.c_star).powi(2) * d * k;
        let rhs = 128.0
            * (x.r_hat
                + (x.a * x.a * x.z * d * k + z_bar) / n
                + oracle::xi(x.alpha, x.u, x.n) / n.sqrt());
        assert!(oracle::rel_err(rho, rhs) <= 1e-9, "{rho} vs {rhs}");
    }
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = keyed_rng(seed, &[]);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn residual_stat_matches_double_loop() {
    for seed in 0..20u64 {
        let (m1, m2) = (3 + seed as usize % 4, 3 + seed as usize % 3);
        let noise = NoiseSpec::uniform(0.3);
        let params = ModelParams::with_noise(m1, m2, (m1 * m2) / 2 + 1, 1.0, &noise).unwrap();
        let truth = gen_low_rank(m1, m2, 1, 1.0, seed).unwrap();
        let obs = sample_observation(&truth, &params, &noise, seed + 100).unwrap();
        let center = random_matrix(m1, m2, seed + 200);
        let rows = |m: &Matrix| -> Vec<Vec<f64>> {
            (0..m1).map(|i| (0..m2).map(|j| m[(i, j)]).collect()).collect()
        };
        let mask: Vec<Vec<bool>> = (0..m1).map(|i| (0..m2).map(|j| obs.mask[(i, j)]).collect()).collect();
        let want = oracle::residual_stat(&rows(&obs.values), &mask, &rows(&center), 0.3, params.n);
        let got = residual_stat(&obs, &center, 0.3, params.n).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn residual_stat_is_unbiased_for_fixed_center() {
    let noise = NoiseSpec::rademacher(0.4);
    let params = ModelParams::with_noise(12, 10, 60, 1.0, &noise).unwrap();
    let truth = gen_low_rank(12, 10, 2, 1.0, 5).unwrap();
    let center = random_matrix(12, 10, 6);
    let target = frob_dist_sq(&truth.matrix, &center) / 120.0;
    let reps = 4000;
    let draws: Vec<f64> = (0..reps)
        .map(|r| {
            let obs = sample_observation(&truth, &params, &noise, 1000 + r).unwrap();
            residual_stat(&obs, &center, 0.4, params.n).unwrap()
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / reps as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    assert!((mean - target).abs() <= 5.0 * se, "mean {mean} target {target} se {se}");
}

#[test]
fn noiseless_full_observation_radius_is_constants_only() {
    let noise = NoiseSpec::rademacher(0.0);
    let params = ModelParams::with_noise(20, 20, 400, 1.0, &noise).unwrap();
    let truth = gen_low_rank(20, 20, 2, 1.0, 7).unwrap();
    let obs = sample_observation(&truth, &params, &noise, 8).unwrap();
    let sel = select_rank(&truth.matrix, &params, 1e-9, 1.0, 10).unwrap();
    assert_eq!(sel.k_star, 2);
    let consts = ConfSetConstants::calibrated(0.1, 0.5).unwrap();
    let cs = build_confset(&obs, &sel, &params, &consts).unwrap();
    assert!(cs.r_hat.abs() < 1e-12);
    let expected = 256.0 * (0.5 * 40.0 * cs.k_star as f64 / 400.0);
    assert!((cs.rho_sq - expected).abs() < 1e-9 * expected);
    assert!(cs.contains(&truth.matrix).unwrap());
}

#[test]
fn boundary_membership() {
    let center = random_matrix(8, 6, 21);
    let consts = ConfSetConstants::calibrated(0.1, 1.0).unwrap();
    let cs = ConfidenceSet {
        center: center.clone(),
        k_star: 1,
        rho_sq: 0.37,
        constants: consts,
        r_hat: 0.0,
    };
    let mut dir = random_matrix(8, 6, 22);
    dir /= dir.norm();
    let radius = (0.37 * 48.0_f64).sqrt();
    // shrink by one part in 1e12 so rounding cannot push the point outside
    assert!(cs.contains(&(&center + &dir * (radius * (1.0 - 1e-12)))).unwrap());
    assert!(!cs.contains(&(&center + &dir * (radius * (1.0 + 1e-6)))).unwrap());
    assert!(cs.contains(&center).unwrap());
    assert_eq!(cs.diameter_sq(), 4.0 * 0.37);
    assert!(cs.contains(&Matrix::zeros(3, 3)).is_err());
}

#[test]
fn record_serialises_with_and_without_center() {
    let cs = ConfidenceSet {
        center: random_matrix(3, 2, 1),
        k_star: 1,
        rho_sq: 0.5,
        constants: ConfSetConstants::paper(0.05).unwrap(),
        r_hat: 0.1,
    };
    let slim = serde_json::to_string(&cs.to_record(false)).unwrap();
    let full = serde_json::to_string(&cs.to_record(true)).unwrap();
    assert!(!slim.contains("center\":["));
    assert!(full.contains("center"));
    assert!(full.len() > slim.len());
}

proptest! {
    #[test]
    fn radius_monotone(
        r_hat in -0.1f64..1.0,
        k in 1usize..10,
        n in 100usize..900,
        a in 0.1f64..3.0,
        sigma in 0.0f64..1.0,
        z in 0.0f64..100.0,
        bump in 0.01f64..1.0,
    ) {
        let consts = ConfSetConstants::calibrated(0.1, z).unwrap();
        let base = ModelParams::new(30, 30, n, a, sigma, sigma).unwrap();
        let r0 = radius_sq(r_hat, k, &base, &consts).unwrap();
        prop_assert!(r0 >= 0.0);
        prop_assert!(radius_sq(r_hat + bump, k, &base, &consts).unwrap() >= r0);
        prop_assert!(radius_sq(r_hat, k + 1, &base, &consts).unwrap() >= r0);
        let bigger_a = ModelParams { a: a + bump, ..base };
        prop_assert!(radius_sq(r_hat, k, &bigger_a, &consts).unwrap() >= r0);
        let bigger_u = ModelParams { u: sigma + bump, ..base };
        prop_assert!(radius_sq(r_hat, k, &bigger_u, &consts).unwrap() >= r0);
        let wider = ModelParams { m2: 31, ..base };
        prop_assert!(radius_sq(r_hat, k, &wider, &consts).unwrap() >= r0);
        if r_hat >= 0.0 {
            let more = ModelParams { n: n + 1, ..base };
            prop_assert!(radius_sq(r_hat, k, &more, &consts).unwrap() <= r0);
        }
        let paper = consts.with_mode(Mode::Paper);
        if z <= paper.z {
            prop_assert!(radius_sq(r_hat, k, &base, &paper).unwrap() >= r0);
        }
    }
}
