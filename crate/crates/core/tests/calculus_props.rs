use evoeq::linalg::sym_part;
use evoeq::material_law::{derivative_at, posdef_certificate, OperatorFamily};
use evoeq::spatial_operator::{grad_1d_dirichlet, make_block_skew};
use evoeq::weighted_time::{
    cutoff, d0_apply, d0_inv, fourier_laplace, inverse_fourier_laplace, resolvent_eps, weighted_inner, weighted_norm,
};
use evoeq::{TimeGrid, Trajectory, Weight};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_traj(seed: u64, g: TimeGrid<f64>, dim: usize) -> Trajectory<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Trajectory::from_matrix(g, DMatrix::from_fn(dim, g.len(), |_, _| rng.random_range(-1.0..1.0))).unwrap()
}

fn grid(n: usize) -> TimeGrid<f64> {
    TimeGrid::new(-1.0, 2.0, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn causal_sweeps_keep_early_zeros(seed in any::<u64>(), n in 4usize..80, dim in 1usize..4, frac in 0.0f64..1.0, eps in 0.01f64..2.0) {
        let g = grid(n);
        let a = g.t_min() + frac * (g.t_max() - g.t_min());
        let u = random_traj(seed, g, dim);
        let late = &u - &cutoff(&u, a);
        prop_assert_eq!(cutoff(&d0_inv(&late), a).max_abs(), 0.0);
        prop_assert_eq!(cutoff(&resolvent_eps(&late, eps).unwrap(), a).max_abs(), 0.0);
    }

    #[test]
    fn d0_inverts_running_sum(seed in any::<u64>(), n in 2usize..80, dim in 1usize..4) {
        let u = random_traj(seed, grid(n), dim);
        prop_assert!((&d0_apply(&d0_inv(&u)) - &u).max_abs() <= 1e-12);
    }

    #[test]
    fn inner_product_is_positive_definite(seed in any::<u64>(), n in 2usize..60, rho in 0.1f64..5.0) {
        let w = Weight::new(rho).unwrap();
        let u = random_traj(seed, grid(n), 2);
        let v = random_traj(seed.wrapping_add(1), grid(n), 2);
        prop_assert!(weighted_inner(&u, &u, &w).unwrap() > 0.0);
        prop_assert_eq!(weighted_inner(&u.scaled(0.0), &u.scaled(0.0), &w).unwrap(), 0.0);
        let (uv, vu) = (weighted_inner(&u, &v, &w).unwrap(), weighted_inner(&v, &u, &w).unwrap());
        prop_assert!((uv - vu).abs() <= 1e-12 * (1.0 + uv.abs()));
        prop_assert!(uv.abs() <= weighted_norm(&u, &w) * weighted_norm(&v, &w) * (1.0 + 1e-12));
    }

    #[test]
    fn fourier_laplace_round_trip(seed in any::<u64>(), n in 2usize..200, rho in 0.1f64..3.0) {
        let w = Weight::new(rho).unwrap();
        let u = random_traj(seed, grid(n), 2);
        let back = inverse_fourier_laplace(&fourier_laplace(&u, &w));
        prop_assert!((&back - &u).max_abs() <= 1e-10);
    }

    #[test]
    fn skew_forms_vanish(seed in any::<u64>(), m in 2usize..20) {
        let a = make_block_skew(&grad_1d_dirichlet(m, 0.1f64).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DVector::from_fn(2 * m, |_, _| rng.random_range(-1.0..1.0));
        let form = u.dot(&(a.matrix() * &u));
        prop_assert!(form.abs() <= 1e-12 * (a.matrix() * &u).norm() * u.norm());
        prop_assert!(a.eigenvalues().iter().all(|z| z.re.abs() <= 1e-9));
    }

    #[test]
    fn derivative_of_selfadjoint_family_is_selfadjoint(seed in any::<u64>(), t in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let (b, c) = (sym_part(&b), sym_part(&c));
        let fam = OperatorFamily::from_fn(3, move |t: f64| &b + &c * (t * t).sin());
        let d = derivative_at(&fam, t);
        prop_assert!((&d - d.transpose()).amax() <= 1e-10);
    }

    #[test]
    fn certificate_is_monotone_in_rho(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let m0 = OperatorFamily::constant(&g * g.transpose()).unwrap();
        let m1 = OperatorFamily::constant(DMatrix::identity(3, 3) + DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.3..0.3))).unwrap();
        let ts: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let mut prev = f64::NEG_INFINITY;
        for rho in [1.0, 2.0, 4.0, 8.0] {
            let c0 = posdef_certificate(&m0, &m1, &[rho], &ts, 1e-10).unwrap().c0;
            prop_assert!(c0 >= prev - 1e-12);
            prev = c0;
        }
    }
}

#[test]
fn d0_inv_norm_over_random_compact_signals() {
    let rho = 1.0;
    let w = Weight::new(rho).unwrap();
    let mut worst = Vec::new();
    for n in [400, 800, 1600] {
        let g = TimeGrid::new(0.0, 40.0, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut best = 0.0f64;
        for _ in 0..200 {
            let lo = rng.random_range(0.0..10.0);
            let len = rng.random_range(2.0..25.0);
            let freq = rng.random_range(0.0..0.3);
            let u = Trajectory::from_scalar_fn(g, |t| {
                if t <= lo || t >= lo + len {
                    0.0
                } else {
                    (std::f64::consts::PI * (t - lo) / len).sin().powi(2) * (freq * t).cos() * (rho * t).exp()
                }
            });
            best = best.max(weighted_norm(&d0_inv(&u), &w) / weighted_norm(&u, &w));
        }
        worst.push(best * rho);
    }
    assert!(worst.iter().all(|x| *x <= 1.05), "{worst:?}");
    assert!((worst[2] - 1.0).abs() < 0.05, "{worst:?}");
}
