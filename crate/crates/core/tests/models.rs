use evoeq::linalg::min_eig_sym;
use evoeq::material_law::{multiply, subspace_posdef_certificate, OperatorFamily};
use evoeq::models::kelvin_voigt::{
    build_kv_problem, default_forcing, neumann_tail_norm, schur_decompose, KelvinVoigtConfig, KvOperators,
};
use evoeq::models::mixed_type::{region_types, MixedTypeConfig, RegionType, Variant};
use evoeq::perturbation::{perturbed_residual, subspace_perturbed_solve, SubspaceSolveOptions};
use evoeq::weighted_time::{cutoff_complement, d0_apply, d0_inv, weighted_norm};
use evoeq::{Error, Perturbation, SubspaceProjector, TimeGrid, Trajectory, Weight};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = random_matrix(rng, d, d);
    &g * g.transpose() + DMatrix::identity(d, d)
}

fn bump(t: f64, lo: f64, hi: f64) -> f64 {
    if t <= lo || t >= hi {
        0.0
    } else {
        (std::f64::consts::PI * (t - lo) / (hi - lo)).sin().powi(2)
    }
}

fn coupled_cfg(seed: u64, cells: usize, time_dependent: bool) -> KelvinVoigtConfig<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = KelvinVoigtConfig::reference(cells, 1.0 / cells as f64);
    let c0 = random_spd(&mut rng, cells);
    let c1 = random_spd(&mut rng, cells) * 0.2;
    cfg.c = if time_dependent {
        OperatorFamily::from_fn(cells, move |t: f64| &c0 + &c1 * (1.0 + t.sin()))
    } else {
        OperatorFamily::constant(c0).unwrap()
    };
    let p = cfg.dim_v();
    cfg.b = OperatorFamily::constant(random_spd(&mut rng, p) + DMatrix::identity(p, p)).unwrap();
    cfg.coercivity = 0.5;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn schur_pieces_reassemble(seed in any::<u64>(), d in 2usize..8, split in 1usize..7) {
        let p = split.min(d - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_spd(&mut rng, d);
        let coords: Vec<usize> = (0..p).map(|j| (j * 2) % d).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let v = SubspaceProjector::from_coordinates(d, &coords).unwrap();
        let q = v.frame();
        let parts = schur_decompose(&c, &v).unwrap();
        prop_assert!((parts.reassemble().unwrap() - q.transpose() * &c * &q).amax() <= 1e-10);
        let inv = c.clone().try_inverse().unwrap();
        prop_assert!((parts.reassemble_inverse().unwrap() - q.transpose() * inv * &q).amax() <= 1e-10);
        prop_assert!(min_eig_sym(&parts.schur) > 0.0);
    }

    #[test]
    fn projector_resolves_identity(seed in any::<u64>(), d in 2usize..8, k in 1usize..7) {
        let k = k.min(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = SubspaceProjector::from_basis(&random_matrix(&mut rng, d, k)).unwrap();
        prop_assert!(v.resolution_defect() <= 1e-12);
        prop_assert!((v.basis().transpose() * v.basis() - DMatrix::identity(k, k)).amax() <= 1e-12);
    }
}

/// `(C + D∂₀)⁻¹T` by a direct sweep, `D = ι_V B ι_Vᵀ`.
fn direct_strain(cfg: &KelvinVoigtConfig<f64>, stress: &Trajectory<f64>) -> Trajectory<f64> {
    let g = *stress.grid();
    let iv = cfg.stress_projector().unwrap().basis().clone();
    let mut e = Trajectory::zeros(g, cfg.cells);
    let mut prev = DVector::zeros(cfg.cells);
    for k in 0..g.len() {
        let t = g.t(k);
        let d = &iv * cfg.b.at(t) * iv.transpose();
        let m = cfg.c.at(t) + &d / g.h();
        let ek = m.lu().solve(&(stress.sample(k) + &d * &prev / g.h())).unwrap();
        e.set_sample(k, &ek);
        prev = ek;
    }
    e
}

/// `‖∂₀(C + D∂₀)⁻¹T − (∂₀M̃₀ + M̃₁ + M̃̃∞)T‖_ρ` on the stress block.
fn material_law_defect(cfg: &KelvinVoigtConfig<f64>, n: usize) -> f64 {
    let m = cfg.cells;
    let g = TimeGrid::new(0.0, 3.0, n).unwrap();
    let w = Weight::new(4.0).unwrap();
    let stress = Trajectory::from_fn(g, m, |t| DVector::from_fn(m, |j, _| bump(t, 0.1 * j as f64 / m as f64, 2.5) * (1.0 + j as f64).sqrt()));
    let mut state = Trajectory::zeros(g, 2 * m);
    state.values_mut().rows_mut(m, m).copy_from(stress.values());
    let kv = build_kv_problem(cfg, w, Trajectory::zeros(g, 2 * m)).unwrap();
    let split = &(&d0_apply(&multiply(&kv.problem.m0, &state).unwrap()) + &multiply(&kv.problem.m1, &state).unwrap())
        + &kv.minf.apply(&state).unwrap();
    let direct = d0_apply(&direct_strain(cfg, &stress));
    weighted_norm(&(&split.components(m, m) - &direct), &w)
}

#[test]
fn split_material_law_is_exact_for_constant_coefficients() {
    let cfg = coupled_cfg(1, 6, false);
    assert!(material_law_defect(&cfg, 120) <= 1e-10);
}

#[test]
fn split_material_law_is_first_order_for_varying_coefficients() {
    let cfg = coupled_cfg(2, 6, true);
    let defects: Vec<f64> = [200, 400, 800].iter().map(|n| material_law_defect(&cfg, *n)).collect();
    for pair in defects.windows(2) {
        let r = pair[0] / pair[1];
        assert!((1.5..=3.0).contains(&r), "{defects:?}");
    }
}

#[test]
fn neumann_series_matches_resolvent() {
    let cfg = coupled_cfg(3, 6, true);
    let ops = KvOperators::new(&cfg).unwrap();
    let g = TimeGrid::new(0.0, 2.0, 200).unwrap();
    let p = cfg.dim_v();
    let y = Trajectory::from_fn(g, p, |t| DVector::from_fn(p, |j, _| bump(t, 0.1 * j as f64, 1.5)));
    let z = ops.viscous_resolvent(&y).unwrap();
    let w = d0_inv(&y.map_samples(p, |_, t, v| cfg.b.at(t).try_inverse().unwrap() * v));
    let exact = &z - &w;
    let by_tail = d0_inv(&ops.tail_apply(&y).unwrap());
    assert!((&by_tail - &exact).max_abs() <= 1e-12);
    let errs: Vec<f64> = [2, 6, 40].iter().map(|k| (&ops.neumann_partial(&y, *k).unwrap() - &exact).max_abs()).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] <= 1e-10, "{errs:?}");
}

#[test]
fn tail_norm_is_non_increasing_in_rho() {
    let cfg = KelvinVoigtConfig::reference(8, 0.125);
    let g = TimeGrid::new(0.0, 4.0, 512).unwrap();
    let tails: Vec<f64> = [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|rho| neumann_tail_norm(&cfg, &Weight::new(*rho).unwrap(), &g, 6, 0).unwrap())
        .collect();
    assert!(tails.windows(2).all(|p| p[1] <= p[0]), "{tails:?}");
    // Reference values: the tail is `−(1 + ∂₀)⁻¹`, with norm close to `1/(1 + ρ)`.
    for (t, rho) in tails.iter().zip([2.0, 4.0, 8.0, 16.0]) {
        assert!((t * (1.0 + rho) - 1.0).abs() < 0.15, "{tails:?}");
    }
}

#[test]
fn tail_norm_needs_a_contraction() {
    let cfg = KelvinVoigtConfig::reference(8, 0.125);
    let g = TimeGrid::new(0.0, 4.0, 64).unwrap();
    assert!(matches!(
        neumann_tail_norm(&cfg, &Weight::new(0.5).unwrap(), &g, 2, 0),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn subspace_constant_respects_viscosity_bound() {
    let mut cfg = KelvinVoigtConfig::reference(8, 0.125);
    cfg.b = OperatorFamily::constant(DMatrix::identity(4, 4) * 2.0).unwrap();
    let g = TimeGrid::new(0.0, 1.0, 32).unwrap();
    let kv = build_kv_problem(&cfg, Weight::new(4.0).unwrap(), default_forcing(&cfg, g)).unwrap();
    let cert = subspace_posdef_certificate(&kv.problem.m0, &kv.problem.m1, &kv.v, &g.times(), 1e-10).unwrap();
    assert!(cert.c0 >= cfg.coercivity / 4.0 - 1e-12);
}

#[test]
fn purely_viscous_material_has_no_elastic_block() {
    let mut cfg = KelvinVoigtConfig::reference(4, 0.25);
    cfg.viscous = vec![true; 4];
    cfg.b = OperatorFamily::constant(DMatrix::identity(4, 4) * 3.0).unwrap();
    let g = TimeGrid::new(0.0, 1.0, 16).unwrap();
    let kv = build_kv_problem(&cfg, Weight::new(4.0).unwrap(), default_forcing(&cfg, g)).unwrap();
    let m0 = kv.problem.m0.at(0.3);
    let m1 = kv.problem.m1.at(0.3);
    assert_eq!(m0.view((4, 4), (4, 4)).amax(), 0.0);
    assert!((m1.view((4, 4), (4, 4)) - DMatrix::identity(4, 4) / 3.0).amax() <= 1e-15);
}

#[test]
fn weak_viscosity_is_rejected_with_witness() {
    let mut cfg = KelvinVoigtConfig::reference(8, 0.125);
    cfg.b = OperatorFamily::from_fn(4, |t: f64| DMatrix::identity(4, 4) * (1.5 - t));
    let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
    match build_kv_problem(&cfg, Weight::new(4.0).unwrap(), default_forcing(&cfg, g)) {
        Err(Error::SubspaceCertificate { block, t, .. }) => {
            assert_eq!(block, "Re B");
            assert!(t > 0.5);
        }
        other => panic!("expected a coercivity failure, got {other:?}"),
    }
}

#[test]
fn kelvin_voigt_end_to_end() {
    let cfg = coupled_cfg(4, 8, true);
    let g = TimeGrid::new(0.0, 3.0, 240).unwrap();
    let f = default_forcing(&cfg, g);
    let tol = 1e-12;
    let opts = SubspaceSolveOptions::new(0.1, tol, 300);
    let kv = build_kv_problem(&cfg, Weight::new(4.0).unwrap(), f.clone()).unwrap();
    let r = subspace_perturbed_solve(&kv.problem, &kv.minf, &kv.v, &opts).unwrap();
    let q = kv.problem.with_weight(Weight::new(r.rho).unwrap());
    let residual = perturbed_residual(&q, &kv.minf, &r.u).unwrap();
    assert!(residual <= 10.0 * tol, "residual {residual:e}");
    assert!(r.u.max_abs() > 0.0);

    let a = 1.2;
    let late = build_kv_problem(&cfg, Weight::new(r.rho).unwrap(), cutoff_complement(&f, a)).unwrap();
    let rl = subspace_perturbed_solve(&late.problem, &late.minf, &late.v, &opts).unwrap();
    assert_eq!(rl.u.max_abs_up_to(a), 0.0);
}

#[test]
fn mixed_type_region_map() {
    let cfg = MixedTypeConfig::new(0.5, 2.0, 16, Variant::Nonautonomous).unwrap();
    assert!(region_types(&cfg, -0.5).iter().all(|r| *r == RegionType::Elliptic));
    let later = region_types(&cfg, 2.0);
    assert_eq!(later.first(), Some(&RegionType::Hyperbolic));
    assert!(later.contains(&RegionType::Parabolic) && later.contains(&RegionType::Elliptic));
    let auto = MixedTypeConfig { variant: Variant::Autonomous, ..cfg };
    assert_eq!(region_types(&auto, -0.5), later);
}
