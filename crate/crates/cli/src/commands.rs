//! The subcommands. Each writes its artifacts through [`Output`] and returns the failure class.

use std::thread;

use evoeq::evo_solver::{
    apply_adjoint_operator, apply_operator, default_cuts, energy_identity_residual, oracle_dense_solve, solve,
    verify_causality, verify_norm_bound, Stepper, DEFAULT_BOUND_SLACK, ORACLE_LIMIT,
};
use evoeq::material_law::{
    default_rho_grid, posdef_certificate, posdef_profile, subspace_posdef_certificate, DEFAULT_TOL,
};
use evoeq::models::kelvin_voigt::{neumann_tail_norm, KelvinVoigtConfig, KvOperators, KvProblem};
use evoeq::models::mixed_type::{case_minima, region_types, MixedTypeConfig};
use evoeq::perturbation::{
    fixed_point_solve, random_trajectory, subspace_coercivity, subspace_perturbed_solve, IterationRecord,
    SubspaceSolveOptions,
};
use evoeq::weighted_time::{cutoff_complement, weighted_inner, weighted_norm};
use evoeq::{EvoProblem64, TimeGrid64, Trajectory64, Weight64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Built, CheckKind, RunConfig};
use crate::error::{classify, CliError};
use crate::output::{num, opt_num, Output};

/// Settings shared by every command.
pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub seed: u64,
    pub emit_plot_data: bool,
}

fn weight(rho: f64) -> Result<Weight64, CliError> {
    Weight64::new(rho).map_err(|e| CliError::Config(format!("weight: {e}")))
}

fn certificate_err(e: evoeq::Error) -> CliError {
    match classify(e) {
        CliError::Solve(m) => CliError::Certificate(m),
        other => other,
    }
}

/// The unperturbed system of the config at `rho` on `grid`.
fn base_problem(cfg: &RunConfig, rho: f64, grid: TimeGrid64) -> Result<EvoProblem64, CliError> {
    Ok(match cfg.build(rho, grid)? {
        Built::Plain { problem, .. } => problem,
        Built::KelvinVoigt { kv, .. } => kv.problem,
    })
}

fn iteration_rows(log: &[IterationRecord<f64>]) -> Vec<Vec<String>> {
    log.iter()
        .map(|r| vec![r.iter.to_string(), num(r.delta_norm), opt_num(r.ratio)])
        .collect()
}

fn write_iterations(out: &Output, log: &[IterationRecord<f64>]) -> Result<(), CliError> {
    out.table("iterations.csv", &["iter", "delta_norm", "ratio"], &iteration_rows(log))
}

fn plot_norms(out: &Output, u: &Trajectory64, f: &Trajectory64, w: &Weight64) -> Result<(), CliError> {
    let g = *u.grid();
    let (nu, nf) = (u.pointwise_norms(), f.pointwise_norms());
    let rows: Vec<Vec<String>> = (0..g.len())
        .map(|k| {
            let t = g.t(k);
            vec![num(t), num(nu[k]), num(nf[k]), num(nu[k] * (-w.rho() * t).exp())]
        })
        .collect();
    out.table("plot_norms.csv", &["t", "norm_u", "norm_f", "weighted_norm_u"], &rows)
}

fn region_map(out: &Output, mt: &MixedTypeConfig<f64>, grid: &TimeGrid64) -> Result<(), CliError> {
    let xs = mt.centers();
    let mut rows = Vec::new();
    let mut k = 0usize;
    loop {
        let t = grid.t_min() + 0.25 * k as f64;
        if t > grid.t_max() + 1e-12 {
            break;
        }
        for (x, r) in xs.iter().zip(region_types(mt, t)) {
            rows.push(vec![num(t), num(*x), r.letter().to_string()]);
        }
        k += 1;
    }
    out.table("region_map.csv", &["t", "x", "type"], &rows)
}

fn argmin(values: &[f64]) -> usize {
    let mut k = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[k] {
            k = i;
        }
    }
    k
}

/// Lower bounds of the mixed-type nonautonomous example on `t ≤ 0`, `0 < t ≤ 1`, `t > 1`.
fn case_bounds(rho: f64) -> [f64; 3] {
    [1.0, 0.5, rho.min(1.0)]
}

/// Per-case minima at `rho`; returns whether all bounds hold.
fn report_cases(out: &mut Output, problem: &EvoProblem64, rho: f64, ts: &[f64], prefix: &str) -> Result<bool, CliError> {
    let profile = posdef_profile(&problem.m0, &problem.m1, rho, ts).map_err(classify)?;
    let cm = case_minima(&profile, ts);
    let mut ok = true;
    for ((label, value), bound) in [("t<=0", cm.before), ("0<t<=1", cm.ramp), ("t>1", cm.after)]
        .into_iter()
        .zip(case_bounds(rho))
    {
        let key = match label {
            "t<=0" => "before",
            "0<t<=1" => "ramp",
            _ => "after",
        };
        match value {
            Some(v) => {
                let pass = v >= bound - 1e-10;
                ok &= pass;
                out.line(format!(
                    "  rho = {rho}: case {label}: min eigenvalue {} (bound {bound}) {}",
                    num(v),
                    if pass { "ok" } else { "VIOLATED" }
                ));
                out.key(&format!("{prefix}case_{key}"), num(v));
                out.key(&format!("{prefix}case_{key}_bound"), num(bound));
            }
            None => out.line(format!("  rho = {rho}: case {label}: no samples")),
        }
    }
    Ok(ok)
}

pub fn check(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let grid = cfg.grid()?;
    let rho = cfg.weight.rho;
    let ts = grid.times();
    out.key("command", "check");
    out.key("model", cfg.model_name());
    out.key("rho", num(rho));
    out.line(format!("certificate check: model {}, rho = {rho}, {} time samples", cfg.model_name(), ts.len()));
    match cfg.build(rho, grid).map_err(|e| match e {
        CliError::Solve(m) => CliError::Certificate(m),
        other => other,
    })? {
        Built::Plain { problem, .. } => {
            let mut rhos = default_rho_grid::<f64>();
            rhos.push(rho);
            rhos.extend(&cfg.weight.sweep);
            let cert = posdef_certificate(&problem.m0, &problem.m1, &rhos, &ts, DEFAULT_TOL).map_err(certificate_err)?;
            for s in &cert.sweep {
                out.line(format!(
                    "  rho = {}: min eigenvalue {} at t = {}",
                    s.rho,
                    num(s.min_eigenvalue),
                    num(s.worst_t)
                ));
            }
            let k = argmin(&cert.witness);
            out.line(format!("rho0 = {}", cert.rho0));
            out.line(format!("c0 = {}", num(cert.c0)));
            out.line(format!(
                "worst witness at rho0: min eigenvalue {} at t = {}",
                num(cert.witness[k]),
                num(cert.t_samples[k])
            ));
            out.key("rho0", num(cert.rho0));
            out.key("c0", num(cert.c0));
            out.key("witness_t", num(cert.t_samples[k]));
            out.key("witness_min_eigenvalue", num(cert.witness[k]));
            let profile = posdef_profile(&problem.m0, &problem.m1, rho, &ts).map_err(classify)?;
            let j = argmin(&profile);
            out.line(format!(
                "at the configured rho = {rho}: c0 = {} (worst t = {})",
                num(profile[j]),
                num(ts[j])
            ));
            out.key("c0_at_rho", num(profile[j]));
            out.key("worst_t_at_rho", num(ts[j]));
            if cfg.mixed_type()?.is_some() {
                out.line("case bounds:");
                let ok = report_cases(out, &problem, rho, &ts, "")?;
                out.key("case_bounds", if ok { "ok" } else { "violated" });
                if !ok {
                    return Err(CliError::Certificate(format!("a case bound fails at rho = {rho}")));
                }
            }
            if !(profile[j] > DEFAULT_TOL) {
                return Err(CliError::Certificate(format!(
                    "the configured rho = {rho} is not certified: min eigenvalue {:e} at t = {}",
                    profile[j], ts[j]
                )));
            }
        }
        Built::KelvinVoigt { kv, .. } => {
            let sc = subspace_posdef_certificate(&kv.problem.m0, &kv.problem.m1, &kv.v, &ts, DEFAULT_TOL)
                .map_err(certificate_err)?;
            let w = weight(rho)?;
            let coerc = subspace_coercivity(&kv.problem, &kv.minf, &kv.v, cfg.solver.eps_margin, rho).map_err(classify)?;
            let q = kv.minf.contraction_factor(&w);
            out.line(format!("c0 (M1 on V) = {}", num(sc.c0)));
            out.line(format!("c1 (M0 on the complement) = {}", opt_num(sc.c1)));
            out.line(format!("Neumann contraction factor at rho = {rho}: {}", num(q)));
            out.line(format!(
                "split coercivity at rho = {rho}: q_perp = {}, coupling = {}, |Minf| <= {}, constant = {}",
                num(coerc.q_perp),
                num(coerc.coupling),
                num(coerc.m_norm),
                num(coerc.constant)
            ));
            out.key("c0", num(sc.c0));
            out.key("c1", opt_num(sc.c1));
            out.key("contraction_factor", num(q));
            out.key("coercivity_constant", num(coerc.constant));
        }
    }
    out.key("status", "ok");
    Ok(())
}

pub fn solve_cmd(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let grid = cfg.grid()?;
    let rho = cfg.weight.rho;
    let w = weight(rho)?;
    out.key("command", "solve");
    out.key("model", cfg.model_name());
    out.key("rho", num(rho));
    out.key("steps", grid.n());
    out.line(format!("solve: model {}, rho = {rho}, {} steps of h = {}", cfg.model_name(), grid.n(), grid.h()));
    let (u, forcing) = match cfg.build(rho, grid)? {
        Built::Plain { problem, perturbation } => {
            let cert = posdef_certificate(&problem.m0, &problem.m1, &[rho], &grid.times(), DEFAULT_TOL)
                .map_err(certificate_err)?;
            let p = problem.with_certificate(cert).map_err(classify)?;
            out.key("c0", num(p.cert.as_ref().map_or(f64::NAN, |c| c.c0)));
            match perturbation {
                None => {
                    let r = solve(&p).map_err(classify)?;
                    out.line(format!("|u| = {}, |F| = {}, c0 = {}", num(r.norm_u), num(r.norm_f), num(r.c0)));
                    out.line(format!("bound ratio |u| c0/|F| = {}", num(r.bound_ratio)));
                    out.line(format!("causality defect = {}", num(r.causality_defect)));
                    for (a, res) in &r.energy_residuals {
                        out.line(format!("energy residual at a = {}: {}", num(*a), num(*res)));
                    }
                    out.key("norm_u", num(r.norm_u));
                    out.key("norm_f", num(r.norm_f));
                    out.key("bound_ratio", num(r.bound_ratio));
                    out.key("causality_defect", num(r.causality_defect));
                    (r.u, p.forcing)
                }
                Some(minf) => {
                    let r = fixed_point_solve(&p, minf.as_ref(), cfg.solver.tol, cfg.solver.max_iter).map_err(classify)?;
                    write_iterations(out, &r.log)?;
                    out.line(format!("perturbation {}: |Minf| <= {}", minf.name(), num(r.norm_estimate)));
                    out.line(format!(
                        "fixed point: {} iterations, contraction ratio {}, residual {}",
                        r.iters,
                        num(r.ratio),
                        num(r.residual)
                    ));
                    out.key("perturbation", minf.name());
                    out.key("norm_estimate", num(r.norm_estimate));
                    out.key("iterations", r.iters);
                    out.key("contraction_ratio", num(r.ratio));
                    out.key("residual", num(r.residual));
                    out.key("norm_u", num(weighted_norm(&r.u, &w)));
                    (r.u, p.forcing)
                }
            }
        }
        Built::KelvinVoigt { kv, .. } => {
            let r = kv_solve(ctx, &kv, false)?;
            write_iterations(out, &r.log)?;
            out.line(format!(
                "subspace fixed point at rho = {}: {} iterations, contraction ratio {}, residual {}",
                r.rho,
                r.iters,
                num(r.ratio),
                num(r.residual)
            ));
            for (rs, why) in &r.skipped {
                out.line(format!("  skipped rho = {rs}: {why}"));
            }
            out.key("rho_used", num(r.rho));
            out.key("iterations", r.iters);
            out.key("contraction_ratio", num(r.ratio));
            out.key("residual", num(r.residual));
            out.key("c0", num(r.certificate.c0));
            (r.u, kv.problem.forcing.clone())
        }
    };
    out.trajectory("solution.csv", &u)?;
    if ctx.emit_plot_data {
        plot_norms(out, &u, &forcing, &w)?;
        if let Some(mt) = cfg.mixed_type()? {
            region_map(out, &mt, &grid)?;
        }
    }
    out.key("status", "ok");
    Ok(())
}

fn kv_options(ctx: &Ctx, walk: bool) -> SubspaceSolveOptions<f64> {
    let s = &ctx.cfg.solver;
    let mut opts = SubspaceSolveOptions::new(s.eps_margin, s.tol, s.max_iter);
    opts.seed = ctx.seed;
    if !walk {
        opts.rho_grid.clear();
    }
    opts
}

fn kv_solve(
    ctx: &Ctx,
    kv: &KvProblem<f64>,
    fixed_rho: bool,
) -> Result<evoeq::perturbation::SubspaceSolveReport<f64>, CliError> {
    subspace_perturbed_solve(&kv.problem, &kv.minf, &kv.v, &kv_options(ctx, !fixed_rho)).map_err(classify)
}

struct CheckRow {
    name: &'static str,
    measured: f64,
    threshold: String,
    pass: bool,
    detail: String,
}

impl CheckRow {
    fn failed(name: &'static str, threshold: &str, e: CliError) -> Self {
        Self {
            name,
            measured: f64::NAN,
            threshold: threshold.into(),
            pass: false,
            detail: e.to_string(),
        }
    }
}

const CAUSALITY_TOL: f64 = 1e-12;
const ADJOINT_TOL: f64 = 1e-10;
const ORACLE_TOL: f64 = 1e-10;
/// Residual reduction per halving for an observed order between one and two.
const ENERGY_RANGE: (f64, f64) = (1.5, 4.5);
/// Unknowns of the dense oracle run by `verify`; the library accepts up to [`ORACLE_LIMIT`].
const ORACLE_BUDGET: usize = ORACLE_LIMIT / 4;

fn check_causality(p: &EvoProblem64, seed: u64) -> Result<CheckRow, CliError> {
    let g = *p.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let trials = 5;
    for _ in 0..trials {
        let a = g.t_min() + rng.random_range(0.05..0.95) * (g.t_max() - g.t_min());
        let f = random_trajectory(&g, p.dim(), &mut rng);
        let q = p.with_forcing(f).map_err(classify)?;
        worst = worst.max(verify_causality(&q, a).map_err(classify)?);
    }
    Ok(CheckRow {
        name: "causality",
        measured: worst,
        threshold: format!("<= {CAUSALITY_TOL:e}"),
        pass: worst <= CAUSALITY_TOL,
        detail: format!("max |u(t)| on t <= a with F = 0 there, {trials} seeded cut times"),
    })
}

fn check_norm_bound(p: &EvoProblem64) -> Result<CheckRow, CliError> {
    let cert = p.certificate().map_err(certificate_err)?;
    let r = solve(&p.clone().with_certificate(cert.clone()).map_err(classify)?).map_err(classify)?;
    let c = verify_norm_bound(&r, &cert, DEFAULT_BOUND_SLACK);
    Ok(CheckRow {
        name: "norm_bound",
        measured: c.ratio,
        threshold: format!("<= {}", c.limit),
        pass: c.ok,
        detail: format!("|u| c0/|F| with c0 = {:e}", cert.c0),
    })
}

fn check_energy(cfg: &RunConfig, rho: f64, grid: TimeGrid64) -> Result<CheckRow, CliError> {
    let cuts = default_cuts(&grid);
    let mut residuals: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut g = grid;
    for _ in 0..3 {
        let p = base_problem(cfg, rho, g)?;
        p.certificate().map_err(certificate_err)?;
        let u = Stepper::new(&p)
            .and_then(|s| s.march(&p.forcing))
            .map_err(classify)?;
        let row = cuts
            .iter()
            .map(|a| energy_identity_residual(&p, &u, *a).map(|b| (b.residual, b.lhs.abs())))
            .collect::<evoeq::Result<Vec<_>>>()
            .map_err(classify)?;
        residuals.push(row);
        g = g.refined();
    }
    let (lo, hi) = ENERGY_RANGE;
    let mut worst: Option<f64> = None;
    let mut pass = true;
    let mut ratios = Vec::new();
    for j in 0..cuts.len() {
        for pair in residuals.windows(2) {
            let (r0, s0) = pair[0][j];
            let (r1, _) = pair[1][j];
            let floor = 1e-11 * (1.0 + s0);
            if r0 <= floor && r1 <= floor {
                continue;
            }
            let ratio = r0 / r1;
            ratios.push(ratio);
            let inside = (lo..=hi).contains(&ratio);
            pass &= inside;
            let dist = |x: f64| if x < lo { lo - x } else if x > hi { x - hi } else { 0.0 };
            if worst.is_none_or(|w| dist(ratio) > dist(w) || (dist(w) == 0.0 && dist(ratio) == 0.0 && ratio < w)) {
                worst = Some(ratio);
            }
        }
    }
    let detail = if ratios.is_empty() {
        "residuals at round-off on every grid".to_string()
    } else {
        let list: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
        format!("residual ratios under two halvings at {} cuts: {}", cuts.len(), list.join(" "))
    };
    Ok(CheckRow {
        name: "energy",
        measured: worst.unwrap_or(f64::NAN),
        threshold: format!("in [{lo}, {hi}]"),
        pass,
        detail,
    })
}

fn check_adjoint(p: &EvoProblem64, seed: u64) -> Result<CheckRow, CliError> {
    let g = *p.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst = 0.0f64;
    let pairs = 3;
    for _ in 0..pairs {
        let u = random_trajectory(&g, p.dim(), &mut rng);
        let v = random_trajectory(&g, p.dim(), &mut rng);
        let bu = apply_operator(p, &u).map_err(classify)?;
        let bsv = apply_adjoint_operator(p, &v).map_err(classify)?;
        let lhs = weighted_inner(&bu, &v, &p.weight).map_err(classify)?;
        let rhs = weighted_inner(&u, &bsv, &p.weight).map_err(classify)?;
        let scale = weighted_norm(&bu, &p.weight) * weighted_norm(&v, &p.weight);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(CheckRow {
        name: "adjoint",
        measured: worst,
        threshold: format!("<= {ADJOINT_TOL:e}"),
        pass: worst <= ADJOINT_TOL,
        detail: format!("|<Bu,v> - <u,B*v>| / (|Bu| |v|) over {pairs} seeded pairs"),
    })
}

fn check_oracle(p: &EvoProblem64) -> Result<CheckRow, CliError> {
    let g = *p.grid();
    let d = p.dim();
    let steps = (ORACLE_BUDGET / d).saturating_sub(1).min(g.n());
    if steps == 0 {
        return Ok(CheckRow {
            name: "oracle",
            measured: f64::NAN,
            threshold: format!("<= {ORACLE_TOL:e}"),
            pass: true,
            detail: format!("skipped: state dimension {d} exceeds the dense-oracle budget {ORACLE_BUDGET}"),
        });
    }
    // The scheme is causal, so the first `steps` steps form a problem of their own.
    let pg = TimeGrid64::new(g.t_min(), g.t(steps), steps).map_err(classify)?;
    let f = Trajectory64::from_matrix(pg, p.forcing.values().columns(0, steps + 1).into_owned()).map_err(classify)?;
    let prefix = EvoProblem64::new(p.m0.clone(), p.m1.clone(), p.a.clone(), f, p.weight).map_err(classify)?;
    let oracle = oracle_dense_solve(&prefix).map_err(classify)?;
    let full = Stepper::new(p).and_then(|s| s.march(&p.forcing)).map_err(classify)?;
    let head = Trajectory64::from_matrix(pg, full.values().columns(0, steps + 1).into_owned()).map_err(classify)?;
    let diff = (&head - &oracle).max_abs() / (1.0 + oracle.max_abs());
    Ok(CheckRow {
        name: "oracle",
        measured: diff,
        threshold: format!("<= {ORACLE_TOL:e}"),
        pass: diff <= ORACLE_TOL,
        detail: format!("time marching vs dense space-time solve on the first {steps} of {} steps", g.n()),
    })
}

pub fn verify(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let grid = cfg.grid()?;
    let rho = cfg.weight.rho;
    out.key("command", "verify");
    out.key("model", cfg.model_name());
    out.key("rho", num(rho));
    out.key("seed", ctx.seed);
    let checks = &cfg.verify.checks;
    out.line(format!("verification suite: {} checks, model {}, rho = {rho}", checks.len(), cfg.model_name()));
    let mut rows = Vec::new();
    if !checks.is_empty() {
        let p = base_problem(cfg, rho, grid)?;
        if matches!(cfg.problem, crate::config::ProblemSpec::KelvinVoigt(_)) {
            out.line("checks run on the reduced system without the remainder term");
        }
        for kind in checks {
            let threshold = match kind {
                CheckKind::Energy => format!("in [{}, {}]", ENERGY_RANGE.0, ENERGY_RANGE.1),
                _ => String::new(),
            };
            let row = match kind {
                CheckKind::Causality => check_causality(&p, ctx.seed),
                CheckKind::NormBound => check_norm_bound(&p),
                CheckKind::Energy => check_energy(cfg, rho, grid),
                CheckKind::Adjoint => check_adjoint(&p, ctx.seed),
                CheckKind::Oracle => check_oracle(&p),
            }
            .unwrap_or_else(|e| CheckRow::failed(kind.name(), &threshold, e));
            rows.push(row);
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.to_string(),
                num(r.measured),
                r.threshold.clone(),
                if r.pass { "pass" } else { "fail" }.to_string(),
                r.detail.clone(),
            ]
        })
        .collect();
    out.table("verify.csv", &["check", "measured", "threshold", "result", "detail"], &table)?;
    for r in &rows {
        out.line(format!(
            "{:<11} {:<5} measured {} threshold {} ({})",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            num(r.measured),
            r.threshold,
            r.detail
        ));
        out.key(&format!("check_{}", r.name), if r.pass { "pass" } else { "fail" });
        out.key(&format!("check_{}_measured", r.name), num(r.measured));
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.name).collect();
    out.key("checks_run", rows.len());
    out.key("checks_failed", failed.len());
    if failed.is_empty() {
        out.key("status", "ok");
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Default)]
struct SweepRow {
    rho: f64,
    c0: Option<f64>,
    bound_ratio: Option<f64>,
    tail_norm: Option<f64>,
    contraction_ratio: Option<f64>,
    status: String,
}

fn sweep_plain(cfg: &RunConfig, rho: f64, grid: TimeGrid64, row: &mut SweepRow) -> Result<(), CliError> {
    let Built::Plain { problem, perturbation } = cfg.build(rho, grid)? else {
        unreachable!("plain model");
    };
    let cert =
        posdef_certificate(&problem.m0, &problem.m1, &[rho], &grid.times(), DEFAULT_TOL).map_err(certificate_err)?;
    row.c0 = Some(cert.c0);
    let p = problem.with_certificate(cert).map_err(classify)?;
    row.bound_ratio = Some(solve(&p).map_err(classify)?.bound_ratio);
    if let Some(minf) = perturbation {
        row.tail_norm = Some(minf.norm_estimate(&p.weight));
        let r = fixed_point_solve(&p, minf.as_ref(), cfg.solver.tol, cfg.solver.max_iter).map_err(classify)?;
        row.contraction_ratio = Some(r.ratio);
    }
    Ok(())
}

fn sweep_kv(ctx: &Ctx, rho: f64, grid: TimeGrid64, row: &mut SweepRow) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let Built::KelvinVoigt { kv, cfg: kc } = cfg.build(rho, grid)? else {
        unreachable!("kelvin-voigt model");
    };
    let coerc = subspace_coercivity(&kv.problem, &kv.minf, &kv.v, cfg.solver.eps_margin, rho).map_err(classify)?;
    row.c0 = Some(coerc.constant);
    row.tail_norm = Some(
        neumann_tail_norm(&kc, &kv.problem.weight, &grid, cfg.solver.tail_probes, ctx.seed).map_err(classify)?,
    );
    let r = kv_solve(ctx, &kv, true)?;
    row.contraction_ratio = Some(r.ratio);
    let w = &kv.problem.weight;
    let nf = weighted_norm(&kv.problem.forcing, w);
    if nf > 0.0 {
        row.bound_ratio = Some(weighted_norm(&r.u, w) * coerc.constant / nf);
    }
    Ok(())
}

/// `Some(true)` if every consecutive pair satisfies `ok`, `None` with fewer than two values.
fn trend(values: &[(f64, Option<f64>)], ok: impl Fn(f64, f64) -> bool) -> Option<bool> {
    let present: Vec<f64> = values.iter().filter_map(|(_, v)| *v).collect();
    (present.len() >= 2).then(|| present.windows(2).all(|w| ok(w[0], w[1])))
}

fn yes_no(x: Option<bool>) -> &'static str {
    match x {
        Some(true) => "yes",
        Some(false) => "no",
        None => "n/a",
    }
}

pub fn sweep_rho(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let mut rhos = cfg.weight.sweep.clone();
    rhos.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    rhos.dedup();
    if rhos.len() < 2 {
        return Err(CliError::Config(format!(
            "precondition: sweep-rho needs at least 2 distinct values in weight.sweep, got {}",
            rhos.len()
        )));
    }
    let grid = cfg.grid()?;
    out.key("command", "sweep-rho");
    out.key("model", cfg.model_name());
    out.key("steps", grid.n());
    out.line(format!("weight sweep: model {}, {} values of rho, {} steps", cfg.model_name(), rhos.len(), grid.n()));
    let kv = matches!(cfg.problem, crate::config::ProblemSpec::KelvinVoigt(_));
    let rows: Vec<SweepRow> = thread::scope(|s| {
        let handles: Vec<_> = rhos
            .iter()
            .map(|&rho| {
                s.spawn(move || {
                    let mut row = SweepRow {
                        rho,
                        ..SweepRow::default()
                    };
                    let res = if kv {
                        sweep_kv(ctx, rho, grid, &mut row)
                    } else {
                        sweep_plain(cfg, rho, grid, &mut row)
                    };
                    row.status = match res {
                        Ok(()) => "ok".into(),
                        Err(e) => format!("{}: {e}", e.kind()),
                    };
                    row
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep row panicked")).collect()
    });
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.rho),
                opt_num(r.c0),
                opt_num(r.bound_ratio),
                opt_num(r.tail_norm),
                opt_num(r.contraction_ratio),
                r.status.clone(),
            ]
        })
        .collect();
    out.table(
        "sweep.csv",
        &["rho", "c0", "bound_ratio", "tail_norm", "contraction_ratio", "status"],
        &table,
    )?;
    for r in &rows {
        out.line(format!(
            "rho = {}: c0 = {}, bound_ratio = {}, tail_norm = {}, contraction_ratio = {} [{}]",
            r.rho,
            opt_num(r.c0),
            opt_num(r.bound_ratio),
            opt_num(r.tail_norm),
            opt_num(r.contraction_ratio),
            r.status
        ));
    }
    let col = |f: fn(&SweepRow) -> Option<f64>| -> Vec<(f64, Option<f64>)> { rows.iter().map(|r| (r.rho, f(r))).collect() };
    let c0_up = trend(&col(|r| r.c0), |a, b| b >= a);
    let contraction_down = trend(&col(|r| r.contraction_ratio), |a, b| b < a);
    let tail_down = trend(&col(|r| r.tail_norm), |a, b| b <= a);
    let tails: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.tail_norm.map(|t| (r.rho, t))).collect();
    let reductions: Vec<f64> = tails
        .windows(2)
        .filter(|w| (w[1].0 / w[0].0 - 2.0).abs() < 1e-12)
        .map(|w| w[0].1 / w[1].1)
        .collect();
    let halves = (!reductions.is_empty()).then(|| reductions.iter().all(|r| *r >= 2.0));
    out.line(format!("c0 non-decreasing in rho: {}", yes_no(c0_up)));
    out.line(format!("contraction_ratio strictly decreasing in rho: {}", yes_no(contraction_down)));
    out.line(format!("tail_norm non-increasing in rho: {}", yes_no(tail_down)));
    let red: Vec<String> = reductions.iter().map(|r| format!("{r:.4}")).collect();
    out.line(format!(
        "tail_norm at least halves per rho doubling: {} (reductions: {})",
        yes_no(halves),
        if red.is_empty() { "none".into() } else { red.join(" ") }
    ));
    out.key("rows", rows.len());
    out.key("rows_failed", rows.iter().filter(|r| r.status != "ok").count());
    out.key("c0_non_decreasing", yes_no(c0_up));
    out.key("contraction_ratio_decreasing", yes_no(contraction_down));
    out.key("tail_norm_non_increasing", yes_no(tail_down));
    out.key("tail_norm_halves_per_doubling", yes_no(halves));
    out.key("status", "ok");
    Ok(())
}

pub fn example_mixed_type(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let Some(mt) = cfg.mixed_type()? else {
        return Err(CliError::Config("example mixed-type needs problem.model = \"mixed-type\"".into()));
    };
    let grid = cfg.grid()?;
    let rho = cfg.weight.rho;
    out.key("command", "example mixed-type");
    out.key("cells", mt.cells);
    out.key("rho", num(rho));
    out.line(format!(
        "mixed-type example: {} cells on [-{L}, {L}], epsilon = {}, grid [{}, {}] with {} steps",
        mt.cells,
        mt.epsilon,
        grid.t_min(),
        grid.t_max(),
        grid.n(),
        L = mt.half_length
    ));
    let samples = TimeGrid64::new(grid.t_min(), grid.t_max(), 199).map_err(classify)?.times();
    let problem = base_problem(cfg, rho, grid)?;
    let mut ok = true;
    let mut case_rows = Vec::new();
    out.line(format!("per-case minima of the certificate profile on {} samples:", samples.len()));
    for r in [0.5, 1.0, 2.0] {
        let prefix = format!("rho_{r}_");
        ok &= report_cases(out, &problem, r, &samples, &prefix)?;
        let profile = posdef_profile(&problem.m0, &problem.m1, r, &samples).map_err(classify)?;
        let cm = case_minima(&profile, &samples);
        for ((label, v), bound) in [("t<=0", cm.before), ("0<t<=1", cm.ramp), ("t>1", cm.after)]
            .into_iter()
            .zip(case_bounds(r))
        {
            let pass = v.is_some_and(|v| v >= bound - 1e-10);
            case_rows.push(vec![
                num(r),
                label.to_string(),
                opt_num(v),
                num(bound),
                if pass { "pass" } else { "fail" }.to_string(),
            ]);
        }
    }
    out.table("cases.csv", &["rho", "case", "minimum", "bound", "result"], &case_rows)?;
    out.key("case_bounds", if ok { "ok" } else { "violated" });
    region_map(out, &mt, &grid)?;
    let cert = posdef_certificate(&problem.m0, &problem.m1, &[rho], &grid.times(), DEFAULT_TOL).map_err(certificate_err)?;
    let p = problem.with_certificate(cert).map_err(classify)?;
    let r = solve(&p).map_err(classify)?;
    out.line(format!(
        "solve at rho = {rho}: |u| = {}, |F| = {}, c0 = {}, bound ratio {}",
        num(r.norm_u),
        num(r.norm_f),
        num(r.c0),
        num(r.bound_ratio)
    ));
    out.line(format!("causality defect = {}", num(r.causality_defect)));
    out.key("c0", num(r.c0));
    out.key("bound_ratio", num(r.bound_ratio));
    out.key("causality_defect", num(r.causality_defect));
    out.trajectory("solution.csv", &r.u)?;
    if ctx.emit_plot_data {
        plot_norms(out, &r.u, &p.forcing, &p.weight)?;
    }
    if !ok {
        return Err(CliError::Certificate("a case bound of the certificate is violated".into()));
    }
    out.key("status", "ok");
    Ok(())
}

/// Largest relative defect of the Schur reassembly `Qᵀ C Q` over the grid.
fn schur_defect(kc: &KelvinVoigtConfig<f64>, ts: &[f64]) -> Result<f64, CliError> {
    let ops = KvOperators::new(kc).map_err(classify)?;
    let q = ops.frame().frame();
    let mut worst = 0.0f64;
    for &t in ts {
        let parts = ops.schur_at(t).map_err(classify)?;
        let target = q.transpose() * kc.c.at(t) * &q;
        let back = parts.reassemble().map_err(classify)?;
        worst = worst.max((back - &target).amax() / target.amax().max(1.0));
    }
    Ok(worst)
}

pub fn example_kelvin_voigt(ctx: &Ctx, out: &mut Output) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let grid = cfg.grid()?;
    let rho = cfg.weight.rho;
    let Built::KelvinVoigt { kv, cfg: kc } = cfg.build(rho, grid)? else {
        return Err(CliError::Config("example kelvin-voigt needs problem.model = \"kelvin-voigt\"".into()));
    };
    out.key("command", "example kelvin-voigt");
    out.key("cells", kc.cells);
    out.key("viscous_cells", kc.dim_v());
    out.key("rho", num(rho));
    out.line(format!(
        "kelvin-voigt example: {} cells ({} viscous), grid [{}, {}] with {} steps",
        kc.cells,
        kc.dim_v(),
        grid.t_min(),
        grid.t_max(),
        grid.n()
    ));
    let ts = grid.times();
    let defect = schur_defect(&kc, &ts)?;
    let schur_ok = defect <= 1e-10;
    out.line(format!("Schur reassembly defect over {} samples: {}", ts.len(), num(defect)));
    out.key("schur_defect", num(defect));

    let mut rhos = cfg.weight.sweep.clone();
    if rhos.is_empty() {
        rhos = (0..4).map(|k| rho * f64::from(1u32 << k)).collect();
    }
    rhos.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    let mut tail_rows = Vec::new();
    let mut prev: Option<f64> = None;
    let mut halves = true;
    for &r in &rhos {
        let w = weight(r)?;
        let tail = neumann_tail_norm(&kc, &w, &grid, cfg.solver.tail_probes, ctx.seed).map_err(classify)?;
        let reduction = prev.map(|p| p / tail);
        if let Some(x) = reduction {
            halves &= x >= 2.0;
        }
        out.line(format!(
            "  rho = {r}: tail norm {}, reduction {}",
            num(tail),
            reduction.map_or("-".into(), |x| format!("{x:.4}"))
        ));
        tail_rows.push(vec![num(r), num(tail), opt_num(reduction)]);
        prev = Some(tail);
    }
    out.table("tail.csv", &["rho", "tail_norm", "reduction"], &tail_rows)?;
    out.line(format!("tail norm at least halves per step: {}", if halves { "yes" } else { "no" }));
    out.key("tail_norm_halves_per_step", if halves { "yes" } else { "no" });

    let r = kv_solve(ctx, &kv, false)?;
    write_iterations(out, &r.log)?;
    let q = kv.problem.with_weight(weight(r.rho)?);
    let mid = grid.t(grid.n() / 2);
    let late = kv
        .problem
        .with_forcing(cutoff_complement(&kv.problem.forcing, mid))
        .map_err(classify)?
        .with_weight(weight(r.rho)?);
    let late_u = subspace_perturbed_solve(&late, &kv.minf, &kv.v, &kv_options(ctx, false)).map_err(classify)?;
    let causality = late_u.u.max_abs_up_to(mid);
    let residual_rel = r.residual / weighted_norm(&q.forcing, &q.weight).max(f64::MIN_POSITIVE);
    out.line(format!(
        "subspace fixed point at rho = {}: {} iterations, ratio {}, residual {} (relative {})",
        r.rho,
        r.iters,
        num(r.ratio),
        num(r.residual),
        num(residual_rel)
    ));
    out.line(format!("causality defect with F = 0 on t <= {mid}: {}", num(causality)));
    out.key("rho_used", num(r.rho));
    out.key("iterations", r.iters);
    out.key("contraction_ratio", num(r.ratio));
    out.key("residual", num(r.residual));
    out.key("causality_defect", num(causality));
    out.trajectory("solution.csv", &r.u)?;
    if ctx.emit_plot_data {
        plot_norms(out, &r.u, &q.forcing, &q.weight)?;
    }
    if !schur_ok {
        return Err(CliError::Verification(format!("Schur reassembly defect {defect:e} exceeds 1e-10")));
    }
    out.key("status", "ok");
    Ok(())
}
