//! The pipelines behind `hjhomog run`.

use hjhomog_core::environment::{ensemble, write_lattice_csv};
use hjhomog_core::geometry::{
    radial_checks, sublevel_extremes, tabulate_hbar, EstimateTable, TableRow,
};
use hjhomog_core::homog::{
    convexcase_variance_decay, corrector_report, estimate_drift, extract_corrector,
    mean_zero_checks, vanishing_discount, vanishing_discount_with_solutions, CheckStatus,
    EffectiveEstimate,
};
use hjhomog_core::models::{DiffusionKind, HamiltonianKind};
use hjhomog_core::par::Exec;
use hjhomog_core::solver::{
    check_assumption_h, solve_discounted, solve_effective, solve_oscillatory, sup_distance,
    HbarTable, MarchOptions,
};
use hjhomog_core::{GridSpec, Vector};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Stage};
use crate::output::Sink;
use crate::plot::{render, Series, Style};

/// One pass/fail line of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Summary numbers and checks produced by a pipeline.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Outcome {
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn metric(&mut self, k: impl Into<String>, v: f64) {
        self.metrics.insert(k.into(), v);
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn absorb(&mut self, prefix: &str, other: Outcome) {
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}{k}"), v);
        }
        for mut c in other.checks {
            c.name = format!("{prefix}{}", c.name);
            self.checks.push(c);
        }
    }

    pub fn checks_csv(&self) -> String {
        let mut s = String::from("check,pass,detail\n");
        for c in &self.checks {
            s.push_str(&format!("{},{},\"{}\"\n", c.name, c.passed, c.detail.replace('"', "'")));
        }
        s
    }
}

/// Dispatch on `config.experiment`.
pub fn execute(cfg: &ExperimentConfig, sink: &mut Sink, exec: Exec) -> Result<Outcome, CliError> {
    let out = match cfg.experiment {
        Experiment::EnvSample => env_sample(cfg, sink)?,
        Experiment::Solve => solve(cfg, sink)?,
        Experiment::Homog => homog(cfg, sink, exec)?,
        Experiment::Corrector => corrector(cfg, sink, exec)?,
        Experiment::Geometry => geometry(cfg, sink, exec)?,
        Experiment::VerifyRadial => verify_radial(cfg, sink, exec)?,
        Experiment::VerifyConvex => verify_convex(cfg, sink, exec)?,
        Experiment::Oscillatory => oscillatory(cfg, sink, exec)?,
    };
    if !out.checks.is_empty() {
        sink.write("checks.csv", out.checks_csv().as_bytes())?;
    }
    Ok(out)
}

fn svg(cfg: &ExperimentConfig, sink: &mut Sink, name: &str, body: String) -> Result<(), CliError> {
    if cfg.output.svg {
        sink.write(name, body.as_bytes())?;
    }
    Ok(())
}

fn p_label(q: Vector, dim: usize) -> String {
    if dim == 1 {
        format!("{}", q[0])
    } else {
        format!("{};{}", q[0], q[1])
    }
}

/// Concatenate CSV chunks that share a header.
fn join_csv(chunks: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for (k, c) in chunks.iter().enumerate() {
        let text = String::from_utf8_lossy(c);
        let body = if k == 0 {
            &text[..]
        } else {
            text.split_once('\n').map_or("", |(_, rest)| rest)
        };
        out.extend_from_slice(body.as_bytes());
    }
    out
}

fn write_estimates(
    sink: &mut Sink,
    dim: usize,
    ests: &[EffectiveEstimate],
) -> Result<(), CliError> {
    let mut chunks = Vec::new();
    let mut summary = Vec::new();
    let mut diag = Vec::new();
    EffectiveEstimate::write_summary_header(dim, &mut summary).expect("in-memory write");
    let ph = if dim == 1 { "p0" } else { "p0,p1" };
    writeln!(
        diag,
        "{ph},delta,seed,iterations,residual_sup,lipschitz,sup_norm_delta_v,max_abs_h"
    )
    .expect("in-memory write");
    for e in ests {
        let mut c = Vec::new();
        e.write_csv(&mut c).expect("in-memory write");
        chunks.push(c);
        e.write_summary_row(&mut summary).expect("in-memory write");
        let pf = p_label(e.p, dim).replace(';', ",");
        for (s, row) in e.seeds.iter().zip(&e.diagnostics) {
            for (d, x) in e.deltas.iter().zip(row) {
                writeln!(
                    diag,
                    "{pf},{d},{s},{},{:e},{},{},{}",
                    x.iterations, x.residual_sup, x.lipschitz_estimate, x.sup_norm_delta_v, x.max_abs_h
                )
                .expect("in-memory write");
            }
        }
    }
    sink.write("estimates.csv", &join_csv(&chunks))?;
    sink.write("summary.csv", &summary)?;
    sink.write("diagnostics.csv", &diag)?;
    Ok(())
}

fn convergence_plot(dim: usize, ests: &[EffectiveEstimate]) -> String {
    let series: Vec<Series> = ests
        .iter()
        .map(|e| {
            let pts = e.deltas.iter().copied().zip(e.seed_means()).collect();
            Series::new(format!("p = {}", p_label(e.p, dim)), pts)
        })
        .collect();
    render(
        "seed mean of -delta v(0)",
        "delta",
        "-delta v(0)",
        &series,
        Style::Lines,
    )
}

fn env_sample(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let samples = ensemble(&cfg.environment, &grid, &cfg.sweep.seeds).stage("env-sample")?;
    let mut summary = String::from("seed,min,max,mean,floor,cap\n");
    let mut out = Outcome::default();
    let mut total = 0.0;
    for s in &samples {
        let seed = s.spec().seed;
        sink.write_with(&format!("field_seed{seed}.csv"), |w| s.write_csv(w))?;
        summary.push_str(&format!(
            "{seed},{},{},{},{},{}\n",
            s.min_value(),
            s.max_value(),
            s.mean(),
            s.floor(),
            s.cap()
        ));
        total += s.mean();
    }
    sink.write("env_summary.csv", summary.as_bytes())?;
    out.metric("ensemble_mean", total / samples.len() as f64);
    Ok(out)
}

fn solve(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let p = cfg.p()?;
    let model = cfg.model();
    let mut out = Outcome::default();
    let mut report = String::from(
        "seed,delta,sup_norm_delta_v,lipschitz,total,bound,max_abs_h,residual_sup,iterations,pass\n",
    );
    let mut worst: f64 = 0.0;
    let mut per_delta = vec![0.0f64; cfg.sweep.deltas.len()];
    for &seed in &cfg.sweep.seeds {
        let (ham, diff) = model.instantiate(&grid, seed).stage("solve")?;
        for (k, &delta) in cfg.sweep.deltas.iter().enumerate() {
            let params = cfg
                .numerics
                .scheme
                .resolve(&ham, &diff, p, delta, &grid)
                .stage("solve")?;
            let sol = solve_discounted(&ham, &diff, p, delta, &params).stage("solve")?;
            sink.write_with(&format!("solution_seed{seed}_d{k}.csv"), |w| sol.write_csv(w))?;
            sink.write_with(&format!("log_seed{seed}_d{k}.csv"), |w| sol.write_log_csv(w))?;
            let a = check_assumption_h(&sol, cfg.checks.assumption_bound);
            report.push_str(&format!(
                "{seed},{delta},{},{},{},{},{},{:e},{},{}\n",
                a.sup_norm_delta_v,
                a.lipschitz_estimate,
                a.total,
                a.bound,
                a.max_abs_h,
                sol.residual_sup,
                sol.iterations,
                a.passes
            ));
            worst = worst.max(a.total);
            per_delta[k] = per_delta[k].max(a.total);
            if !a.passes {
                out.check(
                    "assumption_bound",
                    false,
                    format!("seed {seed}, delta {delta}: {} > {}", a.total, a.bound),
                );
            }
        }
    }
    sink.write("assumption.csv", report.as_bytes())?;
    if out.checks.is_empty() {
        out.check(
            "assumption_bound",
            true,
            format!("max total {worst} <= {}", cfg.checks.assumption_bound),
        );
    }
    out.metric("max_delta_v_plus_lip", worst);
    for (d, b) in cfg.sweep.deltas.iter().zip(&per_delta) {
        out.metric(format!("bound[{d}]"), *b);
    }
    Ok(out)
}

fn homog(cfg: &ExperimentConfig, sink: &mut Sink, exec: Exec) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let model = cfg.model();
    let mut ests = Vec::new();
    for q in cfg.p_grid()? {
        ests.push(
            vanishing_discount(
                &model,
                q,
                &cfg.sweep.deltas,
                &cfg.sweep.seeds,
                &grid,
                &cfg.numerics.scheme,
                exec,
            )
            .stage("homog")?,
        );
    }
    write_estimates(sink, grid.dim(), &ests)?;
    svg(cfg, sink, "convergence.svg", convergence_plot(grid.dim(), &ests))?;
    let mut out = Outcome::default();
    for e in &ests {
        let key = p_label(e.p, grid.dim());
        out.metric(format!("cbar[{key}]"), e.cbar);
        out.metric(format!("extrap_residual[{key}]"), e.extrapolation_residual);
        out.metric(format!("dispersion_final[{key}]"), e.dispersion_final());
        out.metric(format!("max_abs_h[{key}]"), e.max_abs_h());
    }
    Ok(out)
}

/// Probe points for the mean-zero test: configured, or `L/4` along each axis.
fn probes(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<Vec<Vector>, CliError> {
    if cfg.checks.probes.is_empty() {
        let q = grid.extent() / 4.0;
        return Ok(if grid.dim() == 1 {
            vec![[q, 0.0]]
        } else {
            vec![[q, 0.0], [0.0, q], [q, q], [-q, q]]
        });
    }
    cfg.checks
        .probes
        .iter()
        .map(|x| match (grid.dim(), x.as_slice()) {
            (1, [a]) => Ok([*a, 0.0]),
            (2, [a, b]) => Ok([*a, *b]),
            _ => Err(CliError::Config(format!(
                "checks.probes: expected {} component(s)",
                grid.dim()
            ))),
        })
        .collect()
}

/// Corrector diagnostics and mean-zero statistics over the seeds at `p`.
fn corrector_stage(
    cfg: &ExperimentConfig,
    sink: &mut Sink,
    exec: Exec,
    p: Vector,
) -> Result<(EffectiveEstimate, Outcome), CliError> {
    let grid = cfg.grid()?;
    let model = cfg.model();
    let (est, sols) = vanishing_discount_with_solutions(
        &model,
        p,
        &cfg.sweep.deltas,
        &cfg.sweep.seeds,
        &grid,
        &cfg.numerics.scheme,
        exec,
    )
    .stage("corrector")?;
    let mut profile = String::from("seed,R,max_ratio\n");
    let mut summaries = Vec::new();
    let mut thetas = Vec::new();
    let mut drifts = Vec::new();
    let mut series = Vec::new();
    let mut worst_residual: f64 = 0.0;
    for (seed, sol) in cfg.sweep.seeds.iter().zip(&sols) {
        let (ham, diff) = model.instantiate(&grid, *seed).stage("corrector")?;
        let rep = corrector_report(&ham, &diff, sol, est.cbar).stage("corrector")?;
        for (r, v) in &rep.sublinearity_profile {
            profile.push_str(&format!("{seed},{r},{v}\n"));
        }
        series.push(Series::new(format!("seed {seed}"), rep.sublinearity_profile.clone()));
        let mut s = Vec::new();
        rep.write_summary(&mut s).expect("in-memory write");
        summaries.push(s);
        worst_residual = worst_residual.max(rep.equation_residual_sup);
        let theta = extract_corrector(sol);
        drifts.push(estimate_drift(&theta, &grid).stage("corrector")?.0);
        thetas.push(theta);
    }
    // the first seed's corrector as a lattice field
    sink.write_with("theta_first_seed.csv", |w| {
        write_lattice_csv(w, &grid, &thetas[0], "theta")
    })?;
    sink.write("corrector_profile.csv", profile.as_bytes())?;
    sink.write("corrector_summary.csv", &join_csv(&summaries))?;
    svg(
        cfg,
        sink,
        "sublinearity.svg",
        render("max |theta~| / R on the shell", "R", "ratio", &series, Style::Lines),
    )?;

    let mz = mean_zero_checks(&thetas, &drifts, &grid, &probes(cfg, &grid)?);
    sink.write_with("mean_zero.csv", |w| mz.write_csv(w))?;
    let mut out = Outcome::default();
    out.metric("cbar", est.cbar);
    out.metric("equation_residual_sup", worst_residual);
    for s in &mz.stats {
        out.metric(format!("mean[{}]", s.label), s.mean);
        out.metric(format!("stderr[{}]", s.label), s.stderr);
    }
    let detail = match mz.status {
        CheckStatus::InsufficientSeeds => format!("insufficient seeds ({})", mz.seeds),
        _ => mz
            .stats
            .iter()
            .map(|s| format!("{}: {:.3e} +- {:.3e}", s.label, s.mean, s.stderr))
            .collect::<Vec<_>>()
            .join("; "),
    };
    out.check("mean_zero", mz.passes(), detail);
    Ok((est, out))
}

fn corrector(cfg: &ExperimentConfig, sink: &mut Sink, exec: Exec) -> Result<Outcome, CliError> {
    let p = cfg.p()?;
    Ok(corrector_stage(cfg, sink, exec, p)?.1)
}

fn geometry(cfg: &ExperimentConfig, sink: &mut Sink, exec: Exec) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let (table, ests) = tabulate_hbar(
        &cfg.model(),
        &cfg.p_grid()?,
        &cfg.sweep.deltas,
        &cfg.sweep.seeds,
        &grid,
        &cfg.numerics.scheme,
        exec,
    )
    .stage("geometry")?;
    write_estimates(sink, grid.dim(), &ests)?;
    sink.write_with("table.csv", |w| table.write_csv(w))?;
    let geo = sublevel_extremes(&table, cfg.p()?).stage("geometry")?;
    sink.write_with("geometry.csv", |w| geo.write_csv(w))?;
    if grid.dim() == 2 && cfg.output.svg {
        sink.write_with("geometry.svg", |w| geo.write_svg(w))?;
    }
    let mut out = Outcome::default();
    out.metric("level", geo.level);
    out.metric("members", geo.member_flags.iter().filter(|&&m| m).count() as f64);
    out.metric("hull_vertices", geo.hull.len() as f64);
    out.metric("extreme_points", geo.extreme_points().len() as f64);
    out.metric("flat_points", geo.flat.len() as f64);
    out.metric("p_is_extreme", geo.p_is_extreme() as u8 as f64);
    Ok(out)
}

/// `p_grid`, or rays `s·e_k` over `directions × radii`.
fn ray_grid(cfg: &ExperimentConfig) -> Result<Vec<Vector>, CliError> {
    if !cfg.sweep.p_grid.is_empty() {
        return cfg.p_grid();
    }
    if cfg.numerics.dim != 2 {
        return Err(CliError::Config("verify-radial needs numerics.dim = 2".into()));
    }
    let n = cfg.sweep.directions;
    let mut qs = Vec::new();
    for k in 0..n {
        let a = TAU * k as f64 / n as f64;
        for &s in &cfg.sweep.radii {
            // exact zeros on the axes, not 6e-17
            let clean = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
            qs.push([s * clean(a.cos()), s * clean(a.sin())]);
        }
    }
    Ok(qs)
}

fn verify_radial(cfg: &ExperimentConfig, sink: &mut Sink, exec: Exec) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let model = cfg.model();
    let qs = ray_grid(cfg)?;
    let p = cfg.p()?;
    let mut ests = Vec::new();
    let mut rows = Vec::new();
    let mut out = Outcome::default();
    for &q in &qs {
        let est = vanishing_discount(
            &model,
            q,
            &cfg.sweep.deltas,
            &cfg.sweep.seeds,
            &grid,
            &cfg.numerics.scheme,
            exec,
        )
        .stage("verify-radial")?;
        rows.push(TableRow {
            q,
            cbar: est.cbar,
            uncertainty: est.uncertainty(),
        });
        ests.push(est);
    }
    write_estimates(sink, grid.dim(), &ests)?;
    let table = EstimateTable::new(grid.dim(), rows).stage("verify-radial")?;
    sink.write_with("table.csv", |w| table.write_csv(w))?;

    let homogeneous = cfg.hamiltonian.kind == HamiltonianKind::Eikonal
        && matches!(
            cfg.diffusion.kind,
            DiffusionKind::Zero | DiffusionKind::CurvatureProjection
        );
    let rep = radial_checks(&table, homogeneous, cfg.checks.spread_tol, cfg.checks.fit_tol);
    sink.write_with("radial.csv", |w| rep.write_csv(w))?;
    let mut viol = String::from("direction,s1,s2,ratio1,ratio2\n");
    for v in &rep.violations {
        viol.push_str(&format!("{},{},{},{},{}\n", v.direction, v.s1, v.s2, v.ratio1, v.ratio2));
    }
    sink.write("radial_violations.csv", viol.as_bytes())?;

    let max_spread = rep.radii.iter().map(|r| r.spread).fold(0.0, f64::max);
    out.metric("max_spread", max_spread);
    out.check(
        "sampling",
        rep.sufficient,
        format!("{} directions, {} radii", rep.directions, rep.radii.len()),
    );
    out.check(
        "isotropy",
        rep.isotropic,
        rep.radii
            .iter()
            .map(|r| format!("s={}: spread {:.4}", r.radius, r.spread))
            .collect::<Vec<_>>()
            .join("; "),
    );
    out.check(
        "ratio_monotone",
        rep.monotone,
        match rep.violations.first() {
            Some(v) => format!(
                "direction {:.4}: cbar(s)/s {} at s={} > {} at s={}",
                v.direction, v.ratio1, v.s1, v.ratio2, v.s2
            ),
            None => "cbar(s)/s nondecreasing on every ray".into(),
        },
    );
    if let (Some(c), Some(r)) = (rep.fit_slope, rep.fit_relative_residual) {
        out.metric("fit_slope", c);
        out.metric("fit_relative_residual", r);
        out.check(
            "linear_fit",
            r <= cfg.checks.fit_tol,
            format!("slope {c:.6}, relative residual {r:.4} (tol {})", cfg.checks.fit_tol),
        );
    }

    // drift and θ mean-zero on the same ensemble at `p`
    sink.set_prefix("mean_zero_p");
    let (_, mz) = corrector_stage(cfg, sink, exec, p)?;
    sink.set_prefix("");
    out.absorb("p.", mz);
    Ok(out)
}

fn verify_convex(cfg: &ExperimentConfig, sink: &mut Sink, exec: Exec) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let rep = convexcase_variance_decay(
        &cfg.model(),
        cfg.p()?,
        &cfg.sweep.deltas,
        &cfg.sweep.seeds,
        &grid,
        &cfg.numerics.scheme,
        cfg.checks.variance_threshold,
        exec,
    )
    .map_err(|e| match e {
        hjhomog_core::Error::NotApplicable(m) => CliError::Config(format!("verify-convex: {m}")),
        e => CliError::Pipeline {
            stage: "verify-convex",
            source: e,
        },
    })?;
    sink.write_with("variance.csv", |w| rep.write_csv(w))?;
    write_estimates(sink, grid.dim(), std::slice::from_ref(&rep.estimate))?;
    let series = vec![Series::new(
        "dispersion",
        rep.deltas.iter().copied().zip(rep.dispersion.iter().copied()).collect(),
    )];
    svg(
        cfg,
        sink,
        "variance.svg",
        render("seed dispersion of -delta v(0)", "delta", "std", &series, Style::Lines),
    )?;
    let first = rep.dispersion[0];
    let last = *rep.dispersion.last().unwrap();
    let mut out = Outcome::default();
    out.metric("dispersion_first", first);
    out.metric("dispersion_final", last);
    out.metric("cbar", rep.estimate.cbar);
    out.check(
        "dispersion_decreases",
        last < first,
        format!("{last:.4e} at delta {} vs {first:.4e} at delta {}", rep.deltas.last().unwrap(), rep.deltas[0]),
    );
    out.check(
        "dispersion_nonincreasing",
        rep.nonincreasing,
        format!("{:?} (slack {})", rep.dispersion, rep.slack),
    );
    out.check(
        "dispersion_threshold",
        last <= rep.threshold,
        format!("{last:.4e} <= {}", rep.threshold),
    );
    Ok(out)
}

fn oscillatory(cfg: &ExperimentConfig, sink: &mut Sink, exec: Exec) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    if grid.dim() != 1 {
        return Err(CliError::Config("oscillatory runs in one dimension".into()));
    }
    let o = &cfg.oscillatory;
    let model = cfg.model();
    let mut ests = Vec::new();
    for &q in &o.table_nodes {
        ests.push(
            vanishing_discount(
                &model,
                [q, 0.0],
                &cfg.sweep.deltas,
                &cfg.sweep.seeds,
                &grid,
                &cfg.numerics.scheme,
                exec,
            )
            .stage("oscillatory.table")?,
        );
    }
    write_estimates(sink, 1, &ests)?;
    let mut tab = String::from("q0,cbar\n");
    for e in &ests {
        tab.push_str(&format!("{},{}\n", e.p[0], e.cbar));
    }
    sink.write("hbar_table.csv", tab.as_bytes())?;
    let table = HbarTable::new_1d(o.table_nodes.clone(), ests.iter().map(|e| e.cbar).collect())
        .stage("oscillatory.table")?;

    let macro_grid = GridSpec::new(1, o.extent, o.spacing).map_err(|e| CliError::Config(e.to_string()))?;
    let u0: Vec<f64> = (0..macro_grid.len())
        .map(|i| (macro_grid.position(i)[0] - o.cone_center).abs())
        .collect();
    let opts = MarchOptions {
        cfl: cfg.numerics.scheme.cfl,
        record_every: usize::MAX,
        sigma: None,
        sigma_margin: cfg.numerics.scheme.sigma_margin,
        gradient_epsilon: cfg.numerics.scheme.gradient_epsilon,
    };
    let eff = solve_effective(&table, &u0, o.horizon, &macro_grid, &opts).stage("oscillatory.effective")?;
    sink.write_with("effective.csv", |w| {
        write_lattice_csv(w, &macro_grid, eff.final_frame(), "u")
    })?;

    let seed = *cfg
        .sweep
        .seeds
        .first()
        .ok_or_else(|| CliError::Config("sweep.seeds is empty".into()))?;
    let (ham, diff) = model.instantiate(&grid, seed).stage("oscillatory")?;
    let mut eps = o.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut gaps = Vec::new();
    let mut csv = String::from("epsilon,gap\n");
    for (k, &e) in eps.iter().enumerate() {
        let ev = solve_oscillatory(&ham, &diff, e, &u0, o.horizon, &macro_grid, &opts)
            .stage("oscillatory")?;
        let gap = sup_distance(ev.final_frame(), eff.final_frame());
        sink.write_with(&format!("oscillatory_e{k}.csv"), |w| {
            write_lattice_csv(w, &macro_grid, ev.final_frame(), "u")
        })?;
        csv.push_str(&format!("{e},{gap}\n"));
        gaps.push((e, gap));
    }
    sink.write("gaps.csv", csv.as_bytes())?;
    svg(
        cfg,
        sink,
        "gaps.svg",
        render(
            "sup |u_eps - u_bar| at the final time",
            "epsilon",
            "gap",
            &[Series::new("gap", gaps.clone())],
            Style::Lines,
        ),
    )?;
    let mut out = Outcome::default();
    for (e, g) in &gaps {
        out.metric(format!("gap[{e}]"), *g);
    }
    out.check(
        "gap_decreases",
        gaps.len() >= 2 && gaps.windows(2).all(|w| w[1].1 < w[0].1),
        gaps.iter()
            .map(|(e, g)| format!("eps {e}: {g:.4e}"))
            .collect::<Vec<_>>()
            .join("; "),
    );
    Ok(out)
}
