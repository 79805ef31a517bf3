//! Batch front end: parses a JSON run configuration, runs one experiment and writes
//! CSV, JSON and SVG artifacts. Exit status 2 marks configuration errors, 3 marks
//! solver warnings escalated by the configuration.

use anyhow::Context;
use clap::{Parser, Subcommand};
use lipstab::cache::{cache_dir, GreenProvider};
use lipstab::cauchy::{alessandrini_identity, build_boundary_norm, cauchy_datum, cauchy_operator, sample_cauchy_space, subspace_distance, NODE_CAP};
use lipstab::config::{Escalation, Experiment, RunConfig};
use lipstab::fundamental::{build_biphase, eval_h, gamma_laplace, Side};
use lipstab::singular::{blow_up, cell_offsets};
use lipstab::solver::io::write_field;
use lipstab::solver::{DiscreteGreenField, Grid};
use lipstab::stability::asymptotics::{asymptotic_exponent_fit, AsymptoticSpec};
use lipstab::stability::sweep::{run_sweep, SweepSpec};
use lipstab::stability::three_sphere::{three_sphere_ensemble, EnsembleSpec};
use lipstab::Error;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser, Debug)]
#[command(name = "lipstab", version, about = "Lipschitz stability experiments for piecewise-affine coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the grid resolution (cells across x).
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; zero uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Primary output file; defaults to a file named after the command in the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory for SVG plots.
    #[arg(long, global = true)]
    plots: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check the coefficient assumptions of every pair.
    Validate,
    /// Dirichlet solve for one boundary mode.
    Solve,
    /// Robin Green function for one source.
    Green,
    /// Evaluate the biphase kernel at configured points.
    KernelProbe,
    /// Distance between the Cauchy subspaces of the two pairs.
    CauchyDistance,
    /// Blow-up of the singular solution near the next interface.
    Singular,
    /// Exponent fits of the Green function against the biphase kernel.
    Asymptotics,
    /// Three-sphere constant over random solutions, per grid.
    ThreeSpheres,
    /// Interior error against the Cauchy-data distance.
    Sweep,
    /// Boundary sup of perturbations supported on the first slab against the distance.
    BoundaryHolder,
    /// Collate experiment summaries into markdown.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Solve => "solve",
            Command::Green => "green",
            Command::KernelProbe => "kernel-probe",
            Command::CauchyDistance => "cauchy-distance",
            Command::Singular => "singular",
            Command::Asymptotics => "asymptotics",
            Command::ThreeSpheres => "three-spheres",
            Command::Sweep => "sweep",
            Command::BoundaryHolder => "boundary-holder",
            Command::Report => "report",
        }
    }
}

enum Failure {
    Config(String),
    Escalated(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            e => Failure::Other(e.into()),
        }
    }
}

/// Buffered artifacts, written in order by a single writer once the command finishes.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    fn push(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.files.push((path, bytes.into()));
    }

    fn summary(&mut self, name: &str, headline: Value, details: Value) {
        let v = json!({ "command": name, "headline": headline, "details": details });
        let text = serde_json::to_string_pretty(&v).expect("summary serialises") + "\n";
        self.push(self.dir.join(format!("{name}.json")), text);
    }

    fn flush(self) -> anyhow::Result<()> {
        for (path, bytes) in self.files {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

struct Ctx {
    cfg: RunConfig,
    n: usize,
    out: Option<PathBuf>,
    plots: Option<PathBuf>,
    art: Artifacts,
    warnings: Vec<String>,
}

impl Ctx {
    fn primary(&self, name: &str, ext: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.cfg.output_dir.join(format!("{name}.{ext}")))
    }

    fn plot(&mut self, name: &str, svg: String) {
        if let Some(dir) = &self.plots {
            let p = dir.join(format!("{name}.svg"));
            self.art.push(p, svg);
        }
    }

    fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        log::warn!("{w}");
        self.warnings.push(w);
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("value serialises")
}

fn run_validate(ctx: &mut Ctx) -> Result<(), Failure> {
    let reports = ctx.cfg.validate_pairs()?;
    let mut failed = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        for c in &r.checks {
            println!("pair {i} {} {}: {:.6} (bound {:.6})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
            if !c.passed {
                failed.push(format!("pair {i}: {}", c.name));
            }
        }
    }
    ctx.art.summary("validate", json!({ "pairs": reports.len(), "passed": failed.is_empty() }), to_value(&reports));
    if !failed.is_empty() {
        return Err(Failure::Config(format!("assumption checks failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn run_solve(ctx: &mut Ctx) -> Result<(), Failure> {
    let pair = ctx.cfg.pair(0)?;
    let aug = ctx.cfg.augmented()?;
    let grid = Arc::new(Grid::for_omega(&pair.partition, ctx.n)?);
    let norm = build_boundary_norm(&grid, &aug.sigma, NODE_CAP)?;
    let (p, q) = ctx.cfg.probe.mode;
    let f = norm.mode(p, q);
    let op = cauchy_operator(&pair, grid, &norm)?;
    let (u, cp, w) = cauchy_datum(&op, &pair, &norm, &f)?;
    if let Some(w) = w {
        ctx.warn(format!("solve: {w}"));
    }
    let energy = norm.pairing(&cp.f, &cp.g);
    let mut identity = Value::Null;
    if ctx.cfg.pairs.len() >= 2 {
        identity = to_value(&alessandrini_identity(&pair, &ctx.cfg.pair(1)?, ctx.n, (p, q))?);
    }
    let path = ctx.primary("solve", "field");
    let tmp = tempfile_path(&path);
    write_field(&tmp, &u)?;
    ctx.art.push(path.clone(), std::fs::read(&tmp).context("reading field dump")?);
    let _ = std::fs::remove_file(&tmp);
    println!("max |u| = {:.6e}, boundary energy = {:.6e}", u.max_abs(), energy.re);
    ctx.art.summary(
        "solve",
        json!({ "grid": ctx.n, "mode": [p, q], "max_abs": u.max_abs(), "boundary_energy": energy.re }),
        json!({ "field": path, "identity": identity }),
    );
    Ok(())
}

fn tempfile_path(target: &Path) -> PathBuf {
    let name = target.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    std::env::temp_dir().join(format!("lipstab-{}-{name}", std::process::id()))
}

fn provider(ctx: &Ctx, i: usize) -> Result<GreenProvider, Failure> {
    let pair = ctx.cfg.pair(i)?;
    let aug = ctx.cfg.augmented()?;
    Ok(GreenProvider::new(&pair, &aug, ctx.n, cache_dir(ctx.cfg.cache_dir.clone()))?)
}

fn run_green(ctx: &mut Ctx) -> Result<(), Failure> {
    let pv = provider(ctx, 0)?;
    let aug = ctx.cfg.augmented()?;
    let default = {
        let (lo, hi) = aug.d0_box();
        (lo + hi).scale(0.5)
    };
    let want = ctx.cfg.probe.source.unwrap_or(default);
    let y = pv.grid().snap(&want).ok_or_else(|| Failure::Config(format!("source {:?} is outside the grid", want.0)))?;
    let field = pv.green(&y)?;
    let bound = DiscreteGreenField { source: y, field: (*field).clone(), iterations: 0, residual: 0.0 }.green_bound();
    let path = ctx.primary("green", "field");
    let tmp = tempfile_path(&path);
    write_field(&tmp, &field)?;
    ctx.art.push(path.clone(), std::fs::read(&tmp).context("reading field dump")?);
    let _ = std::fs::remove_file(&tmp);
    println!("sup |G(x,y)| |x-y| over |x-y| >= 4h: {bound:.6e}");
    ctx.art.summary("green", json!({ "grid": ctx.n, "source": y, "green_bound": bound }), json!({ "field": path, "solves": pv.solves(), "disk_hits": pv.disk_hits() }));
    Ok(())
}

fn run_kernel_probe(ctx: &mut Ctx) -> Result<(), Failure> {
    let pair = ctx.cfg.pair(0)?;
    let anchor = pair.partition.interfaces.first().map(|i| i.anchor).unwrap_or_else(|| pair.partition.domain.lower);
    let a0 = pair.matrix.eval(&anchor);
    let (gp, gm) = ctx.cfg.probe.kernel_gammas;
    let bp = build_biphase(&a0, gp, gm)?;
    let equal = build_biphase(&a0, gp, gp)?;
    let mut rows = Vec::new();
    for (x, y) in &ctx.cfg.probe.kernel_points {
        let k = eval_h(&bp, x, y, Some(Side::Above))?;
        let e = eval_h(&equal, x, y, Some(Side::Above))?;
        let collapse = if a0 == lipstab::Matrix3::identity() {
            let g = gamma_laplace(x, y)?;
            Some((e.value - g.value / gp).abs() / (g.value / gp).abs())
        } else {
            None
        };
        println!("H({:?}, {:?}) = {:.12e}", x.0, y.0, k.value);
        rows.push(json!({ "x": x, "y": y, "kernel": k, "equal_phase_collapse": collapse }));
    }
    ctx.art.summary("kernel-probe", json!({ "points": rows.len(), "invariant_residual": bp.invariant_residual() }), Value::Array(rows));
    Ok(())
}

fn run_cauchy_distance(ctx: &mut Ctx) -> Result<(), Failure> {
    let p1 = ctx.cfg.pair(0)?;
    let p2 = ctx.cfg.second_pair("cauchy-distance")?;
    let aug = ctx.cfg.augmented()?;
    let grid = Arc::new(Grid::for_omega(&p1.partition, ctx.n)?);
    let norm = build_boundary_norm(&grid, &aug.sigma, NODE_CAP)?;
    let m = ctx.cfg.probe.m;
    let c1 = sample_cauchy_space(&p1, grid.clone(), &norm, m)?;
    let c2 = sample_cauchy_space(&p2, grid, &norm, m)?;
    for (mode, w) in c1.warnings.iter().chain(&c2.warnings) {
        ctx.warn(format!("cauchy mode {mode:?}: {w}"));
    }
    let d = subspace_distance(&c1, &c2)?;
    for (i, c) in [&c1, &c2].iter().enumerate() {
        let path = ctx.cfg.output_dir.join(format!("cauchy-{}.bin", i + 1));
        let tmp = tempfile_path(&path);
        c.dump(&tmp)?;
        ctx.art.push(path.clone(), std::fs::read(&tmp).context("reading subspace dump")?);
        let side = format!("{}.json", tmp.display());
        ctx.art.push(PathBuf::from(format!("{}.json", path.display())), std::fs::read(&side).context("reading sidecar")?);
        let _ = std::fs::remove_file(&tmp);
        let _ = std::fs::remove_file(&side);
    }
    println!("d(C1, C2) = {:.6e} (one-sided {:.6e})", d.symmetric, d.one_sided);
    ctx.art.summary("cauchy-distance", json!({ "grid": ctx.n, "m": m, "d": d.symmetric }), json!({ "distance": d, "dims": [c1.dim(), c2.dim()] }));
    Ok(())
}

fn run_singular(ctx: &mut Ctx) -> Result<(), Failure> {
    let (a, b) = (provider(ctx, 0)?, {
        ctx.cfg.second_pair("singular")?;
        provider(ctx, 1)?
    });
    let h = a.grid().h;
    let o = ctx.cfg.singular.clone();
    let r0 = a.pair.partition.domain.r0;
    let radii = if o.radii.is_empty() { cell_offsets(h, 8.0 * h, r0 / 8.0) } else { o.radii.clone() };
    if radii.is_empty() {
        return Err(Failure::Config(format!("no cell offsets in [8h, r0/8] = [{:.4}, {:.4}]", 8.0 * h, r0 / 8.0)));
    }
    let lateral = o.lateral.unwrap_or_else(|| {
        let p = a.pair.partition.interfaces.iter().find(|i| i.index == o.k + 1).map(|i| i.anchor).unwrap_or_else(|| a.pair.partition.domain.lower);
        (p[0], p[1])
    });
    let r = blow_up(&a, &b, o.k, lateral, &radii)?;
    let mut csv = String::from("r,abs_s\n");
    for (x, v) in r.radii.iter().zip(&r.values) {
        csv.push_str(&format!("{x:e},{v:e}\n"));
    }
    let primary = ctx.primary("singular", "csv");
    ctx.art.push(primary, csv);
    if let Some(f) = r.fit {
        println!("slope of ln|S| against ln r: {:.4} (95% CI {:.4} .. {:.4})", f.slope, f.slope_ci.0, f.slope_ci.1);
        ctx.plot("singular", lipstab::plot::Scatter { title: "singular solution blow-up".into(), x_label: "ln r".into(), y_label: "ln |S|".into(), points: r.radii.iter().zip(&r.values).map(|(x, v)| (x.ln(), v.ln())).collect(), line: Some((f.slope, f.intercept)) }.to_svg());
    } else {
        println!("a single radius: no slope");
    }
    ctx.art.summary("singular", json!({ "grid": ctx.n, "k": o.k, "slope": r.fit.map(|f| f.slope), "radii": r.radii.len() }), to_value(&r));
    Ok(())
}

fn run_asymptotics(ctx: &mut Ctx) -> Result<(), Failure> {
    let pv = provider(ctx, 0)?;
    let h = pv.grid().h;
    let o = ctx.cfg.asymptotics.clone();
    let r0 = pv.pair.partition.domain.r0;
    let radii = if o.radii.is_empty() { cell_offsets(h, 4.0 * h * (1.0 + 1e-9), r0 / 8.0 * (1.0 - 1e-9)) } else { o.radii.clone() };
    let spec = AsymptoticSpec { radii, drop_smallest: o.drop_smallest, probe_radius: o.probe_radius.unwrap_or(r0 / 4.0) };
    let r = asymptotic_exponent_fit(&pv, o.interface, &spec)?;
    let mut csv = String::from("r,x,y,z,distance,grad_x,mixed_xy,grad_y,hess_y\n");
    for p in &r.records {
        csv.push_str(&format!("{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n", p.r, p.x[0], p.x[1], p.x[2], p.distance, p.deviation[0], p.deviation[1], p.deviation[2], p.deviation[3]));
    }
    let primary = ctx.primary("asymptotics", "csv");
    ctx.art.push(primary, csv);
    let mut head = serde_json::Map::new();
    for f in &r.fits {
        println!("{:?}: slope {:.4}, theta {:.4} (95% CI {:.4} .. {:.4})", f.estimate, f.fit.slope, f.theta, f.theta_ci.0, f.theta_ci.1);
        head.insert(format!("{:?}", f.estimate), json!({ "slope": f.fit.slope, "theta": f.theta, "theta_ci": f.theta_ci }));
    }
    ctx.art.summary("asymptotics", Value::Object(head), json!({ "anchor": r.anchor, "radii_used": r.radii_used, "radii_dropped": r.radii_dropped, "fits": r.fits }));
    Ok(())
}

fn run_three_spheres(ctx: &mut Ctx) -> Result<(), Failure> {
    let pair = ctx.cfg.pair(0)?;
    let o = ctx.cfg.three_spheres.clone();
    let grids = if ctx.cfg.grids.len() > 1 && ctx.out.is_none() { ctx.cfg.grids.clone() } else { vec![ctx.n] };
    let mut per = Vec::new();
    let mut csv = String::from("grid,member,constant\n");
    for &n in &grids {
        let spec = EnsembleSpec { n, members: o.members, basis: o.basis, center: o.center, radii: o.radii, seed: ctx.cfg.seed };
        let r = three_sphere_ensemble(&pair, &spec)?;
        for w in r.warnings.clone() {
            ctx.warn(format!("three-spheres {n}: {w}"));
        }
        for (i, c) in r.constants.iter().enumerate() {
            csv.push_str(&format!("{n},{i},{c:e}\n"));
        }
        println!("grid {n}: C_inf {:.5}, median {:.5}, p99 {:.5}, satisfied {}/{}", r.c_inf, r.median, r.p99, r.satisfied, r.constants.len());
        per.push(r);
    }
    let ratio = per.last().map(|l| l.c_inf / per[0].c_inf);
    let primary = ctx.primary("three-spheres", "csv");
    ctx.art.push(primary, csv);
    let head: Vec<Value> = per.iter().map(|r| json!({ "grid": r.spec.n, "c_inf": r.c_inf, "median": r.median, "p99": r.p99 })).collect();
    ctx.art.summary("three-spheres", json!({ "grids": head, "c_inf_ratio": ratio }), to_value(&per));
    Ok(())
}

fn run_sweep_command(ctx: &mut Ctx, holder: bool) -> Result<(), Failure> {
    let name = if holder { "boundary-holder" } else { "sweep" };
    let pair = ctx.cfg.pair(0)?.extend_to_d0(&ctx.cfg.augmented()?);
    let o = &ctx.cfg.sweep;
    let base = if holder { SweepSpec::boundary_holder(ctx.n, o.m, o.samples, ctx.cfg.seed) } else { SweepSpec::lipschitz(ctx.n, o.m, o.samples, ctx.cfg.seed) };
    let spec = SweepSpec { magnitude: o.magnitude, gradient_scale: o.gradient_scale, q_weight: o.q_weight, ..base };
    let r = run_sweep(&pair, &spec)?;
    for rec in &r.records {
        for w in &rec.warnings {
            ctx.warn(format!("{name} sample {}: {w}", rec.sample_id));
        }
    }
    let primary = ctx.primary(name, "csv");
    ctx.art.push(primary, r.to_csv());
    let title = if holder { "boundary sup against Cauchy-data distance" } else { "interior error against Cauchy-data distance" };
    ctx.plot(name, r.scatter(title).to_svg());
    if let Some(f) = r.fit {
        println!("{name}: slope {:.4} (95% CI {:.4} .. {:.4}), max ratio {:.4}, {} samples", f.slope, f.slope_ci.0, f.slope_ci.1, r.max_ratio, r.records.len());
    }
    let head = json!({
        "grid": ctx.n,
        "m": spec.m,
        "samples": r.records.len(),
        "slope": r.fit.map(|f| f.slope),
        "slope_ci": r.fit.map(|f| f.slope_ci),
        "max_ratio": r.max_ratio,
        "trend_slope": r.trend.map(|t| t.slope),
        "ratio_grows_as_perturbation_shrinks": r.ratio_grows_as_perturbation_shrinks(),
    });
    ctx.art.summary(name, head, json!({ "fit": r.fit, "trend": r.trend, "m_convergence": r.m_convergence, "excluded": r.excluded }));
    Ok(())
}

const SECTIONS: [(Experiment, &str); 10] = [
    (Experiment::Validate, "Coefficient assumptions"),
    (Experiment::KernelProbe, "Biphase kernel"),
    (Experiment::Solve, "Dirichlet solve and Alessandrini identity"),
    (Experiment::Green, "Green function bound"),
    (Experiment::CauchyDistance, "Cauchy-data distance"),
    (Experiment::Singular, "Singular-solution blow-up"),
    (Experiment::Asymptotics, "Green function asymptotics near the interface"),
    (Experiment::ThreeSpheres, "Three-sphere inequality"),
    (Experiment::Sweep, "Interior Lipschitz estimate"),
    (Experiment::BoundaryHolder, "Boundary Hölder estimate"),
];

fn run_report(ctx: &mut Ctx) -> Result<(), Failure> {
    let wanted: Vec<Experiment> = if ctx.cfg.experiments.is_empty() { SECTIONS.iter().map(|s| s.0).collect() } else { ctx.cfg.experiments.clone() };
    let mut md = String::from("# Stability experiment report\n");
    let mut found = 0;
    for (e, title) in SECTIONS.iter().filter(|s| wanted.contains(&s.0)) {
        md.push_str(&format!("\n## {title}\n\n"));
        let path = ctx.cfg.output_dir.join(format!("{}.json", e.name()));
        match std::fs::read_to_string(&path).ok().and_then(|t| serde_json::from_str::<Value>(&t).ok()) {
            Some(v) => {
                found += 1;
                md.push_str("| quantity | value |\n|---|---|\n");
                if let Some(obj) = v["headline"].as_object() {
                    for (k, val) in obj {
                        md.push_str(&format!("| {k} | {} |\n", serde_json::to_string(val).unwrap_or_default()));
                    }
                }
            }
            None => md.push_str(&format!("No output found at `{}`.\n", path.display())),
        }
    }
    let primary = ctx.primary("report", "md");
    println!("report: {found} of {} sections populated", wanted.len());
    ctx.art.push(primary, md);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(n) = cli.grid {
        cfg.grids = vec![n];
        cfg.check()?;
    }
    if cfg.jobs > 0 {
        // A second initialisation in the same process is harmless; keep the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    }
    let n = cfg.grid();
    let art = Artifacts { dir: cfg.output_dir.clone(), files: Vec::new() };
    let mut ctx = Ctx { cfg, n, out: cli.out.clone(), plots: cli.plots.clone(), art, warnings: Vec::new() };
    match cli.command {
        Command::Validate => run_validate(&mut ctx),
        Command::Solve => run_solve(&mut ctx),
        Command::Green => run_green(&mut ctx),
        Command::KernelProbe => run_kernel_probe(&mut ctx),
        Command::CauchyDistance => run_cauchy_distance(&mut ctx),
        Command::Singular => run_singular(&mut ctx),
        Command::Asymptotics => run_asymptotics(&mut ctx),
        Command::ThreeSpheres => run_three_spheres(&mut ctx),
        Command::Sweep => run_sweep_command(&mut ctx, false),
        Command::BoundaryHolder => run_sweep_command(&mut ctx, true),
        Command::Report => run_report(&mut ctx),
    }
    .and_then(|()| {
        let escalate = ctx.cfg.on_indefinite == Escalation::Abort && !ctx.warnings.is_empty();
        let warnings = std::mem::take(&mut ctx.warnings);
        ctx.art.flush()?;
        if escalate {
            return Err(Failure::Escalated(format!("{} solver warning(s) escalated: {}", warnings.len(), warnings.join("; "))));
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("{}: configuration error: {m}", cli.command.name());
            ExitCode::from(2)
        }
        Err(Failure::Escalated(m)) => {
            eprintln!("{}: {m}", cli.command.name());
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("{}: {e:#}", cli.command.name());
            ExitCode::from(1)
        }
    }
}
