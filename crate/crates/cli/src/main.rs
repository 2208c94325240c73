use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loomlab::dimension::{box_dimension, geometric_scales};
use loomlab::hyperbolic::BandPoint;
use loomlab::intervals::{cantor_cover, sumset_coarse, IntervalSet};
use loomlab::measure::{
    check_flow_invariance, check_restriction, check_tightness, measure_from_orbit, select_section, BoxFunction, MeasureOptions,
    Orbit,
};
use loomlab::output::{fmt_sig, round_json};
use loomlab::render::{polylines_from_csv, render_svg, trajectory_polylines, Polyline};
use loomlab::surface::{design_from_E, design_summable_with_growth, DecayRule, LoomSurfaceSpec};
use loomlab::tracer::{
    busemann, slack, trace_geodesic_with, trace_horocycle_with, trajectory_csv, HoroDirection, SurfaceTangent, TraceOptions,
};
use loomlab::weaving::{
    backtracking_ray, build_crossing, gap_sweep_pattern, verify_weaving_additivity, verify_weaving_lemma, Sign, WeavingPattern,
};
use loomlab::{Exec, LoomError};

#[derive(Parser)]
#[command(name = "loomlab", version, about = "Geodesic and horocycle experiments on loom surfaces")]
struct Cli {
    /// Run every sweep on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a surface file.
    Validate { surface: PathBuf },
    /// Build a surface file from slack values or a height rule.
    Design(DesignArgs),
    /// Trace a geodesic or horocycle and write it as CSV.
    Trace(TraceArgs),
    /// Slack and Busemann value of a geodesic ray.
    Slack(StartArgs),
    /// Weaving additivity, gap sweeps and the weaving lemma.
    Weave(WeaveArgs),
    /// Box-counting dimension of sumsets.
    Dim(DimArgs),
    /// Empirical measures along the horocycle orbit of x_0.
    Measure(MeasureArgs),
    /// Draw the band model as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct DesignArgs {
    /// Slack set as JSON intervals, e.g. "[[0.69,0.7]]".
    #[arg(long = "E", alias = "e")]
    e: Option<String>,
    #[arg(long, value_enum)]
    rule: Option<Rule>,
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    #[arg(long, default_value_t = 0.6)]
    h1: f64,
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    #[arg(long, default_value_t = 2.0)]
    exponent: f64,
    #[arg(long, default_value_t = 0.5)]
    h: f64,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long, default_value_t = 1.0)]
    gap_growth: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Harmonic,
    Constant,
    Geometric,
    Power,
}

#[derive(Args)]
struct StartArgs {
    surface: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    y: f64,
    /// Direction measured from the positive band-real axis.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    angle: f64,
    #[arg(long, default_value_t = 0)]
    sheet: u8,
    #[arg(long, default_value_t = 40.0, allow_hyphen_values = true)]
    horizon: f64,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    start: StartArgs,
    #[arg(long, value_enum)]
    horocycle: Option<Horo>,
    #[arg(long, default_value_t = 0.1)]
    sample_dt: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Horo {
    Stable,
    Unstable,
}

#[derive(Args)]
struct WeaveArgs {
    #[arg(long)]
    surface: Option<PathBuf>,
    /// Comma-separated 1-based indices.
    #[arg(long, value_delimiter = ',')]
    pattern: Vec<usize>,
    /// "+" or "-".
    #[arg(long, default_value = "+", allow_hyphen_values = true)]
    sign: String,
    /// Rebuild an evenly spaced surface for each gap.
    #[arg(long, value_delimiter = ',')]
    sweep_gaps: Vec<f64>,
    /// Height used with --sweep-gaps.
    #[arg(long, default_value_t = FRAC_PI_4)]
    h: f64,
    /// Sample the weaving lemma at this slack budget.
    #[arg(long)]
    lemma_rho: Option<f64>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DimArgs {
    #[arg(long, value_enum, default_value_t = SetKind::Cantor)]
    set: SetKind,
    /// Interval file, for --set file.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    level: u32,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    ratio: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset: f64,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    m: Vec<usize>,
    #[arg(long, default_value_t = 3.0)]
    base: f64,
    #[arg(long, default_value_t = 4)]
    lo: i32,
    #[arg(long, default_value_t = 10)]
    hi: i32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SetKind {
    Cantor,
    File,
}

#[derive(Args)]
struct MeasureArgs {
    surface: PathBuf,
    /// Window half-width as a fraction of delta/4.
    #[arg(long, default_value_t = 0.8)]
    window: f64,
    #[arg(long = "T", alias = "t", value_delimiter = ',', default_value = "100,1000,10000")]
    t: Vec<f64>,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    /// eta as a fraction of delta/4.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    surface: PathBuf,
    /// Trajectory CSV files.
    #[arg(long)]
    trajectory: Vec<PathBuf>,
    /// Crossings such as "1+" or "2-".
    #[arg(long, allow_hyphen_values = true)]
    crossing: Vec<String>,
    /// Draw the core ray A_+x_0 across the surface.
    #[arg(long)]
    core: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct CliError {
    code: &'static str,
    msg: String,
    exit: u8,
}

impl From<LoomError> for CliError {
    fn from(e: LoomError) -> Self {
        let exit = if e.is_validation() {
            2
        } else if matches!(e, LoomError::Parse(_)) {
            3
        } else {
            1
        };
        CliError { code: e.code(), msg: e.to_string(), exit }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError { code: "IO", msg: format!("{}: {e}", path.display()), exit: 1 }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError { code: "USAGE", msg: msg.into(), exit: 3 }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_spec(path: &Path) -> CliResult<LoomSurfaceSpec> {
    Ok(LoomSurfaceSpec::from_json_str(&read(path)?)?)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text<T: serde::Serialize>(v: &T) -> String {
    let mut value = serde_json::to_value(v).expect("serializable");
    round_json(&mut value);
    serde_json::to_string_pretty(&value).expect("serializable") + "\n"
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    for r in rows {
        out += &line(r.clone());
    }
    out
}

fn parse_sign(s: &str) -> CliResult<Sign> {
    match s {
        "+" | "plus" => Ok(Sign::Plus),
        "-" | "minus" => Ok(Sign::Minus),
        _ => Err(usage(format!("sign must be + or -, got {s:?}"))),
    }
}

fn start_tangent(a: &StartArgs, spec: &LoomSurfaceSpec) -> CliResult<SurfaceTangent> {
    if a.sheet > 1 {
        return Err(usage(format!("sheet must be 0 or 1, got {}", a.sheet)));
    }
    let z = BandPoint::new(a.x, a.y)?;
    Ok(SurfaceTangent::new(z, a.sheet, a.angle, spec)?)
}

fn cmd_validate(path: &Path) -> CliResult<()> {
    let spec = read_spec(path)?;
    print!("{}", json_text(spec.report()));
    Ok(())
}

fn cmd_design(a: &DesignArgs) -> CliResult<()> {
    let design = if let Some(text) = &a.e {
        let ivs: Vec<[f64; 2]> = serde_json::from_str(text).map_err(|e| LoomError::Parse(format!("--E: {e}")))?;
        let e = IntervalSet::new(1e-12, ivs)?;
        design_from_E(&e, a.count, a.gap_growth)?
    } else {
        let rule = match a.rule.ok_or_else(|| usage("pass --E or --rule"))? {
            Rule::Harmonic => DecayRule::Harmonic { scale: a.scale },
            Rule::Constant => DecayRule::Constant { h: a.h },
            Rule::Geometric => DecayRule::Geometric { h1: a.h1, ratio: a.ratio },
            Rule::Power => DecayRule::PowerLaw { scale: a.scale, exponent: a.exponent },
        };
        design_summable_with_growth(rule, a.count, a.gap_growth)?
    };
    for w in &design.warnings {
        log::warn!("{w}");
    }
    emit(a.out.as_deref(), &(design.spec.to_json_string() + "\n"))?;
    if a.out.is_some() {
        let rows: Vec<Vec<String>> = design
            .spec
            .entries()
            .iter()
            .zip(&design.slacks)
            .enumerate()
            .map(|(k, (e, sl))| vec![(k + 1).to_string(), fmt_sig(e.s), fmt_sig(e.h), fmt_sig(*sl)])
            .collect();
        print!("{}", table(&["k", "s", "h", "slack"], &rows));
    }
    Ok(())
}

fn cmd_trace(a: &TraceArgs) -> CliResult<()> {
    let spec = read_spec(&a.start.surface)?;
    let start = start_tangent(&a.start, &spec)?;
    let opts = TraceOptions { sample_dt: a.sample_dt };
    let tr = match a.horocycle {
        None => trace_geodesic_with(&start, a.start.horizon, &spec, opts)?,
        Some(Horo::Stable) => trace_horocycle_with(&start, a.start.horizon, &spec, HoroDirection::Stable, opts)?,
        Some(Horo::Unstable) => trace_horocycle_with(&start, a.start.horizon, &spec, HoroDirection::Unstable, opts)?,
    };
    emit(a.out.as_deref(), &trajectory_csv(&tr))?;
    if a.out.is_some() {
        let crossings = loomlab::tracer::crossing_sequence(&tr);
        let rows = vec![vec![
            fmt_sig(tr.total_time),
            crossings.len().to_string(),
            fmt_sig(slack(&tr).value),
            tr.arcs.last().map_or(0, |x| x.sheet).to_string(),
        ]];
        print!("{}", table(&["time", "crossings", "slack", "final_sheet"], &rows));
    }
    Ok(())
}

fn cmd_slack(a: &StartArgs) -> CliResult<()> {
    let spec = read_spec(&a.surface)?;
    let start = start_tangent(a, &spec)?;
    let tr = trace_geodesic_with(&start, a.horizon, &spec, TraceOptions::default())?;
    let s = slack(&tr);
    let b = busemann(&start, a.horizon, &spec)?;
    let rows = vec![vec![
        fmt_sig(s.horizon),
        fmt_sig(s.value),
        s.diverging.to_string(),
        fmt_sig(b.value),
        b.minus_infinity.to_string(),
    ]];
    print!("{}", table(&["horizon", "slack", "diverging", "busemann", "minus_infinity"], &rows));
    Ok(())
}

fn cmd_weave(a: &WeaveArgs, exec: Exec) -> CliResult<()> {
    let sign = parse_sign(&a.sign)?;
    if !a.sweep_gaps.is_empty() {
        if a.pattern.is_empty() {
            return Err(usage("--sweep-gaps needs --pattern"));
        }
        let sweep = gap_sweep_pattern(&a.pattern, a.h, &a.sweep_gaps, exec)?;
        let rows: Vec<Vec<String>> = a
            .sweep_gaps
            .iter()
            .zip(&sweep.reports)
            .map(|(g, r)| vec![fmt_sig(*g), fmt_sig(r.traced_slack), fmt_sig(r.predicted_slack), fmt_sig(r.abs_error)])
            .collect();
        print!("{}", table(&["gap", "traced_slack", "predicted_slack", "abs_error"], &rows));
        println!("non-increasing error (floor {}): {}", fmt_sig(sweep.error_floor), sweep.monotone);
        if let Some(p) = &a.out {
            emit(Some(p), &json_text(&sweep))?;
        }
        return Ok(());
    }
    let path = a.surface.as_deref().ok_or_else(|| usage("pass --surface or --sweep-gaps"))?;
    let spec = read_spec(path)?;
    if let Some(rho) = a.lemma_rho {
        let r = verify_weaving_lemma(rho, &spec, a.samples, a.seed)?;
        let rows = vec![vec![
            fmt_sig(r.rho),
            r.accepted.to_string(),
            r.k0.to_string(),
            fmt_sig(r.sufficient_s),
            r.empirical_s.map_or("none".into(), fmt_sig),
            r.all_weaving_beyond_sufficient_s.to_string(),
        ]];
        print!("{}", table(&["rho", "accepted", "k0", "S", "empirical_S", "all_weaving_beyond_S"], &rows));
        if spec.len() >= 2 {
            let b = backtracking_ray(2, 1, &spec)?;
            println!("backtracking ray [2,1]: slack {} vs min gap {}", fmt_sig(slack(&b.trajectory).value), fmt_sig(spec.gap_floor()));
        }
        if let Some(p) = &a.out {
            emit(Some(p), &json_text(&r))?;
        }
        return Ok(());
    }
    let w = WeavingPattern::new(a.pattern.clone(), sign, &spec)?;
    let r = verify_weaving_additivity(&w, &spec)?;
    let rows = vec![vec![fmt_sig(r.traced_slack), fmt_sig(r.predicted_slack), fmt_sig(r.abs_error), fmt_sig(r.min_gap), fmt_sig(r.horizon)]];
    print!("{}", table(&["traced_slack", "predicted_slack", "abs_error", "min_gap", "horizon"], &rows));
    if let Some(p) = &a.out {
        emit(Some(p), &json_text(&r))?;
    }
    Ok(())
}

fn cmd_dim(a: &DimArgs, exec: Exec) -> CliResult<()> {
    let set = match a.set {
        SetKind::Cantor => cantor_cover(a.level, a.ratio, a.offset)?,
        SetKind::File => {
            let path = a.file.as_deref().ok_or_else(|| usage("--set file needs --file"))?;
            serde_json::from_str::<IntervalSet>(&read(path)?).map_err(|e| LoomError::Parse(e.to_string()))?
        }
    };
    let scales = geometric_scales(a.base, a.lo, a.hi);
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for &m in &a.m {
        let tol = scales.iter().copied().fold(f64::INFINITY, f64::min);
        let s = sumset_coarse(&set, m, tol, exec)?;
        let est = box_dimension(&s, &scales, exec)?;
        rows.push(vec![m.to_string(), fmt_sig(est.value), fmt_sig(est.slope), fmt_sig(est.r2), s.len().to_string()]);
        estimates.push(serde_json::json!({"m": m, "estimate": est}));
    }
    print!("{}", table(&["m", "dimension", "slope", "r2", "intervals"], &rows));
    if let Some(p) = &a.out {
        emit(Some(p), &json_text(&estimates))?;
    }
    Ok(())
}

fn cmd_measure(a: &MeasureArgs, exec: Exec) -> CliResult<()> {
    let spec = read_spec(&a.surface)?;
    let sec = select_section(&spec, a.eta)?;
    let r_win = a.window * sec.delta / 4.0;
    let t_max = a.t.iter().copied().fold(0.0, f64::max);
    let orbit = Orbit::trace(&spec, t_max)?;
    println!(
        "delta {}  c {}  d {}  eta {}  R {}  crossings {}",
        fmt_sig(sec.delta),
        fmt_sig(sec.c),
        fmt_sig(sec.d),
        fmt_sig(sec.eta),
        fmt_sig(r_win),
        orbit.crossings()
    );
    let eta_tight = 0.5 * a.eps * r_win / 4.0;
    let mut rows = Vec::new();
    let mut last = None;
    for &t in &a.t {
        let mu = measure_from_orbit(&orbit, &sec, r_win, t, MeasureOptions::default(), exec)?;
        let tight = check_tightness(&mu, a.eps, eta_tight)?;
        let f = BoxFunction { lo: [-r_win / 2.0, -1.0, -1.0], hi: [r_win / 2.0, 1.0, 1.0], value: 1.0 };
        let inv = check_flow_invariance(&mu, r_win / 4.0, &f)?;
        let restr = check_restriction(&orbit, &sec, r_win / 2.0, r_win, t, MeasureOptions::default())?;
        rows.push(vec![
            fmt_sig(t),
            fmt_sig(mu.occupation_time),
            mu.visits.len().to_string(),
            fmt_sig(mu.weights.iter().sum()),
            fmt_sig(tight.inner_mass),
            format!("{}<={}", fmt_sig(inv.difference), fmt_sig(inv.bound + inv.binning_error)),
            format!("{}<={}", fmt_sig(restr.max_bin_discrepancy), fmt_sig(restr.tolerance)),
        ]);
        last = Some(mu);
    }
    print!("{}", table(&["T", "occupation", "visits", "mass", "inner_mass", "invariance", "restriction"], &rows));
    if let (Some(p), Some(mu)) = (&a.out, last) {
        let mut v = mu.to_json();
        round_json(&mut v);
        emit(Some(p), &(serde_json::to_string_pretty(&v).expect("json") + "\n"))?;
    }
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> CliResult<()> {
    let spec = read_spec(&a.surface)?;
    let mut lines: Vec<Polyline> = Vec::new();
    for p in &a.trajectory {
        lines.extend(polylines_from_csv(&read(p)?, &spec)?);
    }
    for c in &a.crossing {
        let (k, sign) = c.split_at(c.len().saturating_sub(1));
        let k: usize = k.parse().map_err(|_| usage(format!("bad crossing {c:?}")))?;
        let eta = build_crossing(k, parse_sign(sign)?, &spec)?;
        lines.extend(trajectory_polylines(&eta.chain.trajectory, 400));
    }
    if a.core {
        let last = spec.entries().last().map_or(0.0, |e| e.s);
        let first = spec.entries()[0].s;
        let start = SurfaceTangent::along_core(first - 5.0, 0);
        let tr = trace_geodesic_with(&start, last - first + 10.0, &spec, TraceOptions::default())?;
        lines.extend(trajectory_polylines(&tr, 50));
    }
    emit(a.out.as_deref(), &render_svg(&spec, &lines))
}

fn run(cli: Cli) -> CliResult<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match &cli.cmd {
        Cmd::Validate { surface } => cmd_validate(surface),
        Cmd::Design(a) => cmd_design(a),
        Cmd::Trace(a) => cmd_trace(a),
        Cmd::Slack(a) => cmd_slack(a),
        Cmd::Weave(a) => cmd_weave(a, exec),
        Cmd::Dim(a) => cmd_dim(a, exec),
        Cmd::Measure(a) => cmd_measure(a, exec),
        Cmd::Render(a) => cmd_render(a),
    }
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("LOOMLAB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| usage(format!("LOOMLAB_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(usage("LOOMLAB_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError { code: "THREADS", msg: e.to_string(), exit: 1 })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("error: USAGE: {first}");
            return ExitCode::from(3);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code, e.msg.replace('\n', " "));
            ExitCode::from(e.exit)
        }
    }
}
