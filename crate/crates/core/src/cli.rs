//! Command-line front end. Every subcommand reads one [`RunConfig`] and
//! writes into a directory named after the config hash, so identical
//! configs reproduce identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::arrows::{coalescence_check, slope_extremes_walk, ArrowField, ArrowFieldSpec};
use crate::config::{Estimator, RunConfig, StatsField};
use crate::error::Error;
use crate::flow::{integrate, spacetime_integrate, SpaceTimeField, Trajectory, VectorField};
use crate::geom::Vec2;
use crate::gridfile;
use crate::mollify::{build_tile_field, CachedGrid, Convolver, EvalMode, Kernel, TileField, TiledField, Which};
use crate::poisson::{DeformedField, WarpMap};
use crate::potential::Tessellation;
use crate::stats::{birkhoff_average, mixing_cesaro, slope_record, IndicatorPair};

pub const MANIFEST: &str = "manifest.json";
pub const VR_FILE: &str = "Vr.dwgrid";
pub const VU_FILE: &str = "Vu.dwgrid";

/// Points sampled for the nondegeneracy constant, on top of the grid nodes.
const NONDEGENERACY_SAMPLES: usize = 100_000;
const NONDEGENERACY_SEED: u64 = 0xc0ffee;

#[derive(Debug)]
pub enum CliError {
    /// Bad input: config, flags or missing prerequisites. Exit code 1.
    User(String),
    /// Everything else. Exit code 2.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::SlopeUndefined { .. }
            | Error::NonInvertible(_)
            | Error::GridFormat(_) => CliError::User(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("i/o error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "corridors",
    version,
    about = "Build up-right random vector fields on the plane and integrate their flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Precompute the V_r / V_u grids and their manifest.
    BuildField {
        #[command(flatten)]
        common: Common,
        /// Rebuild even if a matching field directory exists.
        #[arg(long)]
        force: bool,
    },
    /// Integrate trajectories of Ψ (or Φ with the warp enabled).
    Integrate(Common),
    /// Follow the discrete arrow walk.
    Walk(Common),
    /// Run the configured estimator.
    Stats(Common),
    /// Write auxiliary objects as JSON or CSV.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        what: ExportItem,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set grid.resolution=256`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub max_time: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExportItem {
    /// Cells, vertices and affine forms of the tile.
    Tessellation,
    /// Realized points of the horizontal point process.
    PointsX,
    /// Realized points of the vertical point process.
    PointsY,
    /// The fully resolved configuration.
    Config,
}

impl Common {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(d) = &self.output_dir {
            overrides.push(format!("output_dir={}", toml_string(&d.to_string_lossy())));
        }
        if let Some(d) = self.delta {
            overrides.push(format!("grid.delta={d:?}"));
        }
        if let Some(r) = self.resolution {
            overrides.push(format!("grid.resolution={r}"));
        }
        if let Some(t) = self.max_time {
            overrides.push(format!("integrator.max_time={t:?}"));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("stats.seed={s}"));
        }
        let text = match &self.config {
            Some(p) => {
                fs::read_to_string(p).map_err(|e| CliError::User(format!("cannot read config {}: {e}", p.display())))?
            }
            None => String::new(),
        };
        Ok(RunConfig::from_toml_with(&text, &overrides)?)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: &Command) -> CliResult<Value> {
    match cmd {
        Command::BuildField { common, force } => {
            let cfg = common.resolve()?;
            let m = build_field(&cfg, *force)?;
            Ok(serde_json::to_value(m).expect("manifest serializes"))
        }
        Command::Integrate(common) => run_integrate(&common.resolve()?),
        Command::Walk(common) => run_walk(&common.resolve()?),
        Command::Stats(common) => run_stats(&common.resolve()?),
        Command::Export { common, what } => run_export(&common.resolve()?, *what),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldManifest {
    pub field_hash: String,
    pub delta: f64,
    pub resolution: usize,
    pub tol: f64,
    /// Max component error of the interpolated grid on held-out points.
    pub max_interp_error: f64,
    /// min(Ψ¹ + Ψ²) over the grid nodes and the sampled points.
    pub nondegeneracy: f64,
    pub nondegeneracy_samples: usize,
}

fn read_manifest(dir: &Path) -> CliResult<Option<FieldManifest>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::User(format!("{} is corrupt: {e}", path.display())))
}

/// min of V¹ + V² over the nodes and a fixed random sample of the tile.
pub fn nondegeneracy(grid: &CachedGrid, samples: usize, seed: u64) -> f64 {
    let mut c = grid.nodes.iter().map(|v| v.x + v.y).fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let v = grid.eval(Vec2::new(rng.gen(), rng.gen()));
        c = c.min(v.x + v.y);
    }
    c
}

/// Build the grids for `cfg.grid` unless an identical field directory exists.
pub fn build_field(cfg: &RunConfig, force: bool) -> CliResult<FieldManifest> {
    let dir = cfg.field_dir();
    if !force {
        if let Some(m) = read_manifest(&dir)? {
            if m.field_hash == cfg.field_hash() && dir.join(VR_FILE).exists() && dir.join(VU_FILE).exists() {
                return Ok(m);
            }
        }
    }
    fs::create_dir_all(&dir)?;
    let g = &cfg.grid;
    let conv = Convolver::with_delta(g.delta)?;
    let grid = CachedGrid::build(&conv, g.resolution, g.tol)?;
    gridfile::save(&dir.join(VR_FILE), &grid, Which::Vr)?;
    gridfile::save(&dir.join(VU_FILE), &grid, Which::Vu)?;
    let manifest = FieldManifest {
        field_hash: cfg.field_hash(),
        delta: g.delta,
        resolution: g.resolution,
        tol: g.tol,
        max_interp_error: grid.max_interp_error,
        nondegeneracy: nondegeneracy(&grid, NONDEGENERACY_SAMPLES, NONDEGENERACY_SEED),
        nondegeneracy_samples: NONDEGENERACY_SAMPLES,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// The tile pair for `cfg`: quadrature in exact mode, else the prebuilt grid.
pub fn load_tile(cfg: &RunConfig) -> CliResult<TileField> {
    let g = &cfg.grid;
    if g.exact {
        let tess = Arc::new(Tessellation::new(g.delta)?);
        let kernel = Kernel::new(g.delta)?;
        return Ok(build_tile_field(
            tess,
            kernel,
            Which::Vr,
            EvalMode::ExactQuadrature { tol: g.tol },
        )?);
    }
    let dir = cfg.field_dir();
    let manifest = read_manifest(&dir)?.ok_or_else(|| {
        CliError::User(format!(
            "no field manifest in {}; run `corridors build-field` with the same config first",
            dir.display()
        ))
    })?;
    let (mut grid, which) = gridfile::load(&dir.join(VR_FILE))?;
    if which != Which::Vr || grid.resolution != g.resolution || grid.delta != g.delta {
        return Err(CliError::User(format!(
            "{} does not match the config; rebuild with `corridors build-field --force`",
            dir.display()
        )));
    }
    grid.max_interp_error = manifest.max_interp_error;
    Ok(TileField::from_grid(Which::Vr, grid))
}

pub fn warp_map(cfg: &RunConfig) -> CliResult<WarpMap> {
    let w = &cfg.warp;
    if w.lattice_hook {
        Ok(WarpMap::lattice())
    } else {
        Ok(WarpMap::poisson(w.intensity, w.seed_x, w.seed_y)?)
    }
}

/// Ψ, or Φ when the warp is enabled.
pub fn plane_field(cfg: &RunConfig, tile: TileField) -> CliResult<Box<dyn VectorField>> {
    let psi = TiledField::new(cfg.arrows.build()?, tile);
    if cfg.warp.enabled {
        Ok(Box::new(DeformedField::new(Arc::new(warp_map(cfg)?), psi)))
    } else {
        Ok(Box::new(psi))
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn prepare_run_dir(cfg: &RunConfig, sub: &str) -> CliResult<PathBuf> {
    let dir = cfg.run_dir(sub);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(dir)
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn slope_summary(traj: &Trajectory, cfg: &RunConfig) -> Value {
    match slope_record(traj, cfg.integrate.burn_in, &cfg.integrate.thresholds) {
        Ok(rec) => json!({
            "min": rec.min(),
            "max": rec.max(),
            "crossings": rec.crossings,
        }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn run_integrate(cfg: &RunConfig) -> CliResult<Value> {
    let tile = load_tile(cfg)?;
    let field = plane_field(cfg, tile.clone())?;
    let dir = prepare_run_dir(cfg, "integrate")?;
    let psi = TiledField::new(cfg.arrows.build()?, tile);
    let warp = if cfg.warp.enabled { Some(warp_map(cfg)?) } else { None };
    let mut runs = Vec::new();
    for (k, s) in cfg.integrate.starts.iter().enumerate() {
        let z = Vec2::new(s[0], s[1]);
        let traj = integrate(&field, z, &cfg.integrator)?;
        traj.write_csv(create(&dir.join(format!("trajectory_{k}.csv")))?)?;
        traj.write_events_csv(create(&dir.join(format!("events_{k}.csv")))?)?;
        let mut entry = json!({
            "start": [z.x, z.y],
            "end": [traj.end().x, traj.end().y],
            "end_time": traj.end_time(),
            "crossings": traj.events.len(),
            "slope": slope_summary(&traj, cfg),
        });
        if let Some(w) = &warp {
            entry["conjugacy_residual"] = json!(conjugacy(w, &psi, &traj, cfg, &dir, k)?);
        }
        runs.push(entry);
    }
    let mut summary = json!({ "run_dir": dir, "runs": runs });
    if cfg.spacetime.enabled {
        summary["spacetime"] = run_spacetime(cfg, field, &dir)?;
    }
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Push the Φ trajectory through φ, compare with the Ψ trajectory from φ(z)
/// at the shared stored times, and return the largest sup-norm gap.
fn conjugacy(
    w: &WarpMap,
    psi: &TiledField,
    traj: &Trajectory,
    cfg: &RunConfig,
    dir: &Path,
    k: usize,
) -> CliResult<f64> {
    let warped: Vec<Vec2> = traj
        .points
        .iter()
        .map(|p| w.warp_eval(p.x, p.y))
        .collect::<crate::Result<_>>()?;
    let mut out = create(&dir.join(format!("warped_{k}.csv")))?;
    writeln!(out, "t,x,y")?;
    for (t, p) in traj.times.iter().zip(&warped) {
        writeln!(out, "{t:?},{:?},{:?}", p.x, p.y)?;
    }
    out.flush()?;
    let reference = integrate(psi, warped[0], &cfg.integrator)?;
    Ok(conjugacy_residual(&traj.times, &warped, &reference))
}

/// Sup-norm distance between `points` and `reference` at the times both store.
pub fn conjugacy_residual(times: &[f64], points: &[Vec2], reference: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    let mut j = 0;
    for (t, p) in times.iter().zip(points) {
        while j < reference.times.len() && reference.times[j] < *t {
            j += 1;
        }
        if j < reference.times.len() && reference.times[j] == *t {
            worst = worst.max((*p - reference.points[j]).max_abs());
        }
    }
    worst
}

fn run_spacetime(cfg: &RunConfig, field: Box<dyn VectorField>, dir: &Path) -> CliResult<Value> {
    let st = &cfg.spacetime;
    let f = SpaceTimeField::new(field, st.u0, st.u1)?;
    let path = spacetime_integrate(&f, st.t0, st.x0, st.t_end, &cfg.integrator)?;
    path.write_csv(create(&dir.join("spacetime.csv"))?)?;
    let vel = path.running_velocity();
    // extremes over the second half, where the start no longer dominates
    let tail = &vel[vel.len() / 2..];
    let lo = tail.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let hi = tail.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(json!({
        "x_end": path.xs.last(),
        "velocity_min": finite_or_null(lo),
        "velocity_max": finite_or_null(hi),
    }))
}

pub fn run_walk(cfg: &RunConfig) -> CliResult<Value> {
    let field = cfg.arrows.build()?;
    let dir = prepare_run_dir(cfg, "walk")?;
    let wc = &cfg.walk;
    let start = (wc.start[0], wc.start[1]);
    let walk = field.walk(start, wc.steps);
    walk.write_csv(create(&dir.join("walk.csv"))?)?;
    let end = walk.end();
    let slope = match slope_extremes_walk(&walk, wc.burn_in) {
        Ok((lo, hi)) => json!({
            "min": lo.to_string(), "max": hi.to_string(),
            "min_value": lo.to_f64(), "max_value": hi.to_f64(),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mut summary = json!({
        "run_dir": dir,
        "start": [start.0, start.1],
        "end": [end.0, end.1],
        "steps": wc.steps,
        "slope": slope,
    });
    if !wc.coalesce_with.is_empty() {
        let mut starts = vec![start];
        starts.extend(wc.coalesce_with.iter().map(|s| (s[0], s[1])));
        summary["coalescence"] = json!(coalescence_check(&field, &starts, wc.steps)?);
    }
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn stats_field(cfg: &RunConfig) -> CliResult<Box<dyn VectorField>> {
    match cfg.stats.field {
        StatsField::Psi => plane_field(cfg, load_tile(cfg)?),
        StatsField::ArrowIndicators => {
            let second = ArrowFieldSpec::Iid {
                p_right: 0.5,
                seed: cfg.stats.second_seed,
            }
            .build()?;
            Ok(Box::new(IndicatorPair {
                first: cfg.arrows.build()?,
                second,
            }))
        }
    }
}

pub fn run_stats(cfg: &RunConfig) -> CliResult<Value> {
    let s = &cfg.stats;
    let center = Vec2::new(s.center[0], s.center[1]);
    let record = match s.estimator {
        Estimator::Birkhoff => {
            let field = stats_field(cfg)?;
            let obs = s.observable;
            let mut est = birkhoff_average(&field, |v| obs.apply(v), center, s.radius, s.samples, s.seed)?;
            est.parameters["observable"] = json!(obs);
            json!({ "estimator": "birkhoff", "result": est })
        }
        Estimator::Mixing => {
            let field = stats_field(cfg)?;
            let est = mixing_cesaro(
                &field, s.event_a, s.event_b, center, s.radius, s.samples, s.shifts, s.seed,
            )?;
            json!({ "estimator": "mixing", "result": est })
        }
        Estimator::Slope => {
            let field = plane_field(cfg, load_tile(cfg)?)?;
            let starts: Vec<Value> = cfg
                .integrate
                .starts
                .iter()
                .map(|s| {
                    let traj = integrate(&field, Vec2::new(s[0], s[1]), &cfg.integrator)?;
                    Ok(json!({ "start": s, "slope": slope_summary(&traj, cfg) }))
                })
                .collect::<crate::Result<_>>()?;
            json!({ "estimator": "slope", "horizon": cfg.integrator.max_time, "runs": starts })
        }
    };
    let dir = prepare_run_dir(cfg, "stats")?;
    write_json(&dir.join("estimate.json"), &record)?;
    Ok(json!({ "run_dir": dir, "record": record }))
}

pub fn run_export(cfg: &RunConfig, what: ExportItem) -> CliResult<Value> {
    let dir = prepare_run_dir(cfg, "export")?;
    let path = match what {
        ExportItem::Tessellation => {
            let p = dir.join("tessellation.json");
            fs::write(&p, Tessellation::new(cfg.grid.delta)?.to_json())?;
            p
        }
        ExportItem::PointsX | ExportItem::PointsY => {
            let w = warp_map(cfg)?;
            let (name, process) = match what {
                ExportItem::PointsX => ("points_x.csv", &w.mu),
                _ => ("points_y.csv", &w.nu),
            };
            let p = dir.join(name);
            process.write_csv(create(&p)?)?;
            p
        }
        ExportItem::Config => {
            let p = dir.join("config.toml");
            fs::write(&p, cfg.to_toml())?;
            p
        }
    };
    Ok(json!({ "written": path }))
}

/// Arrow field for `cfg` without touching any grid; used by callers that
/// only need the discrete layer.
pub fn arrow_field(cfg: &RunConfig) -> CliResult<ArrowField> {
    Ok(cfg.arrows.build()?)
}
