//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::bounds::{bound_interval, grid_eval, AxisSpec, GridSpec};
use crate::bundle_io::{load_bundle, save_bundle, to_json};
use crate::characteristics::{precompute, CharacteristicBundle};
use crate::config::{Problem, RunConfig, PRESETS};
use crate::cost::ConvexCost;
use crate::error::{Error, Result};
use crate::oracle::{auto_padding, richardson_solve};
use crate::reachability::classify_grid;
use crate::table::{bound_rows, write_bounds, write_labels, write_oracle, OracleRow};

#[derive(Debug, Parser)]
#[command(name = "hjbounds", version, about = "Upper and lower value bounds for LTV differential games")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration (paper-example-6, double-integrator).
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "HJB_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the game assumptions and the cost on the time grid.
    Check,
    /// Integrate the characteristics and write a bundle.
    Precompute {
        /// Bundle path (default: the configured one, else `bundle.hjb`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a JSON dump of the bundle.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Bounds at individual points.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        time: f64,
        /// Point as comma-separated coordinates; repeatable.
        #[arg(long = "point", allow_hyphen_values = true, required = true)]
        points: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bounds on a tensor grid or on coordinate-axis slices.
    Grid {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long, allow_hyphen_values = true, required_unless_present = "slices")]
        grid: Option<String>,
        /// One axis `min:max:count` used for a slice along every coordinate.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "grid")]
        slices: Option<String>,
        /// Output file for `--grid`, directory for `--slices`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reachability labels for a level.
    Reach {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the bounds against the grid solver.
    OracleCompare {
        /// Precomputed bundle; computed from the configuration if absent.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Defaults to the configured oracle grid. Counts need `count - 1`
        /// divisible by 4.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// Padding per axis, comma-separated (default: from the speed bounds).
        #[arg(long)]
        pad: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precompute time, bundle size and per-point access times.
    Bench {
        /// Slice axis used for every coordinate.
        #[arg(long, allow_hyphen_values = true, default_value = "-1:1:151")]
        slices: String,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Where the bundle is written (default: a temporary file).
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// JSON report path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit code for an error: 2 for bad input, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        2
    } else {
        1
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match (&g.config, &g.preset) {
        (Some(path), _) => RunConfig::from_path(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => {
            return Err(Error::Invalid(format!(
                "pass --config FILE or --preset NAME (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn build_bundle(cfg: &RunConfig, p: &Problem) -> Result<CharacteristicBundle> {
    let mut b = precompute(&p.system, &p.cost, &p.levels, &p.counts, &p.grid, p.seed)?;
    b.config_hash = cfg.hash();
    Ok(b)
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_point(s: &str) -> Result<DVector<f64>> {
    let v = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("`{s}` is not a point"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(v))
}

fn parse_axis(s: &str) -> Result<AxisSpec> {
    match s.parse::<GridSpec>()? {
        GridSpec::Axes(a) if a.len() == 1 => Ok(a[0]),
        _ => Err(Error::Invalid(format!("`{s}` is not a single min:max:count axis"))),
    }
}

fn slice_specs(n: usize, axis: AxisSpec) -> Vec<GridSpec> {
    (0..n).map(|i| GridSpec::axis_slice(n, i, axis.min, axis.max, axis.count)).collect()
}

/// Random pairs for Lipschitz and midpoint-convexity spot checks.
fn cost_spot_check(cost: &ConvexCost, seed: u64) -> Vec<String> {
    let n = cost.dim();
    let l = cost.lipschitz();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for _ in 0..200 {
        let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let (gx, gy) = (cost.eval(&x), cost.eval(&y));
        let scale = 1.0 + gx.abs().max(gy.abs());
        if (gx - gy).abs() > l * (&x - &y).norm() + 1e-9 * scale {
            bad.push(format!("cost is not {l}-Lipschitz between {x:?} and {y:?}"));
        }
        if cost.eval(&((&x + &y) * 0.5)) > 0.5 * (gx + gy) + 1e-9 * scale {
            bad.push(format!("cost fails midpoint convexity between {x:?} and {y:?}"));
        }
        if bad.len() >= 5 {
            break;
        }
    }
    bad
}

fn cmd_check(cfg: &RunConfig) -> Result<i32> {
    let p = cfg.build()?;
    let report = p.system.check_assumptions(p.grid.nodes());
    let mut problems: Vec<String> = report
        .records
        .iter()
        .filter(|r| !r.aligned || !r.w_nonempty)
        .take(10)
        .map(|r| format!("t = {}: {}", r.time, r.message.as_deref().unwrap_or("trimmed set is empty")))
        .collect();
    let failed = report.records.iter().filter(|r| !r.aligned || !r.w_nonempty).count();
    if failed > problems.len() {
        problems.push(format!("... {} more failing time nodes", failed - problems.len()));
    }
    problems.extend(cost_spot_check(&p.cost, p.seed));
    let kappa = report
        .records
        .iter()
        .flat_map(|r| r.kappas.iter().copied())
        .fold(0.0f64, f64::max);
    println!(
        "nodes {}  aligned {}  max kappa {kappa}",
        report.records.len(),
        report.records.len() - failed
    );
    if problems.is_empty() && report.passed() {
        println!("check passed");
        Ok(0)
    } else {
        for pr in &problems {
            eprintln!("violation: {pr}");
        }
        eprintln!("check failed");
        Ok(2)
    }
}

fn cmd_precompute(cfg: &RunConfig, out: Option<PathBuf>, json_out: Option<PathBuf>) -> Result<i32> {
    let p = cfg.build()?;
    let start = Instant::now();
    let b = build_bundle(cfg, &p)?;
    let secs = start.elapsed().as_secs_f64();
    let path = out
        .or_else(|| cfg.output.bundle.clone())
        .unwrap_or_else(|| PathBuf::from("bundle.hjb"));
    let bytes = save_bundle(&b, &path)?;
    if let Some(j) = json_out {
        let mut w = BufWriter::new(File::create(j)?);
        serde_json::to_writer(&mut w, &to_json(&b))?;
        w.flush()?;
    }
    let per_level: Vec<String> = b
        .levels
        .levels
        .iter()
        .map(|l| format!("{}:{}", l.gamma, l.points.len()))
        .collect();
    println!(
        "characteristics {}  levels [{}]  nodes {}  wall {secs:.3} s  bundle {bytes} B -> {}",
        b.tuples.len(),
        per_level.join(" "),
        b.grid.len(),
        path.display()
    );
    Ok(0)
}

fn cmd_eval(bundle: &Path, t: f64, points: &[String], out: Option<PathBuf>) -> Result<i32> {
    let b = load_bundle(bundle)?;
    let pts = points.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>>>()?;
    if let Some(x) = pts.iter().find(|x| x.len() != b.dim()) {
        return Err(Error::Invalid(format!("point {x:?} does not have dimension {}", b.dim())));
    }
    let spec = GridSpec::Points(pts.iter().map(|x| x.iter().copied().collect()).collect());
    let rows = bound_rows(&grid_eval(&b, t, &spec)?);
    write_bounds(open_out(&out)?, b.dim(), &rows)?;
    Ok(if rows.iter().any(|r| r.flags == "error") { 1 } else { 0 })
}

fn cmd_grid(bundle: &Path, t: f64, grid: Option<String>, slices: Option<String>, out: Option<PathBuf>) -> Result<i32> {
    let b = load_bundle(bundle)?;
    let n = b.dim();
    let mut failed = false;
    if let Some(axis) = slices {
        let dir = out.unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)?;
        for (i, spec) in slice_specs(n, parse_axis(&axis)?).iter().enumerate() {
            let rows = bound_rows(&grid_eval(&b, t, spec)?);
            failed |= rows.iter().any(|r| r.flags == "error");
            let path = dir.join(format!("slice_x{}.csv", i + 1));
            write_bounds(BufWriter::new(File::create(&path)?), n, &rows)?;
            println!("{}: {} points", path.display(), rows.len());
        }
    } else {
        let spec: GridSpec = grid.expect("clap requires --grid or --slices").parse()?;
        let rows = bound_rows(&grid_eval(&b, t, &spec)?);
        failed = rows.iter().any(|r| r.flags == "error");
        write_bounds(open_out(&out)?, n, &rows)?;
    }
    Ok(if failed { 1 } else { 0 })
}

fn cmd_reach(bundle: &Path, t: f64, gamma: f64, grid: &str, out: Option<PathBuf>) -> Result<i32> {
    let b = load_bundle(bundle)?;
    let table = classify_grid(&b, t, &grid.parse()?, gamma)?;
    write_labels(open_out(&out)?, &table)?;
    let s = &table.summary;
    let (r, a, u) = s.fractions();
    eprintln!(
        "gamma {gamma}: reach {} ({:.2}%)  avoid {} ({:.2}%)  unknown {} ({:.2}%)",
        s.reach,
        100.0 * r,
        s.avoid,
        100.0 * a,
        s.unknown,
        100.0 * u
    );
    Ok(0)
}

fn cmd_oracle_compare(
    cfg: &RunConfig,
    bundle: Option<PathBuf>,
    t: f64,
    grid: Option<String>,
    pad: Option<String>,
    out: Option<PathBuf>,
) -> Result<i32> {
    let p = cfg.build()?;
    let b = match bundle {
        Some(path) => load_bundle(&path)?,
        None => build_bundle(cfg, &p)?,
    };
    let grid = grid
        .or_else(|| cfg.oracle.grid.clone())
        .ok_or_else(|| Error::Invalid("no oracle grid given".into()))?;
    let axes = match grid.parse::<GridSpec>()? {
        GridSpec::Axes(a) => a,
        GridSpec::Points(_) => unreachable!("grid strings parse to axes"),
    };
    let pad = match pad {
        Some(s) => parse_point(&s)?.iter().copied().collect(),
        None => auto_padding(&p.system, &axes, t)?,
    };
    let start = Instant::now();
    let rg = richardson_solve(&p.system, &p.cost, &axes, &pad, t, cfg.oracle.lf_options())?;
    let lf_secs = start.elapsed().as_secs_f64();
    let entries = grid_eval(&b, t, &GridSpec::Axes(axes.clone()))?;
    let (mut viol, mut viol3, mut errors) = (0usize, 0usize, 0usize);
    let rows: Vec<OracleRow> = entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let v = rg.values.values[k];
            let eps = rg.eps[k];
            let (lower, upper, mut flags) = match &e.result {
                Ok(iv) => (iv.lower, iv.upper, Vec::new()),
                Err(_) => {
                    errors += 1;
                    (f64::NAN, f64::NAN, vec!["error"])
                }
            };
            let excess = (lower - v).max(v - upper);
            if excess > eps {
                viol += 1;
                flags.push("violation");
            }
            if excess > 3.0 * eps {
                viol3 += 1;
                flags.push("violation3");
            }
            OracleRow {
                point: e.point.iter().copied().collect(),
                lower,
                oracle: v,
                upper,
                eps,
                flags: flags.join("|"),
            }
        })
        .collect();
    write_oracle(open_out(&out)?, axes.len(), &rows)?;
    eprintln!(
        "nodes {}  violations {} ({:.4}%)  beyond 3eps {}  errors {}  order {:.3}  pad {:?}  lf {lf_secs:.1} s",
        rows.len(),
        viol,
        100.0 * viol as f64 / rows.len() as f64,
        viol3,
        errors,
        rg.order,
        pad
    );
    Ok(if errors > 0 { 1 } else { 0 })
}

fn cmd_bench(cfg: &RunConfig, slices: &str, t: f64, bundle: Option<PathBuf>, out: Option<PathBuf>) -> Result<i32> {
    let p = cfg.build()?;
    let start = Instant::now();
    let b = build_bundle(cfg, &p)?;
    let precompute_s = start.elapsed().as_secs_f64();
    let tmp;
    let path = match bundle {
        Some(path) => path,
        None => {
            tmp = std::env::temp_dir().join(format!("hjbounds-bench-{}.hjb", std::process::id()));
            tmp.clone()
        }
    };
    let bytes = save_bundle(&b, &path)?;
    let load_start = Instant::now();
    let b = load_bundle(&path)?;
    let load_s = load_start.elapsed().as_secs_f64();
    if !matches!(&cfg.output.bundle, Some(p) if *p == path) && path.starts_with(std::env::temp_dir()) {
        std::fs::remove_file(&path).ok();
    }
    // sequential timing per point
    let mut times = Vec::new();
    for spec in slice_specs(b.dim(), parse_axis(slices)?) {
        for x in spec.points() {
            let s = Instant::now();
            bound_interval(&b, t, &x)?;
            times.push(s.elapsed().as_secs_f64());
        }
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let max = times.iter().copied().fold(0.0, f64::max);
    let report = json!({
        "characteristics": b.tuples.len(),
        "precompute_s": precompute_s,
        "bundle_bytes": bytes,
        "load_s": load_s,
        "points": times.len(),
        "access_mean_ms": mean * 1e3,
        "access_max_ms": max * 1e3,
        "threads": rayon::current_num_threads(),
    });
    let mut w = open_out(&out)?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    match cli.command {
        Command::Check => cmd_check(&load_config(g)?),
        Command::Precompute { out, json } => cmd_precompute(&load_config(g)?, out, json),
        Command::Eval { bundle, time, points, out } => cmd_eval(&bundle, time, &points, out),
        Command::Grid { bundle, time, grid, slices, out } => cmd_grid(&bundle, time, grid, slices, out),
        Command::Reach { bundle, time, gamma, grid, out } => cmd_reach(&bundle, time, gamma, &grid, out),
        Command::OracleCompare { bundle, time, grid, pad, out } => {
            cmd_oracle_compare(&load_config(g)?, bundle, time, grid, pad, out)
        }
        Command::Bench { slices, time, bundle, out } => cmd_bench(&load_config(g)?, &slices, time, bundle, out),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        // a second call in the same process keeps the first pool
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
