mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use serde_json::json;

use experiments::Outcome;

#[derive(Parser)]
#[command(name = "magdecay", version, about = "Dispersive and spectral experiments for 3D magnetic Schrodinger operators")]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the grid size.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Override the box side.
    #[arg(long)]
    box_l: Option<f64>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum Command {
    /// Function-space norms of the potentials.
    Norms,
    /// Eigenvalues, Birman-Schwinger count and zero regularity.
    Spectrum,
    /// Dispersive decay exponent of a gaussian.
    Decay,
    /// Wave kernel traces and their bounds.
    Wave,
    /// Ellipsoidal quadrature self-checks.
    Quadrature,
    /// Rho-kernel assembly and algebra checks.
    Algebra,
    /// Every experiment.
    All,
}

fn run(cli: &Cli) -> Result<bool, String> {
    let bytes = std::fs::read(&cli.config).map_err(|e| format!("{}: {e}", cli.config.display()))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| format!("config is not UTF-8: {e}"))?;
    let mut cfg = config::parse(text)?;
    if let Some(n) = cli.grid_n {
        cfg.grid.n = n;
    }
    if let Some(l) = cli.box_l {
        cfg.grid.l = l;
    }
    let grid = cfg.grid.build()?;
    let out_dir = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("magdecay-out"));

    let selected = |c: Command| cli.command == c || cli.command == Command::All;
    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut timings = serde_json::Map::new();
    let mut timed = |name: &str, f: &mut dyn FnMut() -> Result<Outcome, String>| -> Result<Outcome, String> {
        let start = Instant::now();
        let o = f()?;
        timings.insert(name.into(), json!(start.elapsed().as_secs_f64()));
        Ok(o)
    };
    if selected(Command::Norms) {
        outcomes.push(timed("norms", &mut || experiments::norms(&cfg, grid))?);
    }
    if selected(Command::Spectrum) {
        outcomes.push(timed("spectrum", &mut || experiments::spectrum(&cfg, grid).map(|r| r.0))?);
    }
    if selected(Command::Decay) {
        outcomes.push(timed("decay", &mut || experiments::decay(&cfg, grid))?);
    }
    if selected(Command::Wave) {
        outcomes.push(timed("wave", &mut || experiments::wave(&cfg, grid))?);
    }
    if selected(Command::Quadrature) {
        outcomes.push(timed("quadrature", &mut || experiments::quadrature(&cfg))?);
    }
    if selected(Command::Algebra) {
        outcomes.push(timed("algebra", &mut || experiments::algebra(&cfg))?);
    }

    let report = output::report(&bytes, &grid, &outcomes);
    let finished = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let timestamps = json!({ "finished_unix": finished, "seconds": timings });
    output::write_all(&out_dir, &report, &outcomes, cli.plots, &timestamps)?;

    let mut ok = true;
    for o in &outcomes {
        for a in &o.assertions {
            let tag = if a.pass { "ok" } else { "FAILED" };
            eprintln!("{} {}: {:e} (tolerance {:e}) {tag}", o.name, a.name, a.value, a.tolerance);
            ok &= a.pass;
        }
    }
    eprintln!("wrote {}", out_dir.display());
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("MAGDECAY_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
