use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use optokerr::figures::{default_preset, figure_dataset, FigureOptions};
use optokerr::params::Config;
use optokerr::spectra::{integrate_variances, SpectraOptions};
use optokerr::stability::analyze;
use optokerr::steady_state::{solve_selfconsistent, SteadyBranch};
use optokerr::sweep::{phase_diagram, sweep_1d, with_threads, write_csv, Axis, AxisKind, Spacing, SweepGrid, SweepSetup};
use optokerr::{Error, OperatingPoint, SystemParams};

#[derive(Parser)]
#[command(name = "optokerr", version, about = "Steady states, stability and cooling of a Kerr optomechanical cavity")]
struct Cli {
    /// Worker threads (default: OPTOKERR_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Report errors as JSON on stderr
    #[arg(long, global = true)]
    json_errors: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file (TOML, JSON or a figure sidecar) or preset name
    #[arg(short, long, default_value = "room_temp_membrane")]
    config: String,

    /// Override a config value, e.g. --set detuning_over_kappa=3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the steady-state branches
    Steady(ConfigArgs),
    /// Routh-Hurwitz and eigenvalue stability of every branch
    Stability(ConfigArgs),
    /// Phonon number, effective temperature and optical variances on stable branches
    Cool(ConfigArgs),
    /// One-dimensional scan written as CSV
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// detuning (units of kappa), power (mW) or kerr (uHz)
        #[arg(long)]
        axis: String,
        /// START:STOP:COUNT
        #[arg(long)]
        range: String,
        /// Logarithmic spacing
        #[arg(long)]
        log: bool,
        /// Evaluate cooling on stable branches
        #[arg(long)]
        cooling: bool,
        /// Output directory (CSV to stdout when omitted)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Detuning against u_tilde/kappa or Kerr strength, written as CSV
    PhaseDiagram {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Detuning range in units of kappa, START:STOP:COUNT
        #[arg(long, default_value = "0:6:200")]
        delta: String,
        /// Second axis: u_tilde (units of kappa) or kerr (uHz)
        #[arg(long, default_value = "u_tilde")]
        second: String,
        /// Second-axis range, START:STOP:COUNT
        #[arg(long, default_value = "0:2.5:200")]
        range: String,
        #[arg(long)]
        cooling: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Regenerate the dataset of a figure panel (2a, 2b, 3, 4a, 4b, 4c, 4d, 5)
    Figure {
        id: String,
        /// Config file, sidecar or preset name (default: the figure's preset)
        #[arg(short, long)]
        config: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        grid_1d: Option<usize>,
        #[arg(long)]
        grid_2d: Option<usize>,
        #[arg(long)]
        response_points: Option<usize>,
    },
}

enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) if e.is_input() => 2,
            Failure::Core(Error::UnknownFigure(_) | Error::UnknownPreset(_) | Error::InvalidAxis(_)) => 2,
            Failure::Core(e) if e.is_convergence() => 4,
            Failure::Core(Error::Io(_)) => 1,
            Failure::Core(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }

    fn kind(&self) -> String {
        match self {
            Failure::Usage(_) => "Usage".into(),
            Failure::Core(e) => format!("{e:?}").split([' ', '(', '{']).next().unwrap_or("").to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_errors = cli.json_errors;
    let threads = match resolve_threads(cli.threads) {
        Ok(t) => t,
        Err(f) => return report(f, json_errors),
    };
    match with_threads(threads, || run(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => report(f, json_errors),
        Err(e) => report(e.into(), json_errors),
    }
}

fn report(f: Failure, json_errors: bool) -> ExitCode {
    let code = f.code();
    if json_errors {
        eprintln!("{}", json!({ "error": f.kind(), "message": f.message(), "exit_code": code }));
    } else {
        eprintln!("error: {}", f.message());
    }
    ExitCode::from(code)
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("OPTOKERR_THREADS") {
            Ok(s) if !s.trim().is_empty() => Some(
                s.trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("OPTOKERR_THREADS must be a positive integer, got `{s}`")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(Failure::Usage("thread count must be at least 1".into()));
    }
    Ok(n)
}

fn load_config(source: &str, overrides: &[String]) -> Result<(Config, Option<String>), Failure> {
    let path = Path::new(source);
    let (mut cfg, text) = if path.is_file() {
        let text = fs::read_to_string(path)?;
        (Config::parse(&text)?, Some(text))
    } else if Config::preset_names().contains(&source) {
        (Config::preset(source)?, None)
    } else {
        return Err(Failure::Usage(format!("`{source}` is neither a readable config file nor a preset ({})", Config::preset_names().join(", "))));
    };
    for o in overrides {
        cfg.set_from_str(o)?;
    }
    let (params, _) = cfg.normalize()?;
    for w in params.warnings() {
        eprintln!("warning: {w}");
    }
    Ok((cfg, text))
}

fn parse_range(kind: AxisKind, text: &str, log: bool) -> Result<Axis, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Failure::Usage(format!("range `{text}` must be START:STOP:COUNT"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    let axis = Axis { kind, start, stop, count, spacing: if log { Spacing::Log } else { Spacing::Linear } };
    axis.validate()?;
    Ok(axis)
}

fn print_json(v: &Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn branch_json(params: &SystemParams, point: &OperatingPoint, b: &SteadyBranch) -> Value {
    let s = analyze(params, b);
    json!({
        "branch_label": b.branch_label.as_str(),
        "n_c": b.n_c,
        "u_n_c_over_kappa": b.u_tilde / params.kappa,
        "kappa_tilde": b.kappa_tilde,
        "q_bar": b.q_bar,
        "c_bar": [b.c_r, b.c_i],
        "cubic_residual": b.cubic_residual(params, point),
        "stable": s.rh_stable && s.eig_stable,
        "s1": s.s1,
        "s2": s.s2,
        "s3": s.s3,
        "max_re_eig": s.max_re,
        "region": s.region().as_str(),
        "eigenvalues": s.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "agreement": s.agreement,
    })
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Steady(a) | Command::Stability(a) => {
            let (cfg, _) = load_config(&a.config, &a.overrides)?;
            let (params, point) = cfg.normalize()?;
            let state = solve_selfconsistent(&params, &point)?;
            let branches: Vec<Value> = state.branches.iter().map(|b| branch_json(&params, &point, b)).collect();
            print_json(&json!({
                "config": cfg.to_json(),
                "kerr_rad_per_s": point.kerr,
                "degenerate": state.degenerate,
                "branches": branches,
            }))
        }
        Command::Cool(a) => {
            let (cfg, _) = load_config(&a.config, &a.overrides)?;
            let (params, point) = cfg.normalize()?;
            let state = solve_selfconsistent(&params, &point)?;
            let mut rows = Vec::new();
            let mut any_stable = false;
            let mut least_unstable = f64::INFINITY;
            for b in &state.branches {
                let s = analyze(&params, b);
                let mut row = branch_json(&params, &point, b);
                if s.rh_stable && s.eig_stable {
                    any_stable = true;
                    let r = integrate_variances(&params, b, &SpectraOptions::default())?;
                    row["cooling"] = json!({
                        "t_eff_k": r.t_eff,
                        "n_m": r.n_m,
                        "n_m_clamped": r.n_m_clamped,
                        "var_q": r.var_q,
                        "var_p": r.var_p,
                        "var_x": r.var_x,
                        "var_y": r.var_y,
                        "cov_xy": r.cov_xy,
                        "delta_n_c": r.delta_n_c,
                        "squeezing_db": r.squeezing_db,
                        "rotated_squeezing_db": r.rotated_squeezing_db,
                        "linearization_suspect": r.linearization_suspect,
                        "integration": r.integration_diag,
                    });
                } else {
                    least_unstable = least_unstable.min(s.max_re);
                }
                rows.push(row);
            }
            if !any_stable {
                return Err(Error::UnstablePoint { max_re: least_unstable }.into());
            }
            print_json(&json!({ "config": cfg.to_json(), "branches": rows }))
        }
        Command::Sweep { cfg: a, axis, range, log, cooling, out } => {
            let kind = AxisKind::parse(&axis)?;
            if kind == AxisKind::UTilde {
                return Err(Failure::Usage("u_tilde axes are available in phase-diagram only".into()));
            }
            let axis = parse_range(kind, &range, log)?;
            let (cfg, _) = load_config(&a.config, &a.overrides)?;
            let setup = SweepSetup::from_config(&cfg, cooling)?;
            let grid = sweep_1d(&setup, &axis)?;
            emit(&grid, &cfg, out.as_deref(), &format!("sweep_{}", kind.as_str()))
        }
        Command::PhaseDiagram { cfg: a, delta, second, range, cooling, out } => {
            let kind = AxisKind::parse(&second)?;
            if !matches!(kind, AxisKind::UTilde | AxisKind::Kerr) {
                return Err(Failure::Usage("second axis must be u_tilde or kerr".into()));
            }
            let d = parse_range(AxisKind::Detuning, &delta, false)?;
            let s = parse_range(kind, &range, false)?;
            let (cfg, _) = load_config(&a.config, &a.overrides)?;
            let setup = SweepSetup::from_config(&cfg, cooling)?;
            let grid = phase_diagram(&setup, &d, &s)?;
            emit(&grid, &cfg, out.as_deref(), &format!("phase_{}", kind.as_str()))
        }
        Command::Figure { id, config, overrides, out, grid_1d, grid_2d, response_points } => {
            let source = match config {
                Some(c) => c,
                None => default_preset(&id)?.to_string(),
            };
            let (cfg, text) = load_config(&source, &overrides)?;
            let base = text.as_deref().and_then(FigureOptions::from_sidecar).unwrap_or_default();
            let opts = FigureOptions {
                grid_1d: grid_1d.unwrap_or(base.grid_1d),
                grid_2d: grid_2d.unwrap_or(base.grid_2d),
                response_points: response_points.unwrap_or(base.response_points),
            };
            let result = figure_dataset(&id, &cfg, &out, &opts)?;
            for e in &result.errors {
                eprintln!("warning: point {} {:?}: {}", e.axis_value, e.axis2_value, e.message);
            }
            print_json(&json!({
                "figure": id,
                "files": result.files,
                "sidecar": result.sidecar,
                "point_errors": result.errors.len(),
            }))
        }
    }
}

fn emit(grid: &SweepGrid, cfg: &Config, out: Option<&Path>, stem: &str) -> Result<(), Failure> {
    match out {
        None => {
            write_csv(grid, io::stdout().lock())?;
        }
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let name = format!("{stem}.csv");
            write_csv(grid, BufWriter::new(File::create(dir.join(&name))?))?;
            let sidecar = json!({
                "code_version": env!("CARGO_PKG_VERSION"),
                "config": cfg.to_json(),
                "grid": grid.grid_json(),
                "files": [name],
                "errors": grid.errors,
            });
            let mut f = File::create(dir.join(format!("{stem}.json")))?;
            serde_json::to_writer_pretty(&mut f, &sidecar).map_err(Error::from)?;
            writeln!(f)?;
        }
    }
    for e in &grid.errors {
        eprintln!("warning: point {} {:?}: {}", e.axis_value, e.axis2_value, e.message);
    }
    Ok(())
}
