use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

use liouville_lab::config::RunConfig;
use liouville_lab::report::{emit, run_stages, Consistency, StageError, Stages};
use liouville_lab::{catalogue, Error};

const DEFAULT_OUTPUT_DIR: &str = "liouville-lab-out";

#[derive(Parser)]
#[command(name = "liouville-lab", version, about = "Liouville criterion checks, 1D harmonic oracle and reflection coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the dispersion criterion pipeline.
    Criterion(RunArgs),
    /// Build the exact 1D harmonic profile and classify its tails.
    Harmonic1d(RunArgs),
    /// Simulate the reflection coupling.
    Couple(RunArgs),
    /// Run every configured stage and cross-check the verdicts.
    Full(RunArgs),
    /// List built-in fields.
    Catalogue,
}

/// Flags mirror the config file keys and win over them.
#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,

    /// Catalogue field name.
    #[arg(long, conflicts_with = "drift")]
    field: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Option<Vec<f64>>,
    /// Drift component expression (repeat once per coordinate).
    #[arg(long, allow_hyphen_values = true)]
    drift: Vec<String>,
    /// Diffusion: one scalar expression (times I) or d² row-major entries.
    #[arg(long, allow_hyphen_values = true)]
    diffusion: Vec<String>,

    #[arg(long)]
    window_radius: Option<f64>,
    #[arg(long)]
    radii_min: Option<f64>,
    #[arg(long)]
    radii_max: Option<f64>,
    #[arg(long)]
    radii_points: Option<usize>,
    #[arg(long)]
    n_pairs: Option<usize>,
    #[arg(long)]
    tail_fraction: Option<f64>,
    #[arg(long)]
    mu_grid: Option<usize>,

    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,

    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    couple_radius: Option<f64>,
    #[arg(long)]
    escape_radius: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y0: Option<Vec<f64>>,
}

fn section<'a>(table: &'a mut Table, key: &str) -> Result<&'a mut Table, Error> {
    table
        .entry(key)
        .or_insert_with(|| Value::Table(Table::new()))
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` must be a table")))
}

fn set<T: Into<Value>>(table: &mut Table, key: &str, v: Option<T>) {
    if let Some(v) = v {
        table.insert(key.to_string(), v.into());
    }
}

fn floats(v: Option<Vec<f64>>) -> Option<Value> {
    v.map(|v| Value::Array(v.into_iter().map(Value::Float).collect()))
}

fn int(v: Option<usize>) -> Option<Value> {
    v.map(|v| Value::Integer(v as i64))
}

impl RunArgs {
    fn load(&self, stages: Stages) -> Result<RunConfig, Error> {
        let mut table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                text.parse::<Table>().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        set(&mut table, "seed", self.seed.map(|s| Value::Integer(s as i64)));
        set(&mut table, "output_dir", self.output_dir.as_ref().map(|p| p.display().to_string()));

        if self.field.is_some() || !self.drift.is_empty() {
            table.remove("field");
        }
        if self.field.is_some() || !self.drift.is_empty() || self.dim.is_some() || self.params.is_some() {
            let f = section(&mut table, "field")?;
            if let Some(name) = &self.field {
                f.insert("kind".into(), "catalogue".into());
                f.insert("name".into(), name.as_str().into());
            }
            if !self.drift.is_empty() {
                f.insert("kind".into(), "expression".into());
                f.insert("drift".into(), self.drift.clone().into());
                let diffusion = if self.diffusion.is_empty() { vec!["1".to_string()] } else { self.diffusion.clone() };
                f.insert("diffusion".into(), diffusion.into());
                f.entry("dim").or_insert(Value::Integer(self.drift.len() as i64));
            }
            set(f, "dim", int(self.dim));
            set(f, "params", floats(self.params.clone()));
        }

        {
            let c = section(&mut table, "criterion")?;
            set(c, "window_radius", self.window_radius);
            set(c, "n_pairs", int(self.n_pairs));
            set(c, "tail_fraction", self.tail_fraction);
            set(c, "mu_grid", int(self.mu_grid));
            if self.radii_min.is_some() || self.radii_max.is_some() || self.radii_points.is_some() {
                let defaults = liouville_lab::CriterionConfig::default().radii;
                let r = section(c, "radii")?;
                r.entry("min").or_insert(Value::Float(defaults.min));
                r.entry("max").or_insert(Value::Float(defaults.max));
                r.entry("points").or_insert(Value::Integer(defaults.points as i64));
                r.entry("log_spaced").or_insert(Value::Boolean(defaults.log_spaced));
                set(r, "min", self.radii_min);
                set(r, "max", self.radii_max);
                set(r, "points", int(self.radii_points));
            }
        }

        // harmonic1d runs on defaults; `full` only runs configured stages
        let oracle_requested = self.x_max.is_some() || self.tol.is_some() || !stages.criterion;
        if stages.oracle && oracle_requested {
            let o = section(&mut table, "oracle")?;
            set(o, "x_max", self.x_max);
            set(o, "tol", self.tol);
        }

        let coupling_flags = self.mu.is_some()
            || self.dt.is_some()
            || self.t_max.is_some()
            || self.n_paths.is_some()
            || self.couple_radius.is_some()
            || self.escape_radius.is_some()
            || self.x0.is_some()
            || self.y0.is_some();
        if stages.coupling && coupling_flags {
            let c = section(&mut table, "coupling")?;
            set(c, "mu", self.mu);
            set(c, "dt", self.dt);
            set(c, "t_max", self.t_max);
            set(c, "n_paths", int(self.n_paths));
            set(c, "couple_radius", self.couple_radius);
            set(c, "escape_radius", self.escape_radius);
            set(c, "x0", floats(self.x0.clone()));
            set(c, "y0", floats(self.y0.clone()));
        }
        if !table.contains_key("seed") {
            return Err(Error::Config("a seed is required (--seed or `seed` in the config file)".into()));
        }
        RunConfig::from_table(table)
    }
}

fn execute(args: &RunArgs, stages: Stages, command: &str) -> Result<Consistency, StageError> {
    let config = args.load(stages).map_err(|error| StageError { stage: "config", error })?;
    if stages.oracle && !stages.criterion && config.oracle.is_none() {
        return Err(StageError {
            stage: "config",
            error: Error::Config("harmonic1d needs an [oracle] section or --x-max".into()),
        });
    }
    if stages.coupling && !stages.oracle && config.coupling.is_none() {
        return Err(StageError {
            stage: "config",
            error: Error::Config(format!("{command} needs a [coupling] section or --x0/--y0")),
        });
    }
    let bundle = run_stages(&config, stages)?;
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    for path in emit(&bundle, &dir)? {
        println!("{}", path.display());
    }
    if let Some(c) = &bundle.criterion {
        println!("criterion: {:?} (kappa_inf {:.6}, threshold {:.6})", c.verdict, c.kappa_inf, c.threshold);
    }
    if let Some(v) = bundle.oracle_verdict {
        println!("oracle: liouville_holds = {v}");
    }
    if let Some(c) = &bundle.coupling {
        println!("coupling: p_couple = {:.4} +/- {:.4}", c.stats.p_couple, c.stats.ci_halfwidth);
    }
    println!("consistency: {:?}", bundle.consistency);
    Ok(bundle.consistency)
}

fn configure_threads() {
    if let Some(n) = std::env::var("LIOUVILLE_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // only fails if a pool already exists, which cannot happen this early
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let (args, stages, name) = match &cli.command {
        Command::Catalogue => {
            let mut out = std::io::stdout().lock();
            for e in catalogue() {
                if writeln!(out, "{:<14} params {:<32} {}", e.name, e.params, e.description).is_err() {
                    break;
                }
            }
            return ExitCode::SUCCESS;
        }
        Command::Criterion(a) => (
            a,
            Stages {
                criterion: true,
                oracle: false,
                coupling: false,
            },
            "criterion",
        ),
        Command::Harmonic1d(a) => (
            a,
            Stages {
                criterion: false,
                oracle: true,
                coupling: false,
            },
            "harmonic1d",
        ),
        Command::Couple(a) => (
            a,
            Stages {
                criterion: false,
                oracle: false,
                coupling: true,
            },
            "couple",
        ),
        Command::Full(a) => (a, Stages::ALL, "full"),
    };
    match execute(args, stages, name) {
        Ok(Consistency::Contradiction) => {
            eprintln!("consistency: criterion guarantees the Liouville property but the 1D oracle found a bounded nonconstant harmonic function");
            ExitCode::from(4)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {}", e.stage, e.error);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
