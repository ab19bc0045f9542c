use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use stiffmod::config::{resolve_scenario, scenario_to_toml};
use stiffmod::io::{load_csv_table, load_events_csv, read_csv_table, write_trajectory_csv, CsvTable};
use stiffmod::plot::emit_plot;
use stiffmod::scenario::{summarize, PRESETS};
use stiffmod::{build_ledger, run_scenario, Scenario};

#[derive(Parser)]
#[command(name = "stiffmod", version, about = "Switched-stiffness vibration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more scenarios and write their outputs.
    Run {
        /// Preset name or path to a scenario file; repeat to run several in parallel.
        #[arg(long, required = true)]
        scenario: Vec<String>,
        /// End time in seconds.
        #[arg(long)]
        t_end: Option<f64>,
        /// Fixed step in seconds.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Rebuild the energy ledger of a trajectory CSV written by `run`.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        /// Scenario the trajectory came from; defaults to the `.toml` next to the CSV.
        #[arg(long)]
        scenario: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
    Both,
}

fn sidecar(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().unwrap_or_default().to_string_lossy();
    csv.with_file_name(format!("{stem}{suffix}"))
}

fn apply_overrides(mut s: Scenario, t_end: Option<f64>, dt: Option<f64>) -> Scenario {
    if let Some(t) = t_end {
        s.integrator.t_end = t;
        if let Some((a, b)) = s.control.window {
            if b > t {
                log::info!("{}: modulation window clipped to end at {t} s", s.name);
                s.control.window = Some((a.min(t), t));
            }
        }
    }
    if dt.is_some() {
        s.integrator.dt = dt;
    }
    s
}

fn run_one(s: &Scenario, out: &Path, format: Format) -> Result<String> {
    let result = run_scenario(s).with_context(|| format!("scenario '{}'", s.name))?;
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &result.trajectory, &result.ledger, s.output.stride)?;
    let base = out.join(&s.name);
    if format != Format::Svg {
        let csv = base.with_extension("csv");
        std::fs::write(&csv, &buf).with_context(|| csv.display().to_string())?;
        stiffmod::io::emit_events_csv(&sidecar(&csv, ".events.csv"), result.trajectory.events(), s.model.dofs())?;
        let toml = base.with_extension("toml");
        std::fs::write(&toml, scenario_to_toml(s)).with_context(|| toml.display().to_string())?;
    }
    if format != Format::Csv {
        let table = read_csv_table(buf.as_slice())?;
        plot(&table, s, &base.with_extension("svg"))?;
    }
    Ok(result.summary.to_string())
}

fn plot(table: &CsvTable, s: &Scenario, path: &Path) -> Result<()> {
    let t = table.column("t").context("trajectory has no time column")?;
    let series = s
        .output
        .plot
        .iter()
        .map(|name| match table.column(name) {
            Some(col) => Ok((name.clone(), col)),
            None => bail!("scenario '{}' plots unknown column '{name}'", s.name),
        })
        .collect::<Result<Vec<_>>>()?;
    emit_plot(path, &s.name, "t [s]", &t, &series)?;
    Ok(())
}

fn run(scenarios: &[String], t_end: Option<f64>, dt: Option<f64>, out: &Path, format: Format) -> Result<()> {
    let scenarios = scenarios
        .iter()
        .map(|n| resolve_scenario(n).map(|s| apply_overrides(s, t_end, dt)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!("scenario '{}' given twice", w[0]);
    }
    std::fs::create_dir_all(out).with_context(|| out.display().to_string())?;
    let results: Vec<Result<String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|s| scope.spawn(move || run_one(s, out, format)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| bail!("worker panicked")))
            .collect()
    });
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}

fn analyze(input: &Path, scenario: Option<&str>) -> Result<()> {
    let s = match scenario {
        Some(name) => resolve_scenario(name)?,
        None => {
            let toml = input.with_extension("toml");
            if !toml.is_file() {
                bail!("{} not found; pass --scenario", toml.display());
            }
            resolve_scenario(&toml.to_string_lossy())?
        }
    };
    let table = load_csv_table(input)?;
    if table.dofs() != s.model.dofs() {
        bail!("{} has {} DoFs but scenario '{}' has {}", input.display(), table.dofs(), s.name, s.model.dofs());
    }
    let events_path = sidecar(input, ".events.csv");
    let events = if events_path.is_file() {
        load_events_csv(&events_path, &s.model)?
    } else {
        let phase = table.column("phase").unwrap_or_default();
        if phase.windows(2).any(|w| w[0] != w[1]) {
            bail!("{} not found; switched runs need their event file", events_path.display());
        }
        Vec::new()
    };
    let traj = table.to_trajectory(&s.excitation, events)?;
    if traj.is_empty() {
        bail!("{} has no samples", input.display());
    }
    let ledger = build_ledger(&s.model, &traj, &s.excitation, s.primary_mode)?;
    let mut steps: Vec<f64> = traj.times().windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(f64::total_cmp);
    let dt = steps.get(steps.len() / 2).copied().unwrap_or(0.0);
    println!("{}", summarize(&s.name, dt, &traj, &ledger));
    if let Some(stored) = table.column("L") {
        let dev = stored.iter().zip(&ledger.loss).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("  max |L(recomputed) - L(file)| = {dev:.3e} J");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            t_end,
            dt,
            out,
            format,
        } => run(&scenario, t_end, dt, &out, format),
        Command::ListScenarios => {
            for (name, description) in PRESETS {
                println!("{name:<22}{description}");
            }
            Ok(())
        }
        Command::Analyze { input, scenario } => analyze(&input, scenario.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Parser messages span several lines; keep the diagnostic on one.
            let msg = format!("{e:#}").split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
