use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use safenav::filters::FilterKind;
use safenav::geometry::{Point2, Polyline};
use safenav::harness::{
    aggregate, export_report, run_trials_detailed, track_synthetic, track_world, write_trace, AggregateReport,
    ReportFormat, TrackingConfig,
};
use safenav::navigator::{trial_rng, Method, STREAM_PLANNER};
use safenav::planner::{plan, PlannerConfig};
use safenav::risk::{compare_trajectories, RiskZoneConfig, RESAMPLE_POINTS};
use safenav::scenario::{generate_scenario, Scenario};

/// Safe-path navigation simulator.
#[derive(Parser)]
#[command(name = "safenav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random battlefield scenario file.
    GenScenario {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run Monte-Carlo navigation trials and write aggregate reports.
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        method: Method,
        #[arg(long)]
        filter: FilterKind,
        /// Path name; all paths of the scenario when omitted.
        #[arg(long)]
        path: Option<String>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write one step CSV per trial.
        #[arg(long)]
        traces: bool,
    },
    /// Plan a single risk-aware RRT* path and write the tree and path as JSON.
    Plan {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Path whose corridor defines the risk reference.
        #[arg(long, default_value = "P1")]
        path: String,
        #[arg(long, value_parser = parse_point)]
        start: Point2,
        #[arg(long, value_parser = parse_point)]
        goal: Point2,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated trajectory against a reference (CSV files of x,y).
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Buffer half-width for the risk zones, m.
        #[arg(long, default_value_t = 10.0)]
        half_width: f64,
    },
    /// Filter tracking benchmark: EKF against PF on synthetic and world runs.
    Track {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Bad input: exit code 2.
#[derive(Debug)]
struct Invalid(anyhow::Error);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(e: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(Invalid(e.into()))
}

fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y: {e}"))?;
    Ok(Point2::new(x, y))
}

fn load_scenario(path: Option<&Path>) -> anyhow::Result<Scenario> {
    match path {
        None => Ok(Scenario::bundled()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(invalid)?;
            Scenario::from_json(&text).map_err(invalid)
        }
    }
}

fn read_xy(path: &Path) -> anyhow::Result<Vec<Point2>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(anyhow!("{}: expected x,y per line", path.display()));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => out.push(Point2::new(x, y)),
            // header line
            _ if out.is_empty() => continue,
            _ => return Err(anyhow!("{}: non-numeric row {:?}", path.display(), rec)),
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenScenario { seed, out } => {
            let file = generate_scenario(seed)?;
            fs::write(&out, serde_json::to_string_pretty(&file)? + "\n")?;
            println!("wrote {}", out.display());
        }
        Command::Run {
            scenario,
            method,
            filter,
            path,
            trials,
            seed,
            out,
            traces,
        } => {
            let sc = load_scenario(scenario.as_deref())?;
            if trials == 0 {
                return Err(invalid(anyhow!("--trials must be positive")));
            }
            let paths: Vec<String> = match path {
                Some(p) => {
                    sc.central_path(&p).map_err(invalid)?;
                    vec![p]
                }
                None => sc.path_names().iter().map(|s| s.to_string()).collect(),
            };
            fs::create_dir_all(&out)?;
            let mut report = AggregateReport::default();
            let mut trials_out = Vec::new();
            for p in &paths {
                let outputs = run_trials_detailed(&sc, method, filter, p, trials, seed)?;
                if traces {
                    let buffer = sc.buffer_for(p)?;
                    let dir = out.join("traces");
                    fs::create_dir_all(&dir)?;
                    for o in &outputs {
                        if let Some(rec) = &o.record {
                            let name = format!("{method}_{filter}_{p}_{:04}.csv", o.report.trial_id);
                            write_trace(rec, &buffer, fs::File::create(dir.join(name))?)?;
                        }
                    }
                }
                let reports: Vec<_> = outputs.into_iter().map(|o| o.report).collect();
                let row = aggregate(method, filter, p, &reports);
                println!(
                    "{method} {filter} {p}: ade {:.3} fde {:.3} awrs {:.3} pct_err {:.2} step_ms {:.4} ({} trials, {} failed{})",
                    row.ade,
                    row.fde,
                    row.awrs,
                    row.pct_err,
                    row.step_ms,
                    row.trials,
                    row.failures,
                    if row.unreliable { ", UNRELIABLE" } else { "" }
                );
                report.rows.push(row);
                trials_out.extend(reports);
            }
            export_report(&report, ReportFormat::Csv, &out.join("report.csv"))?;
            export_report(&report, ReportFormat::Json, &out.join("report.json"))?;
            fs::write(out.join("trials.json"), serde_json::to_string_pretty(&trials_out)?)?;
        }
        Command::Plan {
            scenario,
            path,
            start,
            goal,
            beta,
            seed,
            out,
        } => {
            let sc = load_scenario(scenario.as_deref())?;
            let buffer = sc.buffer_for(&path).map_err(invalid)?;
            let cfg = PlannerConfig {
                beta: beta.unwrap_or(sc.file.planner.beta),
                seed: seed.unwrap_or(sc.file.planner.seed),
                ..sc.file.planner.clone()
            };
            cfg.validate().map_err(invalid)?;
            let mut rng = trial_rng(cfg.seed, STREAM_PLANNER);
            let result = match plan(start, goal, &sc.world.obstacle_map, &buffer, &cfg, &mut rng) {
                Err(e @ safenav::planner::PlanError::BlockedEndpoint(_)) => return Err(invalid(e)),
                other => other?,
            };
            fs::write(&out, serde_json::to_string_pretty(&result)?)?;
            println!(
                "path of {} points, total cost {:.3} (length {:.3}, risk {:.3})",
                result.path.len(),
                result.total_cost,
                result.length_cost,
                result.risk_cost
            );
        }
        Command::Metrics { truth, est, half_width } => {
            let t = Polyline::new(read_xy(&truth).map_err(invalid)?).map_err(invalid)?;
            let e = Polyline::new(read_xy(&est).map_err(invalid)?).map_err(invalid)?;
            let zones = RiskZoneConfig::equal_width(half_width, &[2.0, 4.0, 6.0, 8.0]).map_err(invalid)?;
            let m = compare_trajectories(&e, &t, &zones, RESAMPLE_POINTS)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Track {
            scenario,
            trials,
            seed,
            out,
        } => {
            let sc = load_scenario(scenario.as_deref())?;
            if trials == 0 {
                return Err(invalid(anyhow!("--trials must be positive")));
            }
            let cfg = TrackingConfig::default();
            let mut rows = track_synthetic(trials, seed, &cfg)?;
            for p in sc.path_names() {
                rows.extend(track_world(&sc, p, trials, seed, &cfg)?);
            }
            for r in &rows {
                println!(
                    "{} {}: ade {:.4} fde {:.4} awrs {:.5} ({} trials, {} failed)",
                    r.scenario, r.filter, r.ade, r.fde, r.awrs, r.trials, r.failures
                );
            }
            if let Some(out) = out {
                fs::write(&out, serde_json::to_string_pretty(&rows)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
