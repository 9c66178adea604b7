use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ddiqkd::angle::parse_angle;
use ddiqkd::attacks::{parse_constraints, select_operating_point, verify_operating_point, SearchOptions};
use ddiqkd::detectors::load_curves;
use ddiqkd::protocol::{breakeven_transmittance, write_trials_csv, Session, SessionConfig};
use ddiqkd::receiver::{energy_sweep, table1, SweepParams};
use ddiqkd::verify::{verify_closed_form, ClosedForm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ddiqkd", version, about = "Receiver model and attack simulator for detector-device-independent QKD")]
struct Cli {
    /// RNG seed; overrides the seed in a session config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    #[value(alias = "eq1")]
    Balanced,
    #[value(alias = "eq3")]
    General,
}

#[derive(Subcommand)]
enum Command {
    /// Detector energies for all 16 BB84 phase pairs on the balanced receiver.
    Table1 {
        #[arg(long)]
        mu: f64,
    },
    /// Compare the propagated network with a closed form on random parameters.
    Verify {
        #[arg(long = "eq", value_enum)]
        form: FormArg,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Normalized detector energies versus Eve's phase.
    Sweep {
        #[arg(long, default_value = "pi/2", value_parser = angle_arg)]
        phi_b: f64,
        #[arg(long, default_value = "0", value_parser = angle_arg, allow_hyphen_values = true)]
        delta_phi_b: f64,
        #[arg(long, default_value_t = 0.5)]
        t1: f64,
        #[arg(long, default_value_t = 0.5)]
        t2: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 721)]
        points: usize,
    },
    /// Run a protocol session from a JSON config.
    Session {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's slot count.
        #[arg(long)]
        slots: Option<u64>,
        /// Write per-slot records as CSV.
        #[arg(long)]
        trials: Option<PathBuf>,
    },
    /// Search a blinding power and trigger energy meeting click constraints.
    Opsearch {
        #[arg(long)]
        curves: PathBuf,
        /// Comma-separated list such as `D1>D2,D3>D4`.
        #[arg(long)]
        constraints: String,
        #[arg(long, default_value_t = 0.01)]
        p_step: f64,
        #[arg(long, default_value_t = 0.001)]
        e_step: f64,
        /// Also keep every constrained detector silent at half the energy.
        #[arg(long)]
        half_energy_silent: bool,
    },
    /// Largest channel transmittance at which an attack matches the honest gain.
    Breakeven {
        #[arg(long)]
        config: PathBuf,
    },
}

fn angle_arg(s: &str) -> Result<f64, String> {
    parse_angle(s).map_err(|e| e.to_string())
}

struct Failure {
    code: u8,
    kind: &'static str,
    source_kind: Option<&'static str>,
    message: String,
}

impl Failure {
    fn usage(e: ddiqkd::Error) -> Self {
        Self { code: 2, kind: "usage", source_kind: Some(e.kind()), message: e.to_string() }
    }

    fn io(e: io::Error) -> Self {
        let source_kind = if e.kind() == io::ErrorKind::BrokenPipe { "broken_pipe" } else { "io" };
        Self { code: 3, kind: "config", source_kind: Some(source_kind), message: e.to_string() }
    }
}

/// Errors while loading or running a config: infeasible attacks get their own
/// exit code, everything else is a configuration problem.
impl From<ddiqkd::Error> for Failure {
    fn from(e: ddiqkd::Error) -> Self {
        let (code, kind) = match e.kind() {
            "infeasible" => (4, "infeasible"),
            "contract" => (1, "internal"),
            _ => (3, "config"),
        };
        Self { code, kind, source_kind: Some(e.kind()), message: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        // The reader went away (e.g. `| head`); nothing left to report.
        Err(f) if f.source_kind == Some("broken_pipe") => ExitCode::SUCCESS,
        Err(f) => {
            let err = json!({ "error": { "kind": f.kind, "source_kind": f.source_kind, "message": f.message } });
            eprintln!("{err}");
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Table1 { mu } => cmd_table1(cli, *mu),
        Command::Verify { form, trials } => cmd_verify(cli, *form, *trials),
        Command::Sweep { phi_b, delta_phi_b, t1, t2, gamma, points } => {
            let params = SweepParams {
                phi_b: *phi_b,
                delta_phi_b: *delta_phi_b,
                t1: *t1,
                t2: *t2,
                gamma: *gamma,
                points: *points,
            };
            cmd_sweep(cli, &params)
        }
        Command::Session { config, slots, trials } => cmd_session(cli, config, *slots, trials.as_ref()),
        Command::Opsearch { curves, constraints, p_step, e_step, half_energy_silent } => {
            let opts = SearchOptions { p_step_mw: *p_step, e_step_pj: *e_step, half_energy_silent: *half_energy_silent };
            cmd_opsearch(cli, curves, constraints, &opts)
        }
        Command::Breakeven { config } => cmd_breakeven(cli, config),
    }
}

fn output(cli: &Cli) -> Result<Box<dyn Write>, Failure> {
    Ok(match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(Failure::io)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_table(cli: &Cli, header: &[&str], rows: &[Vec<f64>], json_value: Value) -> CmdResult {
    let mut out = output(cli)?;
    if cli.format == Some(Format::Json) {
        serde_json::to_writer_pretty(&mut out, &json_value).map_err(|e| Failure::io(e.into()))?;
        writeln!(out).map_err(Failure::io)?;
    } else {
        writeln!(out, "{}", header.join(",")).map_err(Failure::io)?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", cells.join(",")).map_err(Failure::io)?;
        }
    }
    out.flush().map_err(Failure::io)
}

/// Reports default to JSON; CSV flattens them to `key,value` rows.
fn write_report<T: Serialize>(cli: &Cli, report: &T) -> CmdResult {
    let value = serde_json::to_value(report).map_err(|e| Failure::io(e.into()))?;
    let mut out = output(cli)?;
    if cli.format == Some(Format::Csv) {
        writeln!(out, "key,value").map_err(Failure::io)?;
        let mut rows = Vec::new();
        flatten("", &value, &mut rows);
        for (k, v) in rows {
            writeln!(out, "{k},{v}").map_err(Failure::io)?;
        }
    } else {
        serde_json::to_writer_pretty(&mut out, &value).map_err(|e| Failure::io(e.into()))?;
        writeln!(out).map_err(Failure::io)?;
    }
    out.flush().map_err(Failure::io)
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, x)| flatten(&key(k), x, rows)),
        Value::Array(xs) => xs.iter().enumerate().for_each(|(i, x)| flatten(&key(&i.to_string()), x, rows)),
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        Value::Null => rows.push((prefix.to_string(), String::new())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn cmd_table1(cli: &Cli, mu: f64) -> CmdResult {
    let rows = table1(mu).map_err(Failure::usage)?;
    let flat: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| [r.phi_e, r.phi_b].into_iter().chain(r.energies).collect())
        .collect();
    let value = serde_json::to_value(&rows).map_err(|e| Failure::io(e.into()))?;
    write_table(cli, &["phi_E", "phi_B", "E1", "E2", "E3", "E4"], &flat, value)
}

fn cmd_verify(cli: &Cli, form: FormArg, trials: usize) -> CmdResult {
    if trials == 0 {
        return Err(Failure::usage(ddiqkd::Error::Validation("trials must be >= 1".into())));
    }
    let form = match form {
        FormArg::Balanced => ClosedForm::Balanced,
        FormArg::General => ClosedForm::General,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
    let report = verify_closed_form(form, trials, &mut rng)?;
    write_report(cli, &report)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure {
            code: 5,
            kind: "verification",
            source_kind: None,
            message: format!("max amplitude error {:e} exceeds {:e}", report.max_error, report.tolerance),
        })
    }
}

fn cmd_sweep(cli: &Cli, params: &SweepParams) -> CmdResult {
    let rows = energy_sweep(params).map_err(Failure::usage)?;
    let flat: Vec<Vec<f64>> = rows.iter().map(|(p, e)| std::iter::once(*p).chain(*e).collect()).collect();
    let value = Value::Array(
        rows.iter()
            .map(|(p, e)| json!({ "phi_e": p, "energies": e }))
            .collect(),
    );
    write_table(cli, &["phi_E", "E1", "E2", "E3", "E4"], &flat, value)
}

fn load_session_config(cli: &Cli, path: &PathBuf) -> Result<SessionConfig, Failure> {
    let mut cfg = SessionConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_session(cli: &Cli, path: &PathBuf, slots: Option<u64>, trials: Option<&PathBuf>) -> CmdResult {
    let mut cfg = load_session_config(cli, path)?;
    if let Some(n) = slots {
        cfg.n_slots = n;
    }
    let session = Session::new(&cfg)?;
    let run = session.run(trials.is_some())?;
    if let (Some(p), Some(records)) = (trials, &run.records) {
        write_trials_csv(records, BufWriter::new(File::create(p).map_err(Failure::io)?))?;
    }
    let report = json!({
        "config": path,
        "seed": cfg.seed,
        "attack": session.plan().map(|p| p.strategy()),
        "sampled": run.stats,
        "exact": session.enumerate()?,
    });
    write_report(cli, &report)
}

fn cmd_opsearch(cli: &Cli, curves: &PathBuf, constraints: &str, opts: &SearchOptions) -> CmdResult {
    let constraints = parse_constraints(constraints).map_err(Failure::usage)?;
    if constraints.is_empty() {
        return Err(Failure::usage(ddiqkd::Error::Validation("no constraints given".into())));
    }
    let curves = load_curves(curves)?;
    let point = select_operating_point(&curves, &constraints, opts).ok_or_else(|| Failure {
        code: 4,
        kind: "infeasible",
        source_kind: None,
        message: "no operating point satisfies every constraint".into(),
    })?;
    let checks = verify_operating_point(&curves, &constraints, &point);
    if cli.format == Some(Format::Csv) {
        let mut out = output(cli)?;
        writeln!(out, "p_b_mw,e_t_pj,constraint,click_probability,silent_probability,holds").map_err(Failure::io)?;
        for (c, click, silent) in &checks {
            writeln!(
                out,
                "{},{},{}>{},{click},{silent},{}",
                point.p_b_mw,
                point.e_t_pj,
                c.click,
                c.silent,
                *click == 1.0 && *silent == 0.0
            )
            .map_err(Failure::io)?;
        }
        return out.flush().map_err(Failure::io);
    }
    let report = json!({
        "point": point,
        "constraints": checks.iter().map(|(c, click, silent)| json!({
            "constraint": format!("{}>{}", c.click, c.silent),
            "click_probability": click,
            "silent_probability": silent,
            "holds": *click == 1.0 && *silent == 0.0,
        })).collect::<Vec<_>>(),
    });
    write_report(cli, &report)
}

fn cmd_breakeven(cli: &Cli, path: &PathBuf) -> CmdResult {
    let cfg = load_session_config(cli, path)?;
    let report = breakeven_transmittance(&cfg)?;
    write_report(cli, &report)
}
