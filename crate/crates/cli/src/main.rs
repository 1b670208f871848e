//! `metertwin`: scenario replay, spectrum analysis, accuracy bench and the
//! meter-reading server and client.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDateTime;
use clap::{Args, Parser, Subcommand, ValueEnum};

use metertwin::bench::{
    self, compare_algorithms, default_comparison_scenarios, rows_to_csv, AccuracyClassSpec, CurrentRange, Integration,
    PipelineConfig, Scenario,
};
use metertwin::protocol::{self, control, di, request, Client, ErrorReason, Frame, Server};
use metertwin::registers::{FreezeKind, MeterState};
use metertwin::time;

#[derive(Parser)]
#[command(name = "metertwin", version, about = "Multi-function electricity meter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario into the registers and print a summary.
    Simulate {
        scenario: PathBuf,
        /// Write the final meter state here.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Continue from a saved meter state instead of a fresh meter.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Harmonic analysis of every scenario segment.
    Analyze {
        scenario: PathBuf,
        #[arg(long)]
        spectrum: PathBuf,
    },
    /// Accuracy-class verification over the current range.
    Bench(BenchArgs),
    /// Serve a meter over TCP.
    Serve {
        #[arg(long, default_value_t = 8645)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// State file; loaded if present, rewritten after every change.
        #[arg(long)]
        state: PathBuf,
        /// Address of a new meter (twelve digits).
        #[arg(long, default_value_t = 1)]
        meter: u64,
        /// Clock of a new meter, e.g. 2024-01-01T00:00:00.
        #[arg(long, default_value = "2024-01-01T00:00:00")]
        clock: NaiveDateTime,
    },
    /// Talk to a running server.
    Client {
        /// Server address, host:port.
        #[arg(long)]
        addr: String,
        /// Meter address.
        #[arg(long, default_value_t = 1)]
        meter: u64,
        #[command(subcommand)]
        action: ClientAction,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "0.2S")]
    class: String,
    /// `default` (I_min, I_tr, 0.1·I_max, I_max) or `span` (5000:1 log sweep).
    #[arg(long, value_enum, default_value_t = Grid::Default)]
    grid: Grid,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Newton-Cotes order for frame energy; point product when absent.
    #[arg(long)]
    newton_cotes: Option<usize>,
    /// Skip the converter and DC block.
    #[arg(long)]
    ideal: bool,
    /// Also write the algorithm comparison report.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Default,
    Span,
}

#[derive(Subcommand)]
enum ClientAction {
    /// Read a data identifier, e.g. 0x00010000.
    Read {
        #[arg(long, value_parser = parse_u32)]
        di: u32,
    },
    /// Set the meter clock: broadcast without a password, authenticated with one.
    Sync {
        #[arg(long)]
        time: NaiveDateTime,
        #[arg(long, value_parser = parse_u32)]
        password: Option<u32>,
    },
    /// Clear maximum demand or all energy registers.
    Zero {
        #[arg(long, value_enum, default_value_t = ZeroTarget::Demand)]
        kind: ZeroTarget,
        #[arg(long, value_parser = parse_u32)]
        password: u32,
    },
    /// Take a snapshot.
    Freeze {
        #[arg(long, value_enum, default_value_t = FreezeTarget::Instantaneous)]
        kind: FreezeTarget,
        #[arg(long, value_parser = parse_u32)]
        password: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ZeroTarget {
    Demand,
    Meter,
}

#[derive(Clone, Copy, ValueEnum)]
enum FreezeTarget {
    Regular,
    Instantaneous,
    Daily,
    Agreed,
    Hourly,
}

impl From<FreezeTarget> for FreezeKind {
    fn from(t: FreezeTarget) -> Self {
        match t {
            FreezeTarget::Regular => FreezeKind::Regular,
            FreezeTarget::Instantaneous => FreezeKind::Instantaneous,
            FreezeTarget::Daily => FreezeKind::Daily,
            FreezeTarget::Agreed => FreezeKind::Agreed,
            FreezeTarget::Hourly => FreezeKind::Hourly,
        }
    }
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => s.parse(),
    };
    r.map_err(|e| format!("{s:?}: {e}"))
}

/// Outcome of a command that ran to completion.
enum Verdict {
    Pass,
    Fail,
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Scenario::from_json(&text)?)
}

fn read_state(path: &Path) -> Result<MeterState> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(MeterState::from_json(&text)?)
}

fn simulate(scenario: &Path, state: Option<&Path>, resume: Option<&Path>) -> Result<Verdict> {
    let sc = read_scenario(scenario)?;
    let initial = resume.map(read_state).transpose()?;
    let out = bench::run_scenario(&sc, initial)?;
    if let Some(path) = state {
        fs::write(path, out.state.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    Ok(Verdict::Pass)
}

fn analyze(scenario: &Path, spectrum: &Path) -> Result<Verdict> {
    let sc = read_scenario(scenario)?;
    let spectra = bench::scenario_spectra(&sc)?;
    fs::write(spectrum, bench::spectrum_csv(&spectra)).with_context(|| format!("writing {}", spectrum.display()))?;
    for (seg, s) in &spectra {
        for (ph, p) in s.phases.iter().enumerate() {
            println!(
                "segment {seg} phase {ph}: f = {:.4} Hz, THD_u = {:.4}%, THD_i = {:.4}%",
                s.fundamental_hz,
                100.0 * p.voltage.thd,
                100.0 * p.current.thd
            );
        }
    }
    Ok(Verdict::Pass)
}

fn run_bench(args: &BenchArgs) -> Result<Verdict> {
    let class = AccuracyClassSpec::named(&args.class)?;
    let range = CurrentRange::default();
    let mut cfg = if args.ideal {
        PipelineConfig::ideal()
    } else {
        PipelineConfig::default()
    };
    if let Some(order) = args.newton_cotes {
        cfg.integration = Integration::NewtonCotes(order);
    }
    let currents = match args.grid {
        Grid::Default => bench::default_grid(&range),
        Grid::Span => bench::span_grid(&range, 5_000.0, 9),
    };
    let verdict = bench::run_accuracy_grid(&range, &class, &currents, &cfg)?;
    for p in &verdict.points {
        println!(
            "{:>4} I={:<9} PF={:<4} error={:+.6}% limit=±{}%",
            if p.pass { "PASS" } else { "FAIL" },
            p.current,
            p.power_factor.label(),
            p.error_pct,
            p.limit_pct
        );
    }
    println!(
        "{:>4} starting current {} A registers {:.6} W·s",
        if verdict.starts { "PASS" } else { "FAIL" },
        range.i_st,
        verdict.starting_energy_ws
    );
    println!("class {}: {}", class.name, if verdict.pass { "PASS" } else { "FAIL" });
    if let Some(path) = &args.out {
        fs::write(path, verdict.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.compare {
        let rows = compare_algorithms(&default_comparison_scenarios())?;
        fs::write(path, rows_to_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if verdict.pass { Verdict::Pass } else { Verdict::Fail })
}

fn serve(bind: &str, port: u16, state: &Path, meter: u64, clock: NaiveDateTime) -> Result<Verdict> {
    let m = if state.exists() {
        read_state(state)?
    } else {
        let m = MeterState::with_defaults(meter, time::from_datetime(clock));
        fs::write(state, m.to_json()).with_context(|| format!("writing {}", state.display()))?;
        m
    };
    let server = Server::start((bind, port), m, Some(state.to_path_buf()))?;
    println!("serving meter on {}", server.local_addr());
    server.wait();
    Ok(Verdict::Pass)
}

fn describe(frame: &Frame) -> String {
    frame
        .payload
        .iter()
        .map(|b| format!("{b:02X}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_response(resp: &Frame) -> Verdict {
    if resp.control & control::ERROR == control::ERROR {
        let reason = resp.payload.first().and_then(|&b| ErrorReason::from_byte(b));
        println!("error: {reason:?}");
        return Verdict::Fail;
    }
    println!("ok: {}", describe(resp));
    Verdict::Pass
}

fn client(addr: &str, meter: u64, action: &ClientAction) -> Result<Verdict> {
    let mut c = Client::connect(addr).with_context(|| format!("connecting to {addr}"))?;
    let verdict = match *action {
        ClientAction::Read { di: id } => {
            let resp = c.request(&request::read(meter, id))?;
            let v = print_response(&resp);
            if matches!(v, Verdict::Pass) && resp.payload.len() == 8 && id & 0xFF00_0000 == 0 {
                let value = if matches!(
                    id,
                    di::COMBINED_ACTIVE | di::COMBINED_REACTIVE_1 | di::COMBINED_REACTIVE_2 | di::BALANCE
                ) {
                    protocol::decode_signed(&resp.payload[4..])? as f64
                } else {
                    protocol::decode_bcd(&resp.payload[4..])? as f64
                };
                println!("value: {:.2}", value / 100.0);
            }
            v
        }
        ClientAction::Sync { time: t, password } => {
            let ts = time::from_datetime(t);
            match password {
                None => {
                    c.send(&request::broadcast_sync(ts)?)?;
                    println!("broadcast sent");
                    Verdict::Pass
                }
                Some(pw) => print_response(&c.request(&request::set_clock(meter, pw, ts)?)?),
            }
        }
        ClientAction::Zero { kind, password } => {
            let f = match kind {
                ZeroTarget::Demand => request::zero_demand(meter, password),
                ZeroTarget::Meter => request::zero_meter(meter, password),
            };
            print_response(&c.request(&f)?)
        }
        ClientAction::Freeze { kind, password } => {
            print_response(&c.request(&request::freeze(meter, password, kind.into()))?)
        }
    };
    c.close();
    Ok(verdict)
}

fn run(cli: Cli) -> Result<Verdict> {
    match &cli.command {
        Command::Simulate {
            scenario,
            state,
            resume,
        } => simulate(scenario, state.as_deref(), resume.as_deref()),
        Command::Analyze { scenario, spectrum } => analyze(scenario, spectrum),
        Command::Bench(args) => run_bench(args),
        Command::Serve {
            port,
            bind,
            state,
            meter,
            clock,
        } => serve(bind, *port, state, *meter, *clock),
        Command::Client { addr, meter, action } => client(addr, *meter, action),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            if bail_is_usage(&e) {
                eprintln!("usage error: {e:#}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(2)
        }
    }
}

fn bail_is_usage(e: &anyhow::Error) -> bool {
    e.downcast_ref::<bench::BenchError>().is_some()
}
