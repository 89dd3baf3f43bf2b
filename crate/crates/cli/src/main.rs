use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcover::bench::{
    gen_instance, rows_from_csv, rows_from_json, rows_to_csv, rows_to_json, run_sweep,
    try_run_cell, Cell, ExperimentConfig, InstanceKind, PartitionKind, ProtocolKind, ResultRow,
    Source,
};
use dcover::coverage::SetSystem;
use dcover::lowerbound::{
    decide_coverage_label, sample_hard_instance, verify_gadget_properties, Decision, Label,
    LabelMethod, Provenance,
};
use dcover::stream::{
    stream_from_system, stream_validate, streaming_set_cover, streaming_sp_greedy,
    DynamicSetStream, SamplerMode, StreamConfig,
};
use dcover::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dcover", about = "Distributed and streaming maximum coverage experiments")]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Enumeration budget for exact computations.
    #[arg(long, global = true, default_value_t = dcover::coverage::DEFAULT_ENUM_BUDGET)]
    budget: u128,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Run one protocol on an instance file.
    Run(RunArgs),
    /// Sample a hard instance and write its provenance next to it.
    LbGen(HardArgs),
    /// Check gadget properties, or the label of a stored hard instance.
    LbVerify(LbVerifyArgs),
    /// Dynamic-stream generation and algorithms.
    Stream {
        #[command(subcommand)]
        action: StreamAction,
    },
    /// Run a parameter sweep described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Random,
    Planted,
    Hard,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    #[arg(long, default_value_t = 10)]
    block: usize,
    #[command(flatten)]
    hard: HardArgs,
}

#[derive(Args, Clone, Copy)]
struct HardArgs {
    #[arg(long, default_value_t = 4)]
    base: usize,
    #[arg(long, default_value_t = 2)]
    width_exp: usize,
    #[arg(long = "levels", default_value_t = 1)]
    levels: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Sp,
    Is,
    SendAll,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Rr,
    Random,
    Adv,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Sp)]
    protocol: ProtocolArg,
    /// Defaults to the k stored in the instance file.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, conflicts_with = "auto_guess")]
    opt_guess: Option<f64>,
    /// Sweep opt guesses (the default when no guess is given).
    #[arg(long)]
    auto_guess: bool,
    #[arg(long)]
    lowcomm: bool,
    #[arg(long, value_enum, default_value_t = PartitionArg::Rr)]
    partition: PartitionArg,
    #[arg(long, default_value_t = 4)]
    p: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Certificate,
    Greedy,
    Brute,
}

#[derive(Args)]
struct LbVerifyArgs {
    #[command(flatten)]
    hard: HardArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Stored instance to check against its provenance sidecar.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    provenance: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
    method: MethodArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Hashed,
}

#[derive(Subcommand)]
enum StreamAction {
    /// Turn an instance file into a dynamic stream with decoy updates.
    Gen {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 200)]
        updates: usize,
    },
    /// Multi-pass max k-cover on a stream file.
    MaxCover {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
    },
    /// Multi-pass set cover on a stream file.
    SetCover {
        #[arg(long)]
        input: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Budget { .. }
        | Error::RoundBudget { .. }
        | Error::PassBudget { .. }
        | Error::Infeasible(_)
        | Error::Construction { .. } => 3,
        Error::PropertyViolation(_) => 4,
        _ => 2,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn sidecar(out: Option<&Path>, suffix: &str, text: &str) -> Result<()> {
    if let Some(p) = out {
        let mut name = p.as_os_str().to_owned();
        name.push(suffix);
        fs::write(PathBuf::from(name), text)?;
    }
    Ok(())
}

fn emit_rows(cli: &Cli, rows: &[ResultRow]) -> Result<()> {
    let text = match cli.format {
        Format::Csv => rows_to_csv(rows)?,
        Format::Json => rows_to_json(rows)? + "\n",
    };
    emit(cli.out.as_deref(), &text)
}

fn emit_value(cli: &Cli, v: serde_json::Value) -> Result<()> {
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(&v)? + "\n",
        Format::Csv => {
            let obj = v.as_object().cloned().unwrap_or_default();
            let flat: Vec<(String, String)> = obj
                .into_iter()
                .filter(|(_, v)| !v.is_object())
                .map(|(k, v)| (k, v.to_string()))
                .collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(flat.iter().map(|(k, _)| k))
                .and_then(|_| w.write_record(flat.iter().map(|(_, v)| v)))
                .map_err(Error::from)?;
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                .expect("utf-8")
        }
    };
    emit(cli.out.as_deref(), &text)
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let kind = match a.kind {
        GenKind::Random => InstanceKind::RandomUniform {
            n: a.n,
            m: a.m,
            density: a.density,
        },
        GenKind::Planted => InstanceKind::PlantedCover {
            n: a.n,
            m: a.m,
            k: a.k,
            block: a.block,
        },
        GenKind::Hard => InstanceKind::Hard {
            base: a.hard.base,
            width_exp: a.hard.width_exp,
            rounds: a.hard.levels,
        },
    };
    let g = gen_instance(&kind, a.k, cli.seed)?;
    emit(cli.out.as_deref(), &g.instance_text())?;
    if let Some(c) = &g.certificate {
        let cert = json!({ "opt": c.value, "indices": c.indices });
        sidecar(cli.out.as_deref(), ".cert.json", &serde_json::to_string_pretty(&cert)?)?;
    }
    if let Some(p) = &g.provenance {
        sidecar(cli.out.as_deref(), ".prov.json", &p.to_json()?)?;
    }
    Ok(())
}

fn cmd_run(cli: &Cli, a: &RunArgs) -> Result<()> {
    let path = a.input.to_string_lossy().into_owned();
    let (_, file_k) = SetSystem::parse_instance(&read(&a.input)?)?;
    let protocol = match (a.protocol, a.lowcomm) {
        (ProtocolArg::Sp, false) => ProtocolKind::SpGreedy,
        (ProtocolArg::Sp, true) => ProtocolKind::SpGreedyLowcomm,
        (_, true) => return Err(Error::Input("--lowcomm applies to the sp protocol only".into())),
        (ProtocolArg::Is, _) => ProtocolKind::IsGreedy,
        (ProtocolArg::SendAll, _) => ProtocolKind::SendAll,
        (ProtocolArg::Greedy, _) => ProtocolKind::Greedy,
    };
    let partition = match a.partition {
        PartitionArg::Rr => PartitionKind::Rr,
        PartitionArg::Random => PartitionKind::Random,
        PartitionArg::Adv => PartitionKind::Adv,
    };
    let k = a.k.unwrap_or(file_k);
    let config = ExperimentConfig {
        protocol,
        source: Source::File { path },
        n: Vec::new(),
        m: Vec::new(),
        k: vec![k],
        rounds: vec![a.rounds],
        eps: vec![a.eps],
        p: vec![a.p],
        partition: vec![partition],
        seeds: vec![cli.seed],
        opt_guess: if a.auto_guess { None } else { a.opt_guess },
        budget: cli.budget,
    };
    let cell = Cell {
        protocol,
        n: 0,
        m: 0,
        k,
        rounds: a.rounds,
        eps: a.eps,
        p: a.p,
        partition,
        seed: cli.seed,
    };
    let row = try_run_cell(&config, &cell)?;
    emit_rows(cli, &[row])
}

fn cmd_lb_gen(cli: &Cli, h: &HardArgs) -> Result<()> {
    let inst = sample_hard_instance(h.base, h.width_exp, h.levels, cli.seed)?;
    emit(cli.out.as_deref(), &inst.system().to_instance_string(inst.k))?;
    match cli.out.as_deref() {
        Some(_) => sidecar(cli.out.as_deref(), ".prov.json", &inst.provenance.to_json()?),
        None => {
            eprintln!("{}", inst.provenance.to_json()?);
            Ok(())
        }
    }
}

fn cmd_lb_verify(cli: &Cli, a: &LbVerifyArgs) -> Result<()> {
    if let Some(input) = &a.input {
        let prov_path = match &a.provenance {
            Some(p) => p.clone(),
            None => {
                let mut s = input.as_os_str().to_owned();
                s.push(".prov.json");
                PathBuf::from(s)
            }
        };
        let prov = Provenance::from_json(&read(&prov_path)?)?;
        let inst = sample_hard_instance(prov.base, prov.width_exp, prov.rounds, prov.seed)?;
        if inst.system().to_instance_string(inst.k) != read(input)? {
            return Err(Error::PropertyViolation(
                "instance file does not match its provenance".into(),
            ));
        }
        let method = match a.method {
            MethodArg::Certificate => LabelMethod::Certificate,
            MethodArg::Greedy => LabelMethod::GreedyProbe,
            MethodArg::Brute => LabelMethod::BruteForce,
        };
        let decision = decide_coverage_label(&inst, method)?;
        let agrees = match (decision, prov.label) {
            (Decision::Yes, Label::Yes) | (Decision::No, Label::No) => Some(true),
            (Decision::Unknown, _) => None,
            _ => Some(false),
        };
        emit_value(
            cli,
            json!({ "label": prov.label, "decision": decision, "agrees": agrees, "degraded": prov.degraded }),
        )?;
        if agrees == Some(false) && !prov.degraded {
            return Err(Error::PropertyViolation("decided label differs from planted label".into()));
        }
        return Ok(());
    }
    let h = a.hard;
    let rep = verify_gadget_properties(h.base, h.width_exp, h.levels, a.trials, cli.seed)?;
    emit_value(cli, serde_json::to_value(&rep)?)?;
    if rep.yes_rate() < 1.0 || rep.disjoint_ok < rep.samples || rep.replay_ok < rep.samples {
        return Err(Error::PropertyViolation(format!(
            "yes rate {}, disjoint {}/{}, replay {}/{}",
            rep.yes_rate(),
            rep.disjoint_ok,
            rep.samples,
            rep.replay_ok,
            rep.samples
        )));
    }
    Ok(())
}

fn cmd_stream(cli: &Cli, action: &StreamAction) -> Result<()> {
    match action {
        StreamAction::Gen { input, updates } => {
            let (sys, _) = SetSystem::parse_instance(&read(input)?)?;
            let stream = stream_from_system(&sys, *updates, cli.seed);
            emit(cli.out.as_deref(), &stream.to_text())
        }
        StreamAction::MaxCover { input, k, eps, mode } => {
            let stream = DynamicSetStream::parse(&read(input)?)?;
            stream_validate(&stream)?;
            let mut cfg = StreamConfig::new(*k, *eps);
            cfg.mode = match mode {
                ModeArg::Exact => SamplerMode::Exact,
                ModeArg::Hashed => SamplerMode::Hashed,
            };
            let run = streaming_sp_greedy(&stream, &cfg, cli.seed)?;
            let sets: Vec<Vec<usize>> = run
                .cover
                .indices
                .iter()
                .map(|&i| run.live.set(i).iter().collect())
                .collect();
            emit_value(
                cli,
                json!({
                    "value": run.cover.value,
                    "passes": run.passes,
                    "peak_words": run.space.peak_words,
                    "sets": sets,
                }),
            )
        }
        StreamAction::SetCover { input } => {
            let stream = DynamicSetStream::parse(&read(input)?)?;
            stream_validate(&stream)?;
            let run = streaming_set_cover(&stream, cli.seed)?;
            let live = stream.live_system()?;
            let sets: Vec<Vec<usize>> = run.indices.iter().map(|&i| live.set(i).iter().collect()).collect();
            emit_value(
                cli,
                json!({
                    "size": run.indices.len(),
                    "passes": run.passes,
                    "pass_budget": run.pass_budget,
                    "sets": sets,
                }),
            )
        }
    }
}

fn progress_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".progress.jsonl");
    PathBuf::from(s)
}

fn cmd_sweep(cli: &Cli, config: &Path) -> Result<()> {
    let config: ExperimentConfig = serde_json::from_str(&read(config)?)?;
    config.validate()?;
    let mut done: Vec<ResultRow> = Vec::new();
    let progress = cli.out.as_deref().map(progress_path);
    if let Some(out) = cli.out.as_deref() {
        if out.exists() {
            let text = read(out)?;
            done = match cli.format {
                Format::Csv => rows_from_csv(&text)?,
                Format::Json => rows_from_json(&text)?,
            };
        }
    }
    if let Some(p) = &progress {
        if p.exists() {
            for line in read(p)?.lines().filter(|l| !l.trim().is_empty()) {
                // a torn last line from an interrupted run is skipped
                if let Ok(row) = serde_json::from_str::<ResultRow>(line) {
                    done.push(row);
                }
            }
        }
    }
    let mut log = match &progress {
        Some(p) => Some(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)?,
        ),
        None => None,
    };
    let rows = run_sweep(&config, done, None, |row| {
        if let Some(f) = log.as_mut() {
            use std::io::Write;
            if let Ok(line) = serde_json::to_string(row) {
                let _ = writeln!(f, "{line}");
            }
        }
    })?;
    drop(log);
    emit_rows(cli, &rows)?;
    if let Some(p) = &progress {
        let _ = fs::remove_file(p);
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Run(a) => cmd_run(cli, a),
        Command::LbGen(h) => cmd_lb_gen(cli, h),
        Command::LbVerify(a) => cmd_lb_verify(cli, a),
        Command::Stream { action } => cmd_stream(cli, action),
        Command::Sweep { config } => cmd_sweep(cli, config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
