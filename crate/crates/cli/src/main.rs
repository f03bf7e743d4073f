use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};
use valuesim::analysis::{self, AnalysisError, IdeologyMode, MetricReport, REPORT_FILE};
use valuesim::engine::{load_corpus_for, run_experiment, EngineError, RunConfig};
use valuesim::llm::{connect, BackendKind, LlmBackend, LlmError};
use valuesim::persona::{build_population, PersonaError};
use valuesim::store::{self, StoreError, MANIFEST_FILE, METRICS_DIR, NARRATIVES_FILE, PERSONAS_FILE};

#[derive(Parser)]
#[command(name = "valuesim", version, about = "Simulate communities of value-primed language-model agents")]
struct Cli {
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    print_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML configuration; defaults are used for anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; must not exist unless --force.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the population seed and, for the mock backend, its seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace an existing run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Elicit personas only and write them with their narratives.
    Personas(RunArgs),
    /// Run the full protocol and analyze it.
    Run(RunArgs),
    /// Recompute metrics for a stored run.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        /// Overwrite an existing metrics directory.
        #[arg(long)]
        force: bool,
    },
    /// Aggregate metrics over runs by condition.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Write the table as CSV here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Re-execute a stored run from its log and verify the snapshots.
    Replay {
        #[arg(long)]
        run: PathBuf,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) | EngineError::Persona(PersonaError::InfeasibleSpec(_)) => {
                CliError::Config(e.to_string())
            }
            EngineError::Persona(PersonaError::Backend(LlmError::Config(m))) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<PersonaError> for CliError {
    fn from(e: PersonaError) -> Self {
        EngineError::Persona(e).into()
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.population.seed = seed;
        if cfg.backend.kind == BackendKind::Mock {
            cfg.backend.seed = Some(seed);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Makes room for a fresh output directory. With `force`, only an empty
/// directory or a previous run (one holding a manifest) is removed.
fn prepare_out(out: &Path, force: bool, marker: &str) -> Result<(), CliError> {
    if !out.exists() {
        return Ok(());
    }
    if !force {
        return Err(CliError::Runtime(format!("{} already exists; pass --force to replace it", out.display())));
    }
    let empty = fs::read_dir(out).map(|mut d| d.next().is_none()).unwrap_or(false);
    if !empty && !out.join(marker).is_file() {
        return Err(CliError::Runtime(format!(
            "refusing to replace {}: it does not look like an output of this tool",
            out.display()
        )));
    }
    fs::remove_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
}

fn personas(args: RunArgs) -> Result<(), CliError> {
    let cfg = load_config(&args)?;
    let backend = connect(&cfg.backend)?;
    let corpus = load_corpus_for(&cfg)?;
    prepare_out(&args.out, args.force, PERSONAS_FILE)?;
    let population = build_population(&cfg.population, &corpus, backend.as_ref(), &cfg.persona)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    store::write_json(&args.out.join(PERSONAS_FILE), &population.profiles)?;
    store::write_json(&args.out.join(NARRATIVES_FILE), &population.narratives)?;
    for p in &population.profiles {
        let values: Vec<&str> = p.values.iter().map(|v| v.name()).collect();
        println!("{}\t{}\t{}", p.agent_id, p.display_name, if values.is_empty() { "-".into() } else { values.join(", ") });
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let cfg = load_config(&args)?;
    let backend = connect(&cfg.backend)?;
    prepare_out(&args.out, args.force, MANIFEST_FILE)?;
    let out = run_experiment(&cfg, &args.out, backend.as_ref())?;
    let s = &out.stats;
    println!("run directory: {}", out.dir.display());
    println!("agents:        {}", out.manifest.population.len());
    println!("rounds:        {}", s.rounds);
    println!("conversations: {} ({} messages)", s.conversations, s.turns);
    println!("survey waves:  {}", s.surveys);
    println!("proposals:     {}", out.proposals);
    println!("warnings:      {}", out.manifest.warnings);
    match out.report.emergence_index {
        Some(x) => println!("emergence:     {x:.3}"),
        None => println!("emergence:     absent"),
    }
    Ok(())
}

fn judge_for(dir: &Path) -> Result<Option<Box<dyn LlmBackend>>, CliError> {
    let (manifest, _) = store::load_run(dir)?;
    if manifest.config.analysis.ideology_mode == IdeologyMode::Backend {
        return Ok(Some(connect(&manifest.config.backend)?));
    }
    Ok(None)
}

fn analyze(dir: PathBuf, force: bool) -> Result<(), CliError> {
    let metrics = dir.join(METRICS_DIR);
    if metrics.exists() && !force {
        return Err(CliError::Runtime(format!("{} already exists; pass --force to replace it", metrics.display())));
    }
    let judge = judge_for(&dir)?;
    let report = analysis::analyze_run(&dir, judge.as_deref())?;
    println!("wrote {}", metrics.display());
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn report(runs: Vec<PathBuf>, out: Option<PathBuf>, force: bool) -> Result<(), CliError> {
    let mut loaded = Vec::new();
    for dir in &runs {
        let (manifest, events) = store::load_run(dir)?;
        let stored = dir.join(METRICS_DIR).join(REPORT_FILE);
        let report: MetricReport = if stored.is_file() {
            store::read_json(&stored)?
        } else {
            let judge = judge_for(dir)?;
            analysis::analyze(&events, &manifest.config.analysis, manifest.config.stage1.max_turns, judge.as_deref())?
        };
        loaded.push((manifest.config, report));
    }
    let rows = analysis::cross_run_report(&loaded);
    match out {
        Some(path) => {
            if path.exists() && !force {
                return Err(CliError::Runtime(format!("{} already exists; pass --force to replace it", path.display())));
            }
            let file = fs::File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            analysis::write_cross_run_csv(file, &rows)?;
            println!("wrote {}", path.display());
        }
        None => analysis::write_cross_run_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn replay(dir: PathBuf) -> Result<(), CliError> {
    let states = store::replay(&dir)?;
    println!("replay of {} matched: {} agents, log and snapshots identical", dir.display(), states.len());
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if cli.print_defaults {
        print!("{}", RunConfig::default().to_toml());
        return ExitCode::SUCCESS;
    }
    let result = match cli.command {
        Some(Command::Personas(a)) => personas(a),
        Some(Command::Run(a)) => run(a),
        Some(Command::Analyze { run, force }) => analyze(run, force),
        Some(Command::Report { runs, out, force }) => report(runs, out, force),
        Some(Command::Replay { run }) => replay(run),
        None => Err(CliError::Config("no command given; see --help".into())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
