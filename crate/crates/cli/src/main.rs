//! `qudsim` command-line front end. Every command works on a workspace
//! directory (`corpus/`, `derived/`, `gold/`, `reports/`, `runs/`) and
//! records a run manifest under `runs/`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qudsim::alignment::{Provenance, TemplateCounting, ThresholdConfig};
use qudsim::config::Config;
use qudsim::corpus::{AbstractionLevel, PairId};
use qudsim::scoring::Metric;
use qudsim::workflow::{now_ms, RunManifest, Session};
use qudsim::{Error, Result};

const BUNDLED_FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/transcripts");

#[derive(Debug, Parser)]
#[command(
    name = "qudsim",
    version,
    about = "Discourse-structure similarity via questions under discussion"
)]
struct Cli {
    /// Workspace directory.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replay the bundled transcripts instead of calling a backend.
    #[arg(long, global = true)]
    fixtures: bool,
    /// Replay transcripts from this directory; implies --fixtures.
    #[arg(long, global = true)]
    fixtures_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// QUD level used for scoring.
    #[arg(long, global = true)]
    level: Option<AbstractionLevel>,
    /// Align only when both directions exceed tau.
    #[arg(long, global = true)]
    per_direction: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DocArgs {
    /// Document ids; all documents when omitted.
    #[arg(long = "doc")]
    docs: Vec<String>,
}

#[derive(Debug, Args)]
struct PairArgs {
    /// Ordered pairs `SOURCE:TARGET`; every heatmap-eligible pair when
    /// omitted.
    #[arg(long = "pair")]
    pairs: Vec<PairId>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Copy documents into corpus/.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    Segment(DocArgs),
    Abstract(DocArgs),
    Quds {
        #[command(flatten)]
        docs: DocArgs,
    },
    Answer {
        #[command(flatten)]
        pairs: PairArgs,
    },
    Score {
        #[arg(long)]
        metric: Metric,
        #[command(flatten)]
        pairs: PairArgs,
    },
    Align {
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        pairs: PairArgs,
    },
    Calibrate {
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        dev_fraction: Option<f64>,
    },
    Eval {
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        tau: Option<f64>,
    },
    Templates {
        #[arg(long, default_value = "qudsim")]
        metric: Metric,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        counting: Option<TemplateCounting>,
    },
    Heatmap {
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        tau: Option<f64>,
    },
    Report {
        #[arg(long)]
        pair: PairId,
        #[arg(long)]
        metric: Metric,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Segment(_) => "segment",
            Command::Abstract(_) => "abstract",
            Command::Quds { .. } => "quds",
            Command::Answer { .. } => "answer",
            Command::Score { .. } => "score",
            Command::Align { .. } => "align",
            Command::Calibrate { .. } => "calibrate",
            Command::Eval { .. } => "eval",
            Command::Templates { .. } => "templates",
            Command::Heatmap { .. } => "heatmap",
            Command::Report { .. } => "report",
        }
    }
}

impl Cli {
    fn replay_dir(&self) -> Option<PathBuf> {
        match (&self.fixtures_dir, self.fixtures) {
            (Some(dir), _) => Some(dir.clone()),
            (None, true) => Some(PathBuf::from(BUNDLED_FIXTURES)),
            (None, false) => None,
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.parallelism {
        if p == 0 {
            return Err(Error::InvalidInput("--parallelism must be at least 1".into()));
        }
        cfg.parallelism = p;
    }
    if let Some(level) = cli.level {
        cfg.level = level;
    }
    if cli.per_direction {
        cfg.per_direction = true;
    }
    if let Command::Calibrate {
        dev_fraction: Some(f),
        ..
    } = &cli.command
    {
        if !(*f > 0.0 && *f <= 1.0) {
            return Err(Error::InvalidInput("--dev-fraction must lie in (0, 1]".into()));
        }
        cfg.dev_fraction = *f;
    }
    if let Command::Templates {
        counting: Some(c), ..
    } = &cli.command
    {
        cfg.template_counting = *c;
    }
    Ok(cfg)
}

fn threshold(cfg: &Config, metric: &Metric, tau: Option<f64>) -> Result<ThresholdConfig> {
    let id = metric.id();
    match tau {
        Some(tau) => ThresholdConfig::new(&id, tau, Provenance::Manual),
        None => cfg
            .threshold_for(&id)
            .ok_or_else(|| Error::InvalidInput(format!("no default threshold for `{id}`; pass --tau"))),
    }
}

fn docs_or_all(s: &Session, docs: &[String]) -> Result<Vec<String>> {
    if docs.is_empty() {
        s.ws.document_ids()
    } else {
        Ok(docs.to_vec())
    }
}

fn pairs_or_eligible(s: &Session, pairs: &[PairId]) -> Result<Vec<PairId>> {
    if pairs.is_empty() {
        s.eligible_pairs()
    } else {
        Ok(pairs.to_vec())
    }
}

/// Stage names and the model behind each one.
fn stages(cmd: &Command, cfg: &Config) -> Vec<(String, String)> {
    let chat = cfg.backend.model_name.clone();
    match cmd {
        Command::Segment(_) => vec![("segmentation".into(), chat)],
        Command::Abstract(_) => vec![("abstraction".into(), chat)],
        Command::Quds { .. } => vec![("qud_gen".into(), chat)],
        Command::Answer { .. } => vec![("qud_answer".into(), chat)],
        Command::Score { metric, .. } => {
            let model = match metric {
                Metric::Cosine => cfg.embedding.model_name.clone(),
                Metric::Judge(m) => m.clone(),
                _ => "none".into(),
            };
            vec![(format!("score:{}", metric.id()), model)]
        }
        other => vec![(other.name().to_string(), "none".into())],
    }
}

fn execute(cli: &Cli, s: &Session) -> Result<Vec<PathBuf>> {
    let level = s.cfg.level;
    let mut out = Vec::new();
    match &cli.command {
        Command::Ingest { files } => out = s.ingest(files)?,
        Command::Segment(d) => {
            for id in docs_or_all(s, &d.docs)? {
                out.extend(s.segment(&id)?);
            }
        }
        Command::Abstract(d) => {
            for id in docs_or_all(s, &d.docs)? {
                out.extend(s.abstract_document(&id)?);
            }
        }
        Command::Quds { docs } => {
            for id in docs_or_all(s, &docs.docs)? {
                out.extend(s.quds(&id, level)?);
            }
        }
        Command::Answer { pairs } => {
            for p in pairs_or_eligible(s, &pairs.pairs)? {
                out.extend(s.answer(&p, level)?);
            }
        }
        Command::Score { metric, pairs } => {
            for p in pairs_or_eligible(s, &pairs.pairs)? {
                out.extend(s.score(&p, metric)?);
            }
        }
        Command::Align { metric, tau, pairs } => {
            let t = threshold(&s.cfg, metric, *tau)?;
            for p in pairs_or_eligible(s, &pairs.pairs)? {
                out.extend(s.align(&p, &t)?);
            }
        }
        Command::Calibrate { metric, .. } => {
            let (c, paths) = s.calibrate(&metric.id())?;
            println!(
                "tau = {:.4}  dev F1 = {:.4}  test F1 = {}",
                c.config.tau,
                c.dev_f1,
                c.test_f1.map_or("n/a".into(), |f| format!("{f:.4}"))
            );
            out = paths;
        }
        Command::Eval { metric, tau } => {
            let (e, paths) = s.eval(&threshold(&s.cfg, metric, *tau)?)?;
            for r in std::iter::once(&e.overall).chain(&e.by_domain) {
                println!(
                    "{:<10} P = {:.4}  R = {:.4}  F1 = {:.4}",
                    r.domain.map_or("all", |d| d.as_str()),
                    r.precision,
                    r.recall,
                    r.f1
                );
            }
            out = paths;
        }
        Command::Templates { metric, n, .. } => {
            let (t, paths) = s.templates(&metric.id(), *n)?;
            println!("{} templates of length {n} over {} pairs", t.total, t.pairs.len());
            out = paths;
        }
        Command::Heatmap { metric, tau } => {
            out = s.heatmap(&threshold(&s.cfg, metric, *tau)?)?.1;
        }
        Command::Report { pair, metric } => out = s.report(pair, &metric.id())?,
    }
    Ok(out)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingArtifact(_) => 2,
        e if e.is_backend() => 3,
        _ => 1,
    }
}

fn run(cli: &Cli, args: Vec<String>) -> Result<()> {
    let started = now_ms();
    let cfg = load_config(cli)?;
    let replay = cli.replay_dir();
    let session = Session::open(&cli.root, cfg, replay.as_deref())?;
    let result = execute(cli, &session);
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        args,
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        config_hash: session.cfg.hash(),
        corpus_path: session.ws.corpus_dir().display().to_string(),
        fixtures: replay.as_ref().map(|p| p.display().to_string()),
        stages: stages(&cli.command, &session.cfg)
            .iter()
            .map(|(s, _)| s.clone())
            .collect(),
        backends: stages(&cli.command, &session.cfg).into_iter().collect(),
        seed: session.cfg.seed,
        started_at_ms: started,
        finished_at_ms: now_ms(),
        cache: session.gw.stats(),
        outputs: result
            .as_ref()
            .map(|o| o.iter().map(|p| display_rel(p, session.ws.root())).collect())
            .unwrap_or_default(),
        status: match &result {
            Ok(_) => "ok".into(),
            Err(e) => format!("error: {e}"),
        },
    };
    let path = session
        .ws
        .runs_dir()
        .join(format!("{started}-{}.json", manifest.command));
    qudsim::corpus::store::write_json(&path, &manifest)?;
    for p in result? {
        println!("{}", p.display());
    }
    Ok(())
}

fn display_rel(p: &Path, root: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
