use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use talklearn::client::{script_for, ScriptedClient};
use talklearn_core::learning::{build_language_test, score_test, LanguageTest, SimulatedLearner};
use talklearn_core::model::ParticipantId;
use talklearn_core::orchestrator::{
    build_report, random_trace, render_table, simulate, ClockMode, Config, LexiconSpec, RandomTraceParams, Trace,
};
use talklearn_core::telemetry::{parse_log, record_questionnaire, write_log, EventLog, QuestionnaireRecord};

#[derive(Parser)]
#[command(name = "talklearn", version, about = "Delay-matched cross-lingual conversations with learning during waits")]
struct Cli {
    /// JSON configuration file; defaults apply when absent.
    #[arg(long, global = true, env = "TALKLEARN_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Virtual,
    Wall,
}

#[derive(Subcommand)]
enum Command {
    /// Run the WebSocket session server.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        clock: Option<Clock>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a trace under the virtual clock and write the session log.
    Simulate {
        trace: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Metrics for a session log.
    Report {
        log: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Build or score a post-session language test.
    Quiz {
        #[command(subcommand)]
        action: QuizAction,
    },
    /// Append a questionnaire response to a closed log.
    Questionnaire {
        log: PathBuf,
        /// JSON object with `participant`, `answers` and optional `free_text`.
        response: PathBuf,
    },
    /// Write a seeded random trace.
    GenTrace {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        utterances: usize,
        /// Lexicon file of first-language to second-language words.
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, default_value = "en")]
        first: String,
        #[arg(long, default_value = "fr")]
        second: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Play one participant of a trace against a running server.
    Client {
        url: String,
        trace: PathBuf,
        #[arg(long)]
        participant: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum QuizAction {
    Build {
        log: PathBuf,
        #[arg(long, default_value_t = 6)]
        items: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict to one participant's material; everyone's when absent.
        #[arg(long)]
        participant: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    Score {
        test: PathBuf,
        /// JSON array with one answer (string or null) per test item.
        answers: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn read_log(path: &Path) -> anyhow::Result<EventLog> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_log(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Serve {
            port,
            host,
            log_dir,
            clock,
            seed,
        } => {
            let mut config = config;
            if let Some(p) = port {
                config.server.port = p;
            }
            if let Some(d) = log_dir {
                config.server.log_dir = d;
            }
            if let Some(c) = clock {
                config.server.clock = match c {
                    Clock::Virtual => ClockMode::Virtual,
                    Clock::Wall => ClockMode::Wall,
                };
            }
            if let Some(s) = seed {
                config.server.seed = s;
            }
            let bind: SocketAddr = format!("{host}:{}", config.server.port).parse()?;
            tokio::runtime::Runtime::new()?.block_on(talklearn::server::serve(config, bind))
        }
        Command::Simulate { trace, seed, out } => {
            let trace = Trace::load(&trace)?;
            let log = simulate(&trace, &config, seed)?;
            let mut w = output(out.as_deref())?;
            write_log(&log, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Report { log, json } => {
            let log = read_log(&log)?;
            let report = build_report(&log, &config.learning.incentive)?;
            if json {
                write_json(None, &report)
            } else {
                print!("{}", render_table(&report));
                Ok(())
            }
        }
        Command::Quiz { action } => match action {
            QuizAction::Build {
                log,
                items,
                seed,
                participant,
                out,
            } => {
                let log = read_log(&log)?;
                let participant = participant.map(ParticipantId::new);
                let test = build_language_test(&log, items, seed, participant.as_ref())?;
                write_json(out.as_deref(), &test)
            }
            QuizAction::Score { test, answers } => {
                let test: LanguageTest = serde_json::from_slice(&std::fs::read(&test)?)?;
                let answers: Vec<Option<String>> = serde_json::from_slice(&std::fs::read(&answers)?)?;
                if answers.len() != test.items.len() {
                    bail!("{} answers for {} test items", answers.len(), test.items.len());
                }
                write_json(None, &score_test(&test, &answers, config.learning.threshold))
            }
        },
        Command::Questionnaire { log: path, response } => {
            let mut log = read_log(&path)?;
            let record: QuestionnaireRecord = serde_json::from_slice(&std::fs::read(&response)?)?;
            record_questionnaire(&mut log, &record)?;
            let mut w = output(Some(&path))?;
            write_log(&log, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::GenTrace {
            seed,
            utterances,
            lexicon,
            first,
            second,
            out,
        } => {
            let spec = LexiconSpec {
                languages: (first.as_str().into(), second.as_str().into()),
                path: Some(lexicon),
                pairs: None,
            };
            let lexicon = spec.load(Path::new("."))?;
            let params = RandomTraceParams {
                utterances,
                ..RandomTraceParams::default()
            };
            write_json(out.as_deref(), &random_trace(seed, &lexicon, &params))
        }
        Command::Client {
            url,
            trace,
            participant,
            seed,
        } => {
            let trace = Trace::load(&trace)?.resolve(&config)?;
            let participant = ParticipantId::new(participant);
            let messages = script_for(&trace, &participant)?;
            let learner = SimulatedLearner::new(seed, config.learning.learner_accuracy);
            let client = ScriptedClient::new(participant, messages, Some(learner));
            let received = tokio::runtime::Runtime::new()?.block_on(client.run(&url))?;
            let mut w = output(None)?;
            for m in received {
                writeln!(w, "{}", m.to_json())?;
            }
            Ok(())
        }
    }
}
