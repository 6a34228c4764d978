use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gca_core::corpus::{detokenize, tokenize, EncodedPair, EncodedSequence, TOY_CORPUS};
use gca_core::evaluation::{rank_answers, Criterion, VoteStore};
use gca_core::model::Gca;
use gca_core::numerics::Adam;
use gca_core::training::{
    reproduction_rate, self_conversation, teacher_forcing_epoch, AdversarialTrainer, PhaseRecord, RunOptions,
    TrainingObserver,
};
use gca_service::bundle::{encode_corpus, prepare_corpus, ModelBundle};
use gca_service::settings::{resolve, ConfigFile, ModelFlags, ResolveError, Scale, SettingsError, TrainingFlags};
use gca_service::{agent, api, Agent, AppState, ServiceError, DEFAULT_LISTEN, LISTEN_ENV};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gca", version, about = "Train, chat with and evaluate the generative conversational agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML or JSON file with [model] and [training] tables; overrides flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default sizes and rates before flags and config file apply.
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(Subcommand)]
enum Command {
    /// Teacher forcing only; writes a model directory.
    Train {
        /// Corpus file: one utterance per line, blank lines between dialogues. Defaults to the bundled toy corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of epochs; defaults to initial_teacher_forcing_epochs.
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Full adversarial procedure; writes a model directory.
    AdversarialTrain {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Start from this model directory instead of a fresh model.
        #[arg(long)]
        init: Option<PathBuf>,
        /// JSON-lines phase log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory for per-round weight checkpoints.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Terminal chat with one model.
    Chat {
        #[arg(long)]
        model: PathBuf,
    },
    /// Writes machine dialogue pairs as JSON lines.
    Selfconv {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        machine_pairs: usize,
        #[arg(long, default_value_t = 2)]
        self_conversation_turns: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ranks candidate answers to a context with a model's discriminator.
    Rank {
        /// Model whose discriminator scores the answers.
        #[arg(long)]
        judge: PathBuf,
        /// Context utterance, oldest first; repeat for several.
        #[arg(long = "context", required = true)]
        context: Vec<String>,
        /// Candidates as ID=TEXT.
        #[arg(required = true)]
        answers: Vec<String>,
        #[arg(long, value_enum, default_value_t = CriterionArg::GeometricMean)]
        criterion: CriterionArg,
    },
    /// Tallies a vote file and prints the report as JSON.
    EvalReport {
        #[arg(long)]
        votes: PathBuf,
        /// Models to list even without wins.
        #[arg(long = "model")]
        models: Vec<String>,
    },
    /// Runs the HTTP/JSON service.
    Serve {
        /// Model as ID=DIR; repeat for A/B sessions.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        /// Model id whose discriminator ranks answers; defaults to the first.
        #[arg(long)]
        judge: Option<String>,
        #[arg(long, default_value = "votes.jsonl")]
        votes: PathBuf,
        #[arg(long, value_enum, default_value_t = CriterionArg::GeometricMean)]
        criterion: CriterionArg,
        #[arg(long, env = LISTEN_ENV, default_value = DEFAULT_LISTEN)]
        listen: String,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CriterionArg {
    GeometricMean,
    Probability,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::GeometricMean => Criterion::GeometricMean,
            CriterionArg::Probability => Criterion::Probability,
        }
    }
}

fn resolve_config(args: &ConfigArgs) -> Result<(gca_core::corpus::ModelConfig, gca_core::training::TrainingConfig)> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let file = ConfigFile::parse(&text, json).map_err(|e| SettingsError {
                location: path.display().to_string(),
                message: e.message,
            })?;
            Some(file)
        }
        None => None,
    };
    Ok(resolve(args.scale, &args.model, &args.training, file.as_ref())?)
}

fn corpus_text(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading corpus {}", p.display())),
        None => Ok(TOY_CORPUS.to_owned()),
    }
}

fn human_pairs(text: &str, config: gca_core::corpus::ModelConfig) -> Result<(ModelBundle, Vec<EncodedPair>)> {
    let (vocab, config, pairs) = prepare_corpus(text, config)?;
    if pairs.is_empty() {
        bail!("the corpus has no dialogue with two or more utterances");
    }
    Ok((ModelBundle::new(Gca::new(config, 0)?, vocab)?, pairs))
}

fn train(corpus: Option<&Path>, out: &Path, epochs: Option<usize>, args: &ConfigArgs) -> Result<()> {
    let (model_config, training) = resolve_config(args)?;
    let (mut bundle, pairs) = human_pairs(&corpus_text(corpus)?, model_config)?;
    bundle.model = Gca::new(bundle.model.config, training.seed)?;
    let epochs = epochs.unwrap_or(training.initial_teacher_forcing_epochs);
    let mut adam = Adam::default();
    let mut loss = f64::NAN;
    for epoch in 1..=epochs {
        loss = teacher_forcing_epoch(
            &mut bundle.model,
            &pairs,
            &mut adam,
            training.teacher_forcing_lr,
            training.batch_size,
        )?;
        if epoch % 50 == 0 || epoch == epochs {
            eprintln!("epoch {epoch}: loss {loss:.4}");
        }
    }
    let rate = reproduction_rate(&bundle.model, &pairs)?;
    bundle.save(out)?;
    println!(
        "{}",
        serde_json::json!({ "epochs": epochs, "loss": loss, "reproduction_rate": rate, "pairs": pairs.len(), "out": out })
    );
    Ok(())
}

struct PrintPhases;

impl TrainingObserver for PrintPhases {
    fn on_phase(&mut self, record: &PhaseRecord) {
        println!("{}", serde_json::to_string(record).expect("phase records serialize"));
    }
}

fn adversarial_train(
    corpus: Option<&Path>,
    out: &Path,
    init: Option<&Path>,
    options: RunOptions,
    args: &ConfigArgs,
) -> Result<()> {
    let (model_config, training) = resolve_config(args)?;
    let text = corpus_text(corpus)?;
    let (bundle, pairs) = match init {
        Some(dir) => {
            let bundle = ModelBundle::load(dir)?;
            let pairs = encode_corpus(&text, &bundle);
            (bundle, pairs)
        }
        None => {
            let (mut bundle, pairs) = human_pairs(&text, model_config)?;
            bundle.model = Gca::new(bundle.model.config, training.seed)?;
            (bundle, pairs)
        }
    };
    let trainer = AdversarialTrainer::new(bundle.model, training)?;
    let (model, _) = trainer.run(&pairs, &options, &mut PrintPhases)?;
    ModelBundle::new(model, bundle.vocab)?.save(out)?;
    Ok(())
}

fn chat(dir: &Path) -> Result<()> {
    let bundle = ModelBundle::load(dir)?;
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    let mut history: Vec<Vec<String>> = Vec::new();
    loop {
        write!(stdout, "> ")?;
        stdout.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        let tokens = tokenize(&line);
        if tokens.is_empty() {
            continue;
        }
        history.push(tokens);
        let context = bundle.encode_history(&history);
        let decoded = bundle.model.greedy_decode(&context)?;
        let score = bundle.model.answer_score(&context, &decoded.answer)?;
        let answer = bundle.answer_tokens(&decoded.answer);
        writeln!(stdout, "{}  [score {score:.4}]", detokenize(&answer))?;
        history.push(answer);
    }
    Ok(())
}

#[derive(Serialize)]
struct MachineLine {
    seed: String,
    context: String,
    answer: String,
}

fn selfconv(dir: &Path, corpus: Option<&Path>, out: &Path, count: usize, turns: usize, seed: u64) -> Result<()> {
    let bundle = ModelBundle::load(dir)?;
    let pairs = encode_corpus(&corpus_text(corpus)?, &bundle);
    let machine = self_conversation(&bundle.model, &pairs, count, turns, seed)?;
    let text = |s: &EncodedSequence| detokenize(&bundle.vocab.decode(s.tokens()));
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?,
    );
    for p in &machine.pairs {
        let line = MachineLine {
            seed: text(&p.seed),
            context: text(&p.context),
            answer: text(&p.answer),
        };
        writeln!(file, "{}", serde_json::to_string(&line)?)?;
    }
    file.flush()?;
    eprintln!("wrote {} pairs to {}", machine.len(), out.display());
    Ok(())
}

fn split_pair(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((id, rest)) if !id.is_empty() => Ok((id.to_owned(), rest.to_owned())),
        _ => bail!("expected ID=VALUE, got {s:?}"),
    }
}

fn rank(judge: &Path, context: &[String], answers: &[String], criterion: Criterion) -> Result<()> {
    let bundle = ModelBundle::load(judge)?;
    let history: Vec<Vec<String>> = context.iter().map(|u| tokenize(u)).collect();
    let ctx = bundle.encode_history(&history);
    let seq_len = bundle.model.config.seq_len;
    let mut encoded = Vec::new();
    for a in answers {
        let (id, text) = split_pair(a)?;
        let mut ids: Vec<usize> = tokenize(&text).iter().map(|t| bundle.vocab.id(t)).collect();
        ids.push(gca_core::corpus::EOS);
        encoded.push((id, EncodedSequence::from_ids(&ids, seq_len)?));
    }
    let ranking = rank_answers(&bundle.model, &ctx, &encoded, criterion)?;
    let candidates: Vec<agent::CandidateView> = ranking
        .candidates
        .iter()
        .map(|c| agent::CandidateView {
            model: c.model.clone(),
            text: bundle.answer_text(&c.answer),
            score: c.score,
            probability: c.probability,
        })
        .collect();
    let out = serde_json::json!({ "candidates": candidates, "tie": ranking.tie, "winner": ranking.winner() });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn eval_report(votes: &Path, models: &[String]) -> Result<()> {
    let current = VoteStore::open(votes).current()?;
    let report = agent::report(&current, models);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn serve(models: &[String], judge: Option<String>, votes: PathBuf, criterion: Criterion, listen: &str) -> Result<()> {
    let mut loaded = Vec::new();
    for m in models {
        let (id, dir) = split_pair(m)?;
        let bundle = ModelBundle::load(Path::new(&dir)).with_context(|| format!("loading model {id}"))?;
        loaded.push((id, bundle));
    }
    let agent = Agent::new(loaded, judge, criterion)?;
    let state = Arc::new(AppState::new(agent, VoteStore::open(votes)));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .with_context(|| format!("binding {listen}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            corpus,
            out,
            epochs,
            config,
        } => train(corpus.as_deref(), &out, epochs, &config),
        Command::AdversarialTrain {
            corpus,
            out,
            init,
            log,
            checkpoints,
            config,
        } => adversarial_train(
            corpus.as_deref(),
            &out,
            init.as_deref(),
            RunOptions {
                checkpoint_dir: checkpoints,
                log_path: log,
            },
            &config,
        ),
        Command::Chat { model } => chat(&model),
        Command::Selfconv {
            model,
            corpus,
            out,
            machine_pairs,
            self_conversation_turns,
            seed,
        } => selfconv(&model, corpus.as_deref(), &out, machine_pairs, self_conversation_turns, seed),
        Command::Rank {
            judge,
            context,
            answers,
            criterion,
        } => rank(&judge, &context, &answers, criterion.into()),
        Command::EvalReport { votes, models } => eval_report(&votes, &models),
        Command::Serve {
            models,
            judge,
            votes,
            criterion,
            listen,
        } => serve(&models, judge, votes, criterion.into(), &listen),
    }
}

/// 2 for malformed input data, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let data_format = err.chain().any(|cause| {
        if let Some(e) = cause.downcast_ref::<gca_core::Error>() {
            return e.is_data_format();
        }
        match cause.downcast_ref::<ServiceError>() {
            Some(ServiceError::Core(e)) => return e.is_data_format(),
            Some(_) => return false,
            None => {}
        }
        matches!(cause.downcast_ref::<ResolveError>(), Some(ResolveError::Format(_)))
            || cause.is::<SettingsError>()
            || cause.is::<serde_json::Error>()
    });
    if data_format {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
