use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use env_logger::Env;
use log::info;

use dppal::alsim::output::{self, arm_dir, combine_curves, las_table, write_checkpoint, write_report, CURVES_FILE, DIVERSITY_FILE};
use dppal::alsim::{load_data, run_experiment_on, ExperimentReport, Profile, RunConfig, RunContext};
use dppal::diversity::{write_features_csv, FeatureKind};
use dppal::parser::RootMode;
use dppal::quality::{write_quality_csv, Strategy};
use dppal::synthetic::generate_split;
use dppal::treebank::{write_conllu_file, PoolCheckpoint, PoolState};

#[derive(Parser, Debug)]
#[command(author, version, about = "Diversity-aware batch active learning for dependency parsing")]
struct Cli {
    /// Increase log verbosity (-v, -vv)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one configuration for several repeats
    Run(RunArgs),
    /// Run every strategy with and without DPP selection
    Sweep(SweepArgs),
    /// Combine curves.csv files into one table
    Report(ReportArgs),
    /// Write a synthetic CoNLL-U train/test pair
    Synth(SynthArgs),
    /// Dump pool quality scores and feature matrices under the seed model
    Dump(DumpArgs),
}

/// Flags mirroring `RunConfig`; each overrides the profile or config file.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML or JSON config file, layered over the profile
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Budget profile: toy or paper
    #[arg(long, default_value = "toy")]
    profile: String,
    /// Training corpus (CoNLL-U); synthetic data is generated when omitted
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Held-out corpus (CoNLL-U)
    #[arg(long, value_name = "FILE")]
    test: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    synthetic_train: Option<usize>,
    #[arg(long)]
    synthetic_test: Option<usize>,
    /// Duplicate the training corpus this many times
    #[arg(long)]
    fold: Option<usize>,
    /// random, amp, bald or id
    #[arg(long)]
    strategy: Option<String>,
    /// Select with greedy DPP MAP instead of top-k
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dpp: Option<bool>,
    /// averaged or subgraph
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n_seed: Option<usize>,
    #[arg(long)]
    sentence_budget: Option<usize>,
    #[arg(long)]
    token_budget: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    k_bald: Option<usize>,
    #[arg(long)]
    p_drop: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    projection_dim: Option<usize>,
    #[arg(long)]
    projection_seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    hash_bits: Option<u32>,
    #[arg(long)]
    rel_hash_bits: Option<u32>,
    /// Restrict trees to a single root dependent
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    single_root: Option<bool>,
    /// Save pool and model checkpoints after every round
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    checkpoints: Option<bool>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig> {
        let base = RunConfig::profile(self.profile.parse::<Profile>()?);
        let mut c = match &self.config {
            Some(path) => RunConfig::load_over(path, &base).with_context(|| format!("loading {}", path.display()))?,
            None => base,
        };
        macro_rules! set {
            ($field:ident, $target:expr) => {
                if let Some(v) = self.$field.clone() {
                    $target = v;
                }
            };
        }
        if let Some(p) = &self.corpus {
            c.corpus_path = Some(p.clone());
        }
        if let Some(p) = &self.test {
            c.test_path = Some(p.clone());
        }
        set!(test_fraction, c.test_fraction);
        set!(synthetic_train, c.synthetic_train);
        set!(synthetic_test, c.synthetic_test);
        set!(fold, c.fold);
        if let Some(s) = &self.strategy {
            c.strategy = s.parse()?;
        }
        set!(dpp, c.use_dpp);
        if let Some(k) = &self.kind {
            c.diversity_kind = k.parse()?;
        }
        set!(n_seed, c.n_seed_sentences);
        set!(sentence_budget, c.sentence_stage_token_budget);
        set!(token_budget, c.token_budget_per_round);
        set!(rounds, c.rounds);
        set!(k_bald, c.k_bald);
        set!(p_drop, c.p_drop);
        set!(seed, c.seed);
        set!(repeats, c.repeats);
        set!(projection_dim, c.projection_dim);
        set!(projection_seed, c.projection_seed);
        set!(epochs, c.parser.epochs);
        set!(learning_rate, c.parser.learning_rate);
        set!(hash_bits, c.parser.hash_bits);
        set!(rel_hash_bits, c.parser.rel_hash_bits);
        if let Some(single) = self.single_root {
            c.parser.root_mode = if single { RootMode::Single } else { RootMode::Multi };
        }
        set!(checkpoints, c.checkpoints);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Continue one repeat from a pool checkpoint
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
    /// Repeat index used with --resume
    #[arg(long, default_value_t = 0)]
    repeat: usize,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(short, long, default_value = "sweep")]
    out: PathBuf,
    /// Strategies to include (comma separated)
    #[arg(long, value_delimiter = ',', default_value = "random,amp,bald,id")]
    strategies: Vec<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run or sweep directories
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Write the combined curves here
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 500)]
    test: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(short, long, default_value = "dump")]
    out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Report(args) => report(args),
        Command::Synth(args) => synth(args),
        Command::Dump(args) => dump(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.config.build()?;
    let data = load_data(&config)?;
    info!(
        "{}: {} training sentences ({} tokens), {} test sentences{}",
        config.arm(),
        data.train.len(),
        data.train.token_count(),
        data.test.len(),
        if data.synthetic { ", synthetic corpus" } else { "" }
    );
    let report = match &args.resume {
        Some(path) => {
            let ckpt: PoolCheckpoint =
                serde_json::from_reader(BufReader::new(File::open(path)?)).with_context(|| format!("reading {}", path.display()))?;
            let state = PoolState::from_checkpoint(&data.train, &ckpt)?;
            let ctx = RunContext { config: &config, train: &data.train, test: &data.test, repeat: args.repeat };
            let trace = ctx.resume(state, |o| checkpoint(&config, &args.out, &data.train, o))?;
            ExperimentReport { config: config.clone(), synthetic_corpus: data.synthetic, runs: vec![trace] }
        }
        None if config.checkpoints => {
            let runs = (0..config.repeats)
                .map(|repeat| {
                    let ctx = RunContext { config: &config, train: &data.train, test: &data.test, repeat };
                    ctx.run(|o| checkpoint(&config, &args.out, &data.train, o))
                })
                .collect::<dppal::Result<_>>()?;
            ExperimentReport { config: config.clone(), synthetic_corpus: data.synthetic, runs }
        }
        None => run_experiment_on(&config, &data, config.repeats)?,
    };
    write_report(&report, &args.out)?;
    print_summary(&report);
    info!("wrote {}", args.out.display());
    Ok(())
}

fn checkpoint(config: &RunConfig, out: &Path, train: &dppal::treebank::Corpus, o: &dppal::alsim::RoundOutcome) -> dppal::Result<()> {
    if config.checkpoints {
        write_checkpoint(out, train, o)?;
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    for row in report.curve() {
        println!(
            "{:>4} {:<10} LAS {:6.2} ± {:5.2}  UAS {:6.2} ± {:5.2}",
            row.round,
            report.config.arm(),
            row.mean_las,
            row.std_las,
            row.mean_uas,
            row.std_uas
        );
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = args.config.build()?;
    let data = load_data(&base)?;
    let strategies: Vec<Strategy> = args.strategies.iter().map(|s| s.parse()).collect::<dppal::Result<_>>()?;
    let mut curves = Vec::new();
    let mut diversity = Vec::new();
    for strategy in strategies {
        for use_dpp in [false, true] {
            let config = RunConfig { strategy, use_dpp, ..base.clone() };
            info!("sweep arm {}", config.arm());
            let report = run_experiment_on(&config, &data, config.repeats)?;
            write_report(&report, &arm_dir(&args.out, &config))?;
            curves.extend(report.curve());
            diversity.extend(report.diversity());
        }
    }
    output::write_curves(&curves, BufWriter::new(File::create(args.out.join(CURVES_FILE))?))?;
    output::write_diversity(&diversity, BufWriter::new(File::create(args.out.join(DIVERSITY_FILE))?))?;
    let lines = combine_curves(std::slice::from_ref(&args.out))?;
    println!("{}", las_table(&lines));
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let lines = combine_curves(&args.dirs)?;
    print!("{}", las_table(&lines));
    if let Some(out) = args.out {
        let mut w = csv::Writer::from_path(&out)?;
        for l in &lines {
            w.serialize(l)?;
        }
        w.flush()?;
        info!("wrote {}", out.display());
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    if args.train == 0 || args.test == 0 {
        bail!("--train and --test must be positive");
    }
    fs::create_dir_all(&args.out)?;
    let (train, test) = generate_split(args.train, args.test, args.seed)?;
    write_conllu_file(&train, args.out.join("train.conllu"))?;
    write_conllu_file(&test, args.out.join("test.conllu"))?;
    info!("wrote {} + {} sentences to {}", train.len(), test.len(), args.out.display());
    Ok(())
}

fn dump(args: DumpArgs) -> Result<()> {
    let config = args.config.build()?;
    let data = load_data(&config)?;
    let ctx = RunContext { config: &config, train: &data.train, test: &data.test, repeat: 0 };
    let state = ctx.initial_state()?;
    let model = ctx.train_model(&state)?;
    let snap = ctx.inspect_pool(&state, &model)?;
    fs::create_dir_all(&args.out)?;
    write_quality_csv(&snap.quality, BufWriter::new(File::create(args.out.join("quality.csv"))?))?;
    for (kind, feats) in [(FeatureKind::Averaged, &snap.averaged), (FeatureKind::Subgraph, &snap.subgraph)] {
        write_features_csv(feats, BufWriter::new(File::create(args.out.join(format!("features-{kind}.csv")))?))?;
    }
    let mut w = BufWriter::new(File::create(args.out.join("model.json"))?);
    model.write_json(&mut w)?;
    w.flush()?;
    info!("wrote quality, features and seed model to {}", args.out.display());
    Ok(())
}
