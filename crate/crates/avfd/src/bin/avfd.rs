use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use avfd::checkpoint::Checkpoint;
use avfd::config::RunConfig;
use avfd::error::{Error, Result};
use avfd::prompts::PromptSet;
use avfd::synth::{self, SynthConfig};
use avfd::{corrupt, media, pipeline, plot};
use avfd_core::data::{Label, Scenario, Split};
use avfd_core::evaluation::{self, DiagnosticReport, DEFAULT_OVERLAP_BINS};
use avfd_core::perturb::Corruption;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avfd", version, about = "Text-guided audio-visual forgery detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the real clips of a manifest's train split.
    Train(TrainArgs),
    /// Score a split and report AP and AUC, optionally under corruptions.
    Evaluate(EvaluateArgs),
    /// Score overlap and MMD² between real and fake groups.
    Diagnose(DiagnoseArgs),
    /// Write a corrupted copy of a dataset.
    Corrupt(CorruptArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Inspect prompt files.
    #[command(subcommand)]
    Prompts(PromptsCommand),
}

#[derive(Args)]
struct RunDir {
    /// Output directory; defaults to `runs/<timestamp>-<tag>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tag: Option<String>,
}

impl RunDir {
    fn resolve(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            PathBuf::from("runs").join(format!("{ts}-{}", self.tag.as_deref().unwrap_or(command)))
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    dir: RunDir,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Corruption spec such as `blur:ksize=5`, or `all`; repeatable.
    #[arg(long = "corrupt", value_name = "SPEC")]
    corruptions: Vec<String>,
    /// Skip the uncorrupted pass.
    #[arg(long)]
    no_clean: bool,
    /// Also write PNG charts.
    #[arg(long)]
    plots: bool,
    #[command(flatten)]
    dir: RunDir,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Score reports written by `evaluate`.
    #[arg(long, conflicts_with_all = ["real_scores", "fake_scores"])]
    reports: Option<PathBuf>,
    /// One real video score per line.
    #[arg(long, requires = "fake_scores")]
    real_scores: Option<PathBuf>,
    #[arg(long, requires = "real_scores")]
    fake_scores: Option<PathBuf>,
    /// Feature rows of the first group.
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_OVERLAP_BINS)]
    bins: usize,
    #[arg(long)]
    plots: bool,
    #[command(flatten)]
    dir: RunDir,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Corruption spec, e.g. `noise:sigma=25,seed=7`.
    #[arg(long)]
    spec: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Put every clip in this split instead of reals in train and fakes in test.
    #[arg(long)]
    split: Option<Split>,
    #[arg(long, default_value = "talking")]
    scenario: Scenario,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    classes: usize,
}

#[derive(Subcommand)]
enum PromptsCommand {
    /// Print a prompt file, or the built-in prompts.
    Dump { file: Option<PathBuf> },
    /// Check a prompt file and print its counts.
    Validate { file: PathBuf },
}

fn effective(command: &str, args: &[(&str, String)], config: Option<&RunConfig>) -> String {
    let mut s = format!("command = {command}\n");
    for (k, v) in args {
        let _ = writeln!(s, "{k} = {v}");
    }
    if let Some(c) = config {
        s.push_str(&c.to_text());
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn train(a: TrainArgs) -> Result<()> {
    let mut overrides = a.overrides.clone();
    overrides.extend(a.seed.map(|s| format!("seed={s}")));
    overrides.extend(a.epochs.map(|e| format!("epochs={e}")));
    let config = RunConfig::resolve(a.config.as_deref(), &overrides)?;
    let dir = a.dir.resolve("train");
    let ck = pipeline::train(&a.manifest, &config)?;
    write_text(
        &dir.join("effective-config.txt"),
        &effective("train", &[("manifest", display(&a.manifest))], Some(&config)),
    )?;
    let path = dir.join("checkpoint.avfd");
    ck.save(&path)?;
    write_text(&dir.join("loss.tsv"), &pipeline::loss_log(&ck))?;
    if let Some((first, last)) = avfd_core::training::loss_trend(&ck.history, 0.1) {
        eprintln!("loss {first:.6} -> {last:.6} over {} steps", ck.history.len());
    }
    println!("{}", path.display());
    Ok(())
}

fn parse_corruptions(specs: &[String]) -> Result<Vec<Corruption>> {
    let mut out = Vec::new();
    for s in specs {
        if s == "all" {
            for k in Corruption::KINDS {
                out.push(Corruption::default_for(k)?);
            }
        } else {
            let c: Corruption = s.parse()?;
            c.validate()?;
            out.push(c);
        }
    }
    Ok(out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let corruptions = parse_corruptions(&a.corruptions)?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let dir = a.dir.resolve("evaluate");
    let mut conditions: Vec<Option<Corruption>> = Vec::new();
    if !a.no_clean {
        conditions.push(None);
    }
    conditions.extend(corruptions.iter().copied().map(Some));
    let evals =
        conditions.into_iter().map(|c| pipeline::evaluate(&a.manifest, &ck, a.split, c)).collect::<Result<Vec<_>>>()?;
    let args = [
        ("manifest", display(&a.manifest)),
        ("checkpoint", display(&a.checkpoint)),
        ("split", a.split.to_string()),
        ("corrupt", corruptions.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")),
        ("clean", (!a.no_clean).to_string()),
    ];
    write_text(&dir.join("effective-config.txt"), &effective("evaluate", &args, Some(&ck.config)))?;
    pipeline::write_evaluation(&dir, &evals)?;
    if a.plots {
        for e in &evals {
            let (real, fake) = split_scores(&e.reports);
            let name = e.corruption.map_or("clean", |c| c.kind());
            media::write_png(
                &dir.join(format!("plots/scores-{name}.png")),
                &plot::score_histogram(&real, &fake, ck.config.overlap_bins),
            )?;
        }
        let aucs: Vec<f64> = evals.iter().map(|e| e.metrics.overall.auc).collect();
        media::write_png(&dir.join("plots/auc.png"), &plot::auc_bars(&aucs))?;
    }
    print!("{}", pipeline::metrics_text(&evals));
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn split_scores(reports: &[evaluation::ScoreReport]) -> (Vec<f64>, Vec<f64>) {
    let pick = |l| reports.iter().filter(|r| r.label == l).map(|r| r.video_score).collect();
    (pick(Label::Real), pick(Label::Fake))
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    Ok(pipeline::read_rows(path)?.into_iter().flatten().collect())
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    if a.bins < 2 {
        return Err(Error::Config("bins must be at least 2".into()));
    }
    let mut report = DiagnosticReport::new(a.bins);
    let mut scores = None;
    let mut args = vec![("bins", a.bins.to_string())];
    if let Some(p) = &a.reports {
        let reports = pipeline::read_reports(p)?;
        report = pipeline::diagnose_reports(&reports, a.bins)?;
        scores = Some(split_scores(&reports));
        args.push(("reports", display(p)));
    }
    if let (Some(r), Some(f)) = (&a.real_scores, &a.fake_scores) {
        let (real, fake) = (read_scores(r)?, read_scores(f)?);
        report = report.with_overlap(&real, &fake)?;
        scores = Some((real, fake));
        args.push(("real_scores", display(r)));
        args.push(("fake_scores", display(f)));
    }
    if let (Some(x), Some(y)) = (&a.x, &a.y) {
        let mx = pipeline::rows_to_matrix(&pipeline::read_rows(x)?, x)?;
        let my = pipeline::rows_to_matrix(&pipeline::read_rows(y)?, y)?;
        report = report.with_mmd(&mx, &my)?;
        args.push(("x", display(x)));
        args.push(("y", display(y)));
    }
    if args.len() == 1 {
        return Err(Error::Config("give --reports, --real-scores/--fake-scores or --x/--y".into()));
    }
    let dir = a.dir.resolve("diagnose");
    write_text(&dir.join("effective-config.txt"), &effective("diagnose", &args, None))?;
    pipeline::write_diagnostics(&dir, &report)?;
    if let (true, Some((real, fake))) = (a.plots, &scores) {
        media::write_png(&dir.join("plots/scores.png"), &plot::score_histogram(real, fake, a.bins))?;
    }
    print!("{}", pipeline::diagnostics_text(&report));
    Ok(())
}

fn corrupt_cmd(a: CorruptArgs) -> Result<()> {
    let spec: Corruption = a.spec.parse()?;
    let m = corrupt::corrupt_dataset(&a.manifest, &spec, &a.out)?;
    let args = [("manifest", display(&a.manifest)), ("spec", spec.to_string()), ("out", display(&a.out))];
    write_text(&a.out.join("effective-config.txt"), &effective("corrupt", &args, None))?;
    println!("{} records -> {}", m.records.len(), a.out.join("manifest.txt").display());
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n: a.n,
        seed: a.seed,
        frames: a.frames,
        classes: a.classes,
        split: a.split,
        scenario: a.scenario,
        ..SynthConfig::default()
    };
    let m = synth::generate(&cfg, &a.out)?;
    let args = [
        ("n", a.n.to_string()),
        ("seed", a.seed.to_string()),
        ("out", display(&a.out)),
        ("split", a.split.map_or_else(|| "auto".into(), |s| s.to_string())),
        ("scenario", a.scenario.to_string()),
        ("frames", a.frames.to_string()),
        ("classes", a.classes.to_string()),
    ];
    write_text(&a.out.join("effective-config.txt"), &effective("synth", &args, None))?;
    let fakes = m.records.iter().filter(|r| r.label == Label::Fake).count();
    println!("{} real, {fakes} fake -> {}", m.records.len() - fakes, a.out.join("manifest.txt").display());
    Ok(())
}

fn prompts_cmd(c: PromptsCommand) -> Result<()> {
    match c {
        PromptsCommand::Dump { file } => print!("{}", PromptSet::load(file.as_deref())?.to_text()),
        PromptsCommand::Validate { file } => {
            let p = PromptSet::load(Some(&file))?;
            println!("{} positive, {} negative", p.positives.len(), p.negatives.len());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Corrupt(a) => corrupt_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Prompts(c) => prompts_cmd(c),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
