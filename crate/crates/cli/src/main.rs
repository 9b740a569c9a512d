use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use misalign_core::eval::{PerturbationKind, PerturbationSpec};
use misalign_core::pipeline::{
    perturb_directory, run_eval, run_export, run_featurize, run_training, write_synthetic_corpus, RunConfig,
    MODEL_FILE,
};
use misalign_core::providers::ProviderKind;
use misalign_core::representation::FusionMode;
use misalign_core::{Error, ErrorClass};

#[derive(Debug, Parser)]
#[command(name = "misalign", version, about = "Fake-image detection from image-text misalignment")]
struct Cli {
    /// JSON run configuration; unset fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderArg>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Seed for the synthetic provider, training and noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Abort on the first failing sample.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads for featurization.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProviderArg {
    Synthetic,
    File,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModeArg {
    GlobalOnly,
    LocalOnly,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Noise,
    Blur,
    Jpeg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Caption, ground and embed every sample; caches results in an augmented manifest.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the classifier head and save it with its run metadata.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score a manifest with a trained head and report ACC and AP.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Apply one perturbation to every image under a directory.
    Perturb {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        param: f64,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write the fused representations as CSV.
    ExportReps {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a tagged synthetic corpus for the synthetic provider.
    SynthCorpus {
        #[arg(long)]
        n_real: usize,
        #[arg(long)]
        n_fake: usize,
        #[arg(long, default_value = "s")]
        prefix: String,
    },
}

fn config(cli: &Cli) -> misalign_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = cli.provider {
        cfg.provider.kind = match p {
            ProviderArg::Synthetic => ProviderKind::Synthetic,
            ProviderArg::File => ProviderKind::File,
            ProviderArg::Remote => ProviderKind::Remote,
        };
    }
    if let Some(m) = cli.mode {
        cfg.fusion.mode = match m {
            ModeArg::GlobalOnly => FusionMode::GlobalOnly,
            ModeArg::LocalOnly => FusionMode::LocalOnly,
            ModeArg::Both => FusionMode::Both,
        };
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(n) = cli.parallelism {
        cfg.parallelism = n;
    }
    cfg.strict |= cli.strict;
    cfg.validate()?;
    Ok(cfg)
}

fn report_failures(n: usize) {
    if n > 0 {
        eprintln!("{n} samples failed; see failures.json");
    }
}

fn run(cli: &Cli) -> misalign_core::Result<()> {
    let out = &cli.out;
    match &cli.command {
        Command::Featurize { manifest } => {
            let (res, augmented) = run_featurize(manifest, out, &config(cli)?)?;
            println!("featurized {} samples", res.featurized.len());
            if let Some(path) = augmented {
                println!("augmented manifest: {}", path.display());
            }
            report_failures(res.failures.len());
        }
        Command::Train { manifest } => {
            let run = run_training(manifest, out, &config(cli)?)?;
            let m = &run.metadata;
            println!(
                "trained on {} samples ({} real, {} fake), final loss {:.6}",
                m.sample_count,
                m.n_real,
                m.n_fake,
                m.final_loss.unwrap_or(f64::NAN)
            );
            println!("model: {}", out.join(MODEL_FILE).display());
            report_failures(m.failures);
        }
        Command::Eval { manifest, model } => {
            let run = run_eval(manifest, model, out, &config(cli)?)?;
            let r = &run.report;
            let summary = serde_json::json!({
                "acc": r.acc,
                "ap": r.ap,
                "n_real": r.n_real,
                "n_fake": r.n_fake,
            });
            println!("{summary}");
            report_failures(run.metadata.failures);
        }
        Command::Perturb { kind, param, input } => {
            let seed = config(cli)?.provider.seed;
            let spec = PerturbationSpec {
                kind: match kind {
                    KindArg::Noise => PerturbationKind::GaussianNoise,
                    KindArg::Blur => PerturbationKind::GaussianBlur,
                    KindArg::Jpeg => PerturbationKind::Jpeg,
                },
                param: *param,
                seed,
            };
            let summary = perturb_directory(input, out, &spec)?;
            println!(
                "perturbed {} images, copied {} other files into {}",
                summary.images.len(),
                summary.copied.len(),
                out.display()
            );
        }
        Command::ExportReps { manifest } => {
            let (res, path) = run_export(manifest, out, &config(cli)?)?;
            println!("wrote {} representations to {}", res.featurized.len(), path.display());
            report_failures(res.failures.len());
        }
        Command::SynthCorpus { n_real, n_fake, prefix } => {
            let path = write_synthetic_corpus(out, prefix, *n_real, *n_fake)?;
            println!("manifest: {}", path.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Provider => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
