//! Command-line front end: dataset generation, priming, streaming,
//! prediction, evaluation, rule export and the experiment harness.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use protoclass::{
    persist, Classifier, Config, FeaturePolicy, NoveltyConfig, RuleDocument, StreamEvent,
};
use protoclass_cli::dataset::Dataset;
use protoclass_cli::experiment::{evaluate, run_experiment, ExperimentConfig, StreamSchedule};
use protoclass_cli::report::write_report;
use protoclass_cli::synth::{gen_synth, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeaturePolicyArg {
    /// Keep features with Λ at or above the per-class mean.
    Mean,
    /// Keep the top-k features by Λ (see --top-k).
    TopK,
    /// Keep every feature.
    Off,
}

#[derive(Parser)]
#[command(
    name = "protoclass",
    about = "Streaming prototype classifier: learns from a tiny labeled set, discovers new classes in the stream, and explains itself with IF-THEN rules",
    version
)]
struct Cli {
    /// Sigma multiplier of the confidence-drop test.
    #[arg(long, global = true, default_value_t = 3.0)]
    m_sigma: f64,

    /// Minimum co-located buffered samples needed to found a class.
    #[arg(long, global = true, default_value_t = 10)]
    kappa: u64,

    /// Outlier-buffer capacity before the oldest samples expire.
    #[arg(long, global = true, default_value_t = 1000)]
    buffer_expiry: usize,

    /// Per-class feature selection policy.
    #[arg(long, global = true, value_enum, default_value_t = FeaturePolicyArg::Mean)]
    feature_policy: FeaturePolicyArg,

    /// k for --feature-policy top-k.
    #[arg(long, global = true, default_value_t = 3)]
    top_k: usize,

    /// Predict with the union of all class masks instead of per-class masks.
    #[arg(long, global = true)]
    shared_mask: bool,

    /// Freeze preprocessing statistics after priming.
    #[arg(long, global = true)]
    freeze_stats: bool,

    /// Error on zero-variance features instead of flooring them.
    #[arg(long, global = true)]
    strict_variance: bool,

    /// Seed for every random choice (generation, shuffling).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a reproducible Gaussian-blob dataset.
    GenSynth {
        /// Number of blob classes.
        #[arg(long, default_value_t = 3)]
        blobs: usize,
        /// Informative feature count.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Distance between adjacent centers, in blob sigmas.
        #[arg(long, default_value_t = 8.0)]
        separation: f64,
        /// Samples per blob.
        #[arg(long, default_value_t = 100)]
        per_blob: usize,
        /// Label-independent noise columns to append.
        #[arg(long, default_value_t = 0)]
        noise_features: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Prime a new model from a labeled CSV.
    Prime {
        /// Labeled training CSV (must end in a `label` column).
        #[arg(long)]
        data: PathBuf,
        /// Where to write the model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Stream unlabeled rows through an existing model, learning online.
    Stream {
        #[arg(long)]
        model: PathBuf,
        /// CSV of samples; a `label` column, if present, is ignored.
        #[arg(long)]
        data: PathBuf,
        /// Where to save the updated model (defaults to --model in place).
        #[arg(long)]
        out_model: Option<PathBuf>,
        /// Optional per-sample event log CSV.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Predict labels for CSV rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output CSV (prediction plus per-class λ and typicality).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model against a labeled CSV (exact label match).
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Print the model's IF-THEN rules; optionally write text + JSON forms.
    Rules {
        #[arg(long)]
        model: PathBuf,
        /// Directory for rules.txt and rules.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print per-class feature rankings and masks as CSV.
    Features {
        #[arg(long)]
        model: PathBuf,
    },
    /// Rename a class (for example an auto-generated "new class 1").
    RenameClass {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Run the prime → stream → evaluate protocol and write a report.
    RunExperiment {
        /// Labeled dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Schedule JSON; defaults to priming on the first class at 80%.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Report output directory.
        #[arg(long)]
        out_dir: PathBuf,
        /// Per-class holdout fraction for final evaluation.
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
    },
}

impl Cli {
    fn model_config(&self) -> Config {
        Config {
            novelty: NoveltyConfig {
                m_sigma: self.m_sigma,
                kappa_min_support: self.kappa,
                buffer_expiry: self.buffer_expiry,
            },
            feature_policy: match self.feature_policy {
                FeaturePolicyArg::Mean => FeaturePolicy::Mean,
                FeaturePolicyArg::TopK => FeaturePolicy::TopK(self.top_k),
                FeaturePolicyArg::Off => FeaturePolicy::Off,
            },
            shared_mask: self.shared_mask,
            freeze_stats: self.freeze_stats,
            strict_variance: self.strict_variance,
        }
    }
}

fn event_description(event: &StreamEvent) -> String {
    match event {
        StreamEvent::OutlierSkipped { seq } => format!("{seq},outlier_skipped,,,"),
        StreamEvent::Absorbed {
            seq,
            label,
            lambda,
            threshold,
            ..
        } => format!("{seq},absorbed,{label},{lambda},{threshold}"),
        StreamEvent::NoveltyBuffered {
            seq,
            lambda,
            threshold,
            ..
        } => format!("{seq},novelty_buffered,,{lambda},{threshold}"),
        StreamEvent::NewClassCreated {
            seq,
            lambda,
            threshold,
            labels,
        } => format!("{seq},new_class,{},{lambda},{threshold}", labels.join(";")),
    }
}

fn main() -> Result<()> {
    // exit quietly when output is piped into e.g. `head`
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::GenSynth {
            blobs,
            dim,
            separation,
            per_blob,
            noise_features,
            out,
        } => {
            let data = gen_synth(&SynthSpec {
                blobs: *blobs,
                dim: *dim,
                separation: *separation,
                per_blob: *per_blob,
                noise_features: *noise_features,
                seed: cli.seed,
            })?;
            data.write_csv(out)?;
            println!(
                "wrote {} rows x {} features ({} classes) to {}",
                data.len(),
                data.schema.len(),
                *blobs,
                out.display()
            );
        }
        Command::Prime { data, model } => {
            let dataset = Dataset::read_csv(data)?;
            let samples = dataset.labeled_samples()?;
            let classifier =
                Classifier::prime(dataset.schema.clone(), &samples, cli.model_config())?;
            persist::save_model(&classifier, model)?;
            println!(
                "primed {} classes from {} samples -> {}",
                classifier.class_count(),
                samples.len(),
                model.display()
            );
        }
        Command::Stream {
            model,
            data,
            out_model,
            events,
        } => {
            let mut classifier = persist::load_model(model)?;
            let dataset = Dataset::read_csv(data)?;
            let mut log = String::from("seq,event,labels,lambda,threshold\n");
            let mut created = 0usize;
            for row in &dataset.rows {
                let event = classifier.learn(row)?;
                if let StreamEvent::NewClassCreated { labels, .. } = &event {
                    created += labels.len();
                }
                log.push_str(&event_description(&event));
                log.push('\n');
            }
            if let Some(path) = events {
                fs::write(path, &log)?;
            }
            let target = out_model.as_ref().unwrap_or(model);
            persist::save_model(&classifier, target)?;
            println!(
                "streamed {} samples: {} classes known ({created} discovered) -> {}",
                dataset.len(),
                classifier.class_count(),
                target.display()
            );
        }
        Command::Predict { model, data, out } => {
            let classifier = persist::load_model(model)?;
            let dataset = Dataset::read_csv(data)?;
            let labels: Vec<String> = classifier.labels().iter().map(|l| l.to_string()).collect();
            let mut w = fs::File::create(out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            let lambda_cols: Vec<String> = labels.iter().map(|l| format!("lambda:{l}")).collect();
            let tau_cols: Vec<String> = labels.iter().map(|l| format!("tau:{l}")).collect();
            writeln!(
                w,
                "prediction,outlier,{},{}",
                lambda_cols.join(","),
                tau_cols.join(",")
            )?;
            for row in &dataset.rows {
                let p = classifier.predict(row)?;
                let lambdas: Vec<String> =
                    p.scores.iter().map(|s| format!("{}", s.lambda)).collect();
                let taus: Vec<String> = p
                    .scores
                    .iter()
                    .map(|s| format!("{}", s.typicality))
                    .collect();
                writeln!(
                    w,
                    "{},{},{},{}",
                    p.label,
                    p.outlier,
                    lambdas.join(","),
                    taus.join(",")
                )?;
            }
            println!("wrote {} predictions to {}", dataset.len(), out.display());
        }
        Command::Eval { model, data } => {
            let classifier = persist::load_model(model)?;
            let dataset = Dataset::read_csv(data)?;
            let (accuracy, confusion) = evaluate(&classifier, &dataset)?;
            println!("accuracy: {accuracy:.6} ({} samples)", confusion.total());
            print!("truth\\predicted");
            for p in &confusion.predicted_labels {
                print!(",{p}");
            }
            println!();
            for (i, t) in confusion.truth_labels.iter().enumerate() {
                print!("{t}");
                for c in &confusion.matrix[i] {
                    print!(",{c}");
                }
                println!();
            }
        }
        Command::Rules { model, out_dir } => {
            let classifier = persist::load_model(model)?;
            let doc = RuleDocument::export(&classifier)?;
            print!("{}", doc.to_text());
            if let Some(dir) = out_dir {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("rules.txt"), doc.to_text())?;
                fs::write(dir.join("rules.json"), doc.to_json()?)?;
                println!("wrote rules.txt and rules.json to {}", dir.display());
            }
        }
        Command::Features { model } => {
            let classifier = persist::load_model(model)?;
            println!("class,feature,lambda,selected");
            for class in classifier.classes() {
                for (f, name) in classifier.schema().iter().enumerate() {
                    println!(
                        "{},{},{},{}",
                        class.label(),
                        name,
                        class.ranking().lambda_cum()[f],
                        class.mask()[f]
                    );
                }
            }
        }
        Command::RenameClass { model, from, to } => {
            let mut classifier = persist::load_model(model)?;
            classifier.rename_class(from, to)?;
            persist::save_model(&classifier, model)?;
            println!("renamed '{from}' to '{to}' in {}", model.display());
        }
        Command::RunExperiment {
            data,
            schedule,
            out_dir,
            holdout,
        } => {
            let dataset = Dataset::read_csv(data)?;
            let schedule = match schedule {
                Some(path) => StreamSchedule::from_json(
                    &fs::read_to_string(path)
                        .with_context(|| format!("cannot read {}", path.display()))?,
                )?,
                None => StreamSchedule::default_protocol(&dataset, *holdout)?,
            };
            let config = ExperimentConfig {
                seed: cli.seed,
                holdout_fraction: *holdout,
                model: cli.model_config(),
            };
            let report = run_experiment(&dataset, &schedule, &config)?;
            write_report(out_dir, &report)?;
            println!(
                "primed {} | streamed {} | discovered {} | holdout accuracy {} -> {}",
                report.primed_samples,
                report.streamed_samples,
                report.discovered.len(),
                report
                    .holdout_accuracy
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_else(|| "n/a".into()),
                out_dir.display()
            );
        }
    }
    Ok(())
}
