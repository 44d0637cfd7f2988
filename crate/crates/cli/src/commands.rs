use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use memechain_core::{
    cooccurrence, generate, label_counts, train_with_validation, write_predictions, Augment,
    Dataset, Pipeline, SynthConfig, Taxonomy, Threshold,
};

use crate::config::{usage, RunConfig};
use crate::{Command, DataArgs, ModelArgs, PipelineArgs, PredictArgs, SynthArgs, TrainArgs};

pub fn run(command: Command, cfg: RunConfig) -> anyhow::Result<()> {
    match command {
        Command::Stats(args) => stats(args, cfg),
        Command::Cooc(args) => cooc(args, cfg),
        Command::Synth(args) => synth(args, cfg),
        Command::Train(args) => train(args, cfg),
        Command::Tune(args) => tune(args, cfg),
        Command::Eval(args) => eval(args, cfg),
        Command::Predict(args) => predict(args, cfg),
    }
}

fn load_taxonomy(path: &Path) -> anyhow::Result<Taxonomy> {
    Taxonomy::from_path(path)
        .with_context(|| format!("cannot load taxonomy file {}", path.display()))
}

fn load_dataset(path: &Path, taxonomy: &Taxonomy) -> anyhow::Result<Dataset> {
    Dataset::from_path(path, taxonomy)
        .with_context(|| format!("cannot load dataset {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<Pipeline> {
    Pipeline::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

/// Runs `f` against the named file, or stdout when there is none.
fn write_output<F>(path: Option<&Path>, f: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut dyn Write) -> memechain_core::Result<()>,
{
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            let mut w = BufWriter::new(file);
            f(&mut w).with_context(|| format!("cannot write {}", p.display()))?;
            w.flush()
                .with_context(|| format!("cannot write {}", p.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn override_path(flag: Option<PathBuf>, slot: &mut Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn apply_pipeline_flags(args: PipelineArgs, cfg: &mut RunConfig) {
    if args.features.is_some() {
        cfg.features = args.features;
    }
    if args.no_sharpen {
        cfg.sharpen = Some(false);
    }
    if args.no_augment {
        cfg.augment = Some(false);
    }
    if args.order.is_some() {
        cfg.order = args.order;
    }
    if args.chain_feed.is_some() {
        cfg.chain_feed = args.chain_feed;
    }
    if args.l2.is_some() {
        cfg.l2 = args.l2;
    }
    if args.max_iter.is_some() {
        cfg.max_iterations = args.max_iter;
    }
    if args.tol.is_some() {
        cfg.tolerance = args.tol;
    }
    if args.metric.is_some() {
        cfg.metric = args.metric;
    }
}

fn labeled_input(args: DataArgs, mut cfg: RunConfig) -> anyhow::Result<(Dataset, RunConfig)> {
    override_path(args.taxonomy, &mut cfg.taxonomy);
    override_path(args.data, &mut cfg.train);
    override_path(args.output, &mut cfg.output);
    let taxonomy = load_taxonomy(RunConfig::require(&cfg.taxonomy, "taxonomy")?)?;
    let ds = load_dataset(RunConfig::require(&cfg.train, "data")?, &taxonomy)?;
    Ok((ds, cfg))
}

fn stats(args: DataArgs, cfg: RunConfig) -> anyhow::Result<()> {
    let (ds, cfg) = labeled_input(args, cfg)?;
    let counts = label_counts(&ds)?;
    write_output(cfg.output.as_deref(), |w| {
        writeln!(w, "examples\t{}", ds.len())?;
        writeln!(w, "originals\t{}", ds.originals().len())?;
        writeln!(w, "groups\t{}", ds.groups().len())?;
        for (name, count) in ds.taxonomy().labels().iter().zip(counts) {
            writeln!(w, "{name}\t{count}")?;
        }
        Ok(())
    })
}

fn cooc(args: DataArgs, cfg: RunConfig) -> anyhow::Result<()> {
    let (ds, cfg) = labeled_input(args, cfg)?;
    let matrix = cooccurrence(ds.originals().gold_matrix()?.view())?;
    write_output(cfg.output.as_deref(), |w| {
        matrix.write_csv(ds.taxonomy(), w)
    })
}

fn synth(args: SynthArgs, mut cfg: RunConfig) -> anyhow::Result<()> {
    override_path(args.output, &mut cfg.output);
    let output = RunConfig::require(&cfg.output, "output")?;
    let augment = match args.augment.as_deref() {
        None => None,
        Some([k, sigma]) => Some(Augment {
            copies: k
                .parse()
                .map_err(|_| usage(format!("--augment copies must be an integer, got `{k}`")))?,
            sigma: sigma
                .parse()
                .map_err(|_| usage(format!("--augment sigma must be a number, got `{sigma}`")))?,
        }),
        Some(_) => return Err(usage("--augment takes K SIGMA")),
    };
    let synth_cfg = SynthConfig {
        n_examples: args.n,
        feature_dim: args.dim,
        n_labels: args.labels,
        correlation: args.correlation,
        noise: args.noise,
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        augment,
    };
    synth_cfg.validate().map_err(|e| usage(e.to_string()))?;
    let ds = generate(&synth_cfg)?;
    write_output(Some(output), |w| ds.write_to(w))?;
    if let Some(p) = &args.taxonomy_out {
        write_output(Some(p), |w| ds.taxonomy().write_to(w))?;
    }
    Ok(())
}

fn train(args: TrainArgs, mut cfg: RunConfig) -> anyhow::Result<()> {
    override_path(args.taxonomy, &mut cfg.taxonomy);
    override_path(args.train, &mut cfg.train);
    override_path(args.model, &mut cfg.model);
    if args.split_fraction.is_some() {
        cfg.split_fraction = args.split_fraction;
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    apply_pipeline_flags(args.pipeline, &mut cfg);

    let pipeline_cfg = cfg.pipeline()?;
    let fraction = cfg.split_fraction()?;
    let model_path = RunConfig::require(&cfg.model, "model")?;
    let taxonomy = load_taxonomy(RunConfig::require(&cfg.taxonomy, "taxonomy")?)?;
    let ds = load_dataset(RunConfig::require(&cfg.train, "train")?, &taxonomy)?;

    let outcome = train_with_validation(&ds, &pipeline_cfg, fraction, cfg.seed.unwrap_or(0))?;
    outcome
        .pipeline
        .save(model_path)
        .with_context(|| format!("cannot write model {}", model_path.display()))?;
    if let Some(p) = &args.validation_out {
        write_output(Some(p), |w| outcome.validation.write_to(w))?;
    }
    if let Some(p) = &args.report {
        write_output(Some(p), |w| {
            outcome.validation_report.write_to(&taxonomy, w)
        })?;
    }
    let report = &outcome.validation_report;
    println!(
        "train_groups={} validation_groups={}",
        outcome.train.groups().len(),
        outcome.validation.groups().len()
    );
    println!("threshold={}", outcome.threshold.value());
    println!("validation_micro_f1={}", report.micro_f1);
    println!("validation_macro_f1={}", report.macro_f1);
    Ok(())
}

fn model_input(
    args: &ModelArgs,
    cfg: &RunConfig,
    default_data: &Option<PathBuf>,
    name: &str,
) -> anyhow::Result<(Pipeline, Dataset)> {
    let model_path = args.model.as_ref().or(cfg.model.as_ref());
    let model = load_model(RunConfig::require(&model_path.cloned(), "model")?)?;
    let data = args.data.clone().or_else(|| default_data.clone());
    let ds = load_dataset(RunConfig::require(&data, name)?, model.taxonomy())?;
    Ok((model, ds))
}

fn tune(args: ModelArgs, cfg: RunConfig) -> anyhow::Result<()> {
    let (mut model, ds) = model_input(&args, &cfg, &cfg.dev, "dev")?;
    let (threshold, report) = model.tune(&ds)?;
    let out = args
        .output
        .as_ref()
        .or(args.model.as_ref())
        .or(cfg.model.as_ref())
        .expect("model path was resolved above");
    model
        .save(out)
        .with_context(|| format!("cannot write model {}", out.display()))?;
    println!("threshold={}", threshold.value());
    println!("micro_f1={}", report.micro_f1);
    println!("macro_f1={}", report.macro_f1);
    Ok(())
}

fn eval(args: ModelArgs, cfg: RunConfig) -> anyhow::Result<()> {
    let (model, ds) = model_input(&args, &cfg, &cfg.test, "test")?;
    let report = model.evaluate(&ds)?;
    let output = args.output.as_ref().or(cfg.output.as_ref());
    write_output(output.map(PathBuf::as_path), |w| {
        report.write_to(model.taxonomy(), w)
    })
}

fn predict(args: PredictArgs, cfg: RunConfig) -> anyhow::Result<()> {
    let (model, ds) = model_input(&args.model, &cfg, &cfg.test, "test")?;
    let threshold = args
        .threshold
        .map(Threshold::new)
        .transpose()
        .map_err(|e| usage(e.to_string()))?;
    let predictions = model.predict(&ds, threshold)?;
    let output = args.model.output.as_ref().or(cfg.output.as_ref());
    write_output(output.map(PathBuf::as_path), |w| {
        write_predictions(&predictions, model.taxonomy(), w)
    })
}
