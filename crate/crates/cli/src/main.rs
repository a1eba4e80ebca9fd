use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mtda::config::{load_toml, resolve_schema, to_toml, ExperimentSpec, GenerateConfig, RunConfig};
use mtda::data::{generate, load_dataset, save_dataset, Domain, Split};
use mtda::eval::{evaluate, evaluate_domain};
use mtda::experiment::run_experiment_with;
use mtda::losses::LossWeights;
use mtda::model::{ModelConfig, ModelParams};
use mtda::schema::{load_schema, save_schema, AttributeSchema};
use mtda::train::{train, Mode, SplitPlan, TrainConfig};
use mtda::Result;

#[derive(Parser)]
#[command(name = "mtda", version, about = "Attribute-aware domain adaptation on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write schema.txt, train.txt and test.txt.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on a dataset and write checkpoint.txt, metrics.jsonl and split.json.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to schema.txt next to the dataset.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print an evaluation report as JSON.
    Eval {
        checkpoint: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Restrict to the held-out classes of the training split.
        #[arg(long)]
        held_out_only: bool,
        /// Defaults to split.json next to the checkpoint.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DomainArg::Target)]
        domain: DomainArg,
        /// Also write the per-class table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run every (mode, seed) pair of an experiment spec.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the spec's seed list with this one seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Source,
    Target,
    All,
}

fn echo<T: Serialize>(title: &str, value: &T) {
    eprintln!("# effective {} config", title);
    eprint!("{}", to_toml(value));
    eprintln!("# end config");
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load_toml(p),
        None => Ok(T::default()),
    }
}

fn parent(path: Option<&Path>) -> Option<&Path> {
    path.and_then(Path::parent)
}

fn sibling_schema(dataset: &Path, explicit: Option<&Path>) -> Result<AttributeSchema> {
    match explicit {
        Some(p) => load_schema(p),
        None => load_schema(dataset.with_file_name("schema.txt")),
    }
}

fn cmd_generate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg: GenerateConfig = load_or_default(config)?;
    let schema = resolve_schema(cfg.schema_file.as_deref(), parent(config))?;
    let mut gen = cfg.generator.resolve(&schema);
    if let Some(s) = seed {
        gen.seed = s;
    }
    gen.validate()?;

    #[derive(Serialize)]
    struct Effective<'a> {
        test_source_count: usize,
        test_target_count: usize,
        generator: &'a mtda::data::GeneratorConfig,
    }
    echo(
        "generate",
        &Effective {
            test_source_count: cfg.test_source_count,
            test_target_count: cfg.test_target_count,
            generator: &gen,
        },
    );

    std::fs::create_dir_all(out)?;
    save_schema(&schema, out.join("schema.txt"))?;
    let train_set = generate(&gen)?;
    save_dataset(&train_set, out.join("train.txt"))?;
    let test = gen
        .with_uniform_counts(cfg.test_source_count, cfg.test_target_count)
        .with_split(Split::Test);
    save_dataset(&generate(&test)?, out.join("test.txt"))?;
    println!("wrote {} training examples to {}", train_set.len(), out.display());
    Ok(())
}

fn cmd_train(
    dataset: &Path,
    config: Option<&Path>,
    out: &Path,
    schema: Option<&Path>,
    mode: Option<Mode>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg: RunConfig = load_or_default(config)?;
    if let Some(m) = mode {
        cfg.train.mode = m;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.model.seed = s;
    }
    cfg.train.validate()?;
    let schema = sibling_schema(dataset, schema)?;
    let data = load_dataset(dataset, &schema)?;
    let model = cfg.model.resolve(&schema, data.dims());

    #[derive(Serialize)]
    struct Effective<'a> {
        model: &'a ModelConfig,
        train: &'a TrainConfig,
        effective_weights: LossWeights,
    }
    echo(
        "train",
        &Effective {
            model: &model,
            train: &cfg.train,
            effective_weights: cfg.train.effective_weights(),
        },
    );

    let result = train(&data, &model, &cfg.train)?;
    for w in &result.warnings {
        eprintln!("warning: {}", w);
    }
    std::fs::create_dir_all(out)?;
    result.params.save(out.join("checkpoint.txt"))?;
    for (step, params) in &result.checkpoints {
        params.save(out.join(format!("checkpoint-{}.txt", step)))?;
    }
    std::fs::write(out.join("metrics.jsonl"), result.log_text())?;
    std::fs::write(out.join("split.json"), serde_json::to_string_pretty(&result.split)?)?;
    if let Some(last) = result.log.last() {
        println!("step {} total loss {:.6}", last.step, last.total);
    }
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    dataset: &Path,
    schema: Option<&Path>,
    held_out_only: bool,
    split: Option<&Path>,
    domain: DomainArg,
    csv: Option<&Path>,
) -> Result<()> {
    let params = ModelParams::load(checkpoint)?;
    let schema = sibling_schema(dataset, schema)?;
    let data = load_dataset(dataset, &schema)?;
    let classes: Vec<usize> = if held_out_only {
        let path = split.map_or_else(|| checkpoint.with_file_name("split.json"), Path::to_path_buf);
        let plan: SplitPlan = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        plan.held_out
    } else {
        (0..schema.num_classes()).collect()
    };

    #[derive(Serialize)]
    struct Effective<'a> {
        checkpoint: &'a Path,
        dataset: &'a Path,
        domain: &'static str,
        classes: &'a [usize],
    }
    echo(
        "eval",
        &Effective {
            checkpoint,
            dataset,
            domain: match domain {
                DomainArg::Source => "source",
                DomainArg::Target => "target",
                DomainArg::All => "all",
            },
            classes: &classes,
        },
    );

    let report = match domain {
        DomainArg::Source => evaluate_domain(&params, &data, Domain::Source, &classes)?,
        DomainArg::Target => evaluate_domain(&params, &data, Domain::Target, &classes)?,
        DomainArg::All => evaluate(&params, &data, &classes)?,
    };
    if let Some(path) = csv {
        let mut out = String::from("class_id,n_examples,accuracy,delta\n");
        for c in &report.per_class {
            let acc = c.accuracy.map_or_else(String::new, |a| format!("{:.6}", a));
            out.push_str(&format!("{},{},{},\n", c.class, c.n_examples, acc));
        }
        std::fs::write(path, out)?;
    }
    println!("{}", report.to_json());
    Ok(())
}

fn cmd_experiment(config: Option<&Path>, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut spec: ExperimentSpec = load_or_default(config)?;
    if let Some(s) = seed {
        spec.seeds = vec![s];
    }
    if let Some(o) = out {
        spec.out_dir = Some(o.to_path_buf());
    }
    spec.validate()?;
    let schema = resolve_schema(spec.schema_file.as_deref(), parent(config))?;
    echo("experiment", &spec);

    let result = run_experiment_with(&spec, &schema, |r| {
        eprintln!(
            "{} seed {}: target {:.4} source {:.4}",
            r.mode, r.seed, r.target_accuracy, r.source_accuracy
        );
    })?;
    if let Some(dir) = &spec.out_dir {
        let dir = match (dir.is_relative(), out, parent(config)) {
            (true, None, Some(base)) => base.join(dir),
            _ => dir.clone(),
        };
        result.write(&dir)?;
    }
    print!("{}", result.table());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => cmd_generate(config.as_deref(), &out, seed),
        Command::Train {
            dataset,
            config,
            out,
            schema,
            mode,
            seed,
        } => cmd_train(&dataset, config.as_deref(), &out, schema.as_deref(), mode, seed),
        Command::Eval {
            checkpoint,
            dataset,
            schema,
            held_out_only,
            split,
            domain,
            csv,
        } => cmd_eval(
            &checkpoint,
            &dataset,
            schema.as_deref(),
            held_out_only,
            split.as_deref(),
            domain,
            csv.as_deref(),
        ),
        Command::Experiment { config, out, seed } => cmd_experiment(config.as_deref(), out.as_deref(), seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
