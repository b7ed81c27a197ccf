use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use spanscout::decompose::Backend;
use spanscout::pipeline::{
    build_decomposer, evaluate, sweep, Manifest, PipelineConfig, PlotTable, PredictionDocument,
    SweepParameter,
};
use spanscout::synthbench::{generate_suite, write_suite, SuiteRanges};
use spanscout::refine::InjectScoring;
use spanscout::{Mode, Pipeline};

#[derive(Parser)]
#[command(name = "spanscout", version, about = "Training-free moment retrieval over similarity curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Retrieve spans for every query in a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Where to write the prediction document; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a prediction document against manifest ground truth.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Split queries into two ordered sub-queries.
    Decompose {
        /// Query text; repeatable.
        #[arg(long = "query", short)]
        queries: Vec<String>,
        /// Decompose every query text in this manifest instead.
        #[arg(long, conflicts_with = "queries")]
        manifest: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic benchmark suite (signals plus manifest).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// One of clean, saturation, discrepancy.
        #[arg(long, default_value = "clean")]
        preset: String,
    },
    /// Run and evaluate once per value of one hyperparameter.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        /// One of prominence (pm), mtd, beta, nms.
        #[arg(long)]
        parameter: SweepParameter,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Emit aligned signal, threshold and span columns for one query.
    Plotdata {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        query: String,
        /// CSV destination; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Start from `--config` (or defaults), then apply each flag that was given.
#[derive(Args)]
struct ConfigArgs {
    /// JSON pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    fps: Option<f64>,
    /// Minimum peak prominence.
    #[arg(long)]
    pm: Option<f64>,
    /// Minimum peak distance in seconds.
    #[arg(long)]
    mtd: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// NMS tIoU threshold.
    #[arg(long)]
    nms: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    normalize: Option<bool>,
    /// weighted or unweighted.
    #[arg(long, value_parser = parse_inject_scoring)]
    inject_scoring: Option<InjectScoring>,
    /// naive, rule, llm or provided.
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long, env = "SPANSCOUT_ENDPOINT_URL")]
    endpoint_url: Option<String>,
    #[arg(long, env = "SPANSCOUT_MODEL")]
    model: Option<String>,
    /// Endpoint timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
}

fn parse_inject_scoring(s: &str) -> Result<InjectScoring, String> {
    match s {
        "weighted" => Ok(InjectScoring::Weighted),
        "unweighted" => Ok(InjectScoring::Unweighted),
        other => Err(format!("unknown inject scoring `{other}`")),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($field)+ = v;
                }
            };
        }
        set!(mode => mode);
        set!(fps => fps);
        set!(pm => asg.prominence_min);
        set!(mtd => asg.min_distance_s);
        set!(normalize => asg.normalization);
        set!(beta => refine.beta);
        set!(nms => refine.nms_tiou);
        set!(top_k => refine.top_k);
        set!(inject_scoring => refine.inject_scoring);
        set!(backend => decompose_backend);
        set!(endpoint_url => endpoint.base_url);
        set!(model => endpoint.model);
        set!(timeout => endpoint.timeout_s);
        set!(retries => endpoint.retries);
        set!(max_in_flight => endpoint.max_in_flight);
        set!(parallelism => parallelism);
        if self.cache_dir.is_some() {
            c.cache_dir = self.cache_dir.clone();
        }
        Ok(c)
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            manifest,
            output,
            config,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let doc = Pipeline::new(config.resolve()?)?.run(&manifest)?;
            let failures = doc.failures();
            if failures > 0 {
                warn!("{failures} of {} queries failed", doc.queries.len());
            }
            emit(output.as_deref(), &doc.to_json())
        }
        Command::Eval {
            manifest,
            predictions,
            json,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let doc = PredictionDocument::load(&predictions)?;
            let outcome = evaluate(&doc, &manifest)?;
            if outcome.excluded_without_gt > 0 {
                warn!("{} queries without ground truth were excluded", outcome.excluded_without_gt);
            }
            if outcome.failed_queries > 0 {
                warn!("{} failed queries counted as misses", outcome.failed_queries);
            }
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&outcome.report)?;
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", outcome.report.to_table());
            Ok(())
        }
        Command::Decompose {
            queries,
            manifest,
            output,
            config,
        } => {
            let mut config = config.resolve()?;
            if config.decompose_backend == Backend::Provided {
                config.decompose_backend = Backend::Rule;
            }
            let decomposer = build_decomposer(&config)?.expect("backend is not `provided`");
            let items: Vec<(Option<String>, String)> = match manifest {
                Some(path) => Manifest::load(&path)?
                    .queries
                    .into_iter()
                    .map(|q| (Some(q.query_id), q.query_text))
                    .collect(),
                None if queries.is_empty() => bail!("give --query or --manifest"),
                None => queries.into_iter().map(|q| (None, q)).collect(),
            };
            let mut out = Vec::with_capacity(items.len());
            for (id, text) in items {
                let triple = decomposer.decompose(&text)?;
                let mut value = serde_json::to_value(&triple)?;
                if let Some(id) = id {
                    value["query_id"] = id.into();
                }
                out.push(value);
            }
            emit(output.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))
        }
        Command::Synth {
            out,
            cases,
            seed,
            preset,
        } => {
            let Some(ranges) = SuiteRanges::preset(&preset) else {
                bail!("unknown preset `{preset}`");
            };
            let suite = generate_suite(cases, &ranges, seed)?;
            let path = write_suite(&suite, &out)?;
            info!("wrote {} cases", suite.len());
            println!("{}", path.display());
            Ok(())
        }
        Command::Sweep {
            manifest,
            parameter,
            values,
            json,
            config,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let table = sweep(&manifest, &config.resolve()?, parameter, &values)?;
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&table)?;
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{}", table.to_table());
            Ok(())
        }
        Command::Plotdata {
            manifest,
            query,
            output,
            config,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let inspection = Pipeline::new(config.resolve()?)?.inspect(&manifest, &query)?;
            let table = PlotTable::from_inspection(&inspection);
            match output {
                Some(path) => {
                    let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                    table.write_csv(file)?;
                }
                None => table.write_csv(io::stdout().lock())?,
            }
            Ok(())
        }
    }
}
