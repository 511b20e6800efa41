//! Command-line front end. Failures print one `error: kind=... message=...`
//! line to stderr and exit with status 1.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedmobile::data::{generate_stream, read_samples, write_samples, Sample};
use fedmobile::experiment::{
    format_sweep, run_seeds, select_by_test, select_by_validation, sweep_hyperparams,
    write_results, ExperimentConfig, SweepParam, SweepSpec,
};
use fedmobile::fl::{evaluate, EvalSet};
use fedmobile::nn::ModelParams;
use fedmobile::{Error, Result};

#[derive(Parser)]
#[command(name = "fedmobile", version, about = "Incremental semi-supervised federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file, or `default` for built-in defaults.
    #[arg(long, default_value = "default")]
    config: String,
    /// Comma-separated seed list replacing the configured seeds.
    #[arg(long)]
    seed: Option<String>,
    /// Algorithm: fedmobile, centralized, fedavg or fedsem_ft.
    #[arg(long)]
    algo: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` setting applied after the config file; repeatable.
    #[arg(long = "override")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results, summary, curves and final models.
    Run(Common),
    /// Run the experiment over a grid of one hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// lambda, alpha, learning_rate, batch_size, local_epochs, lr_step1 or lr_step2.
        #[arg(long)]
        param: String,
        /// Comma-separated grid values.
        #[arg(long)]
        grid: String,
    },
    /// Generate the configured stream and export one file per batch.
    GenData(Common),
    /// Score a saved model on an exported sample file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = if c.config == "default" {
        ExperimentConfig::default()
    } else {
        let path = Path::new(&c.config);
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        ExperimentConfig::parse(&text)?
    };
    let mut overrides = c.overrides.clone();
    if let Some(s) = &c.seed {
        overrides.push(format!("seeds={s}"));
    }
    if let Some(a) = &c.algo {
        overrides.push(format!("algorithm={a}"));
    }
    if let Some(o) = &c.out {
        overrides.push(format!("output={}", o.display()));
    }
    cfg.apply_overrides(&overrides)?;
    Ok(cfg)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn run(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let runs = run_seeds(&cfg)?;
    let rows: Vec<_> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let files = write_results(&rows, &cfg.output)?;
    write(&cfg.output.join("config.txt"), &cfg.serialize())?;
    for r in &runs {
        let json = serde_json::to_string(&r.model)
            .map_err(|e| Error::Input(format!("model serialization: {e}")))?;
        write(&cfg.output.join(format!("model_seed{}.json", r.seed)), &json)?;
        println!(
            "seed {}: final test f1 {:.4} pr_auc {:.4}; best-val test f1 {:.4}; retention f1 {:.4}",
            r.seed, r.final_test.f1, r.final_test.pr_auc, r.best_val_test.f1, r.retention.f1
        );
    }
    print!("{}", fs::read_to_string(&files.summary).map_err(io_err(&files.summary))?);
    Ok(())
}

fn sweep(c: &Common, param: &str, grid: &str) -> Result<()> {
    let cfg = load_config(c)?;
    let param: SweepParam = param.parse()?;
    let grid = grid
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("bad grid value `{v}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = sweep_hyperparams(&cfg, &SweepSpec { param, grid })?;
    fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    let table = format_sweep(param, &points);
    write(&cfg.output.join("sweep.csv"), &table)?;
    print!("{table}");
    if let (Some(v), Some(t)) = (select_by_validation(&points), select_by_test(&points)) {
        println!(
            "best by validation f1: {}; best by test f1: {}",
            points[v].value, points[t].value
        );
    }
    Ok(())
}

fn gen_data(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    fs::create_dir_all(&cfg.output).map_err(io_err(&cfg.output))?;
    for &seed in &cfg.seeds {
        let mut gen = cfg.generator.clone();
        gen.seed = seed;
        let stream = generate_stream(&gen, cfg.fl.stream_batches + 1)?;
        for b in &stream {
            let samples: Vec<Sample> = b.samples().cloned().collect();
            let path = cfg.output.join(format!("seed{seed}_batch{}.csv", b.time_index));
            let mut buf = Vec::new();
            write_samples(&mut buf, &samples)?;
            fs::write(&path, buf).map_err(io_err(&path))?;
            if !b.holdout.is_empty() {
                let path = cfg.output.join(format!("seed{seed}_holdout{}.csv", b.time_index));
                let mut buf = Vec::new();
                write_samples(&mut buf, &b.holdout)?;
                fs::write(&path, buf).map_err(io_err(&path))?;
            }
        }
        println!("seed {seed}: wrote {} batches to {}", stream.len(), cfg.output.display());
    }
    Ok(())
}

fn eval(model: &Path, data: &Path) -> Result<()> {
    let text = fs::read_to_string(model).map_err(io_err(model))?;
    let raw: ModelParams = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("{}: {e}", model.display())))?;
    let params = ModelParams::from_layers(raw.spec().clone(), raw.layers().to_vec())?;
    let f = fs::File::open(data).map_err(io_err(data))?;
    let samples = read_samples(BufReader::new(f))?;
    let labeled: Vec<&Sample> = samples.iter().filter(|s| s.is_labeled()).collect();
    let set = EvalSet::new(labeled)?;
    let e = evaluate(&params, &set)?;
    let json = serde_json::json!({
        "samples": set.len(),
        "precision": e.report.precision,
        "recall": e.report.recall,
        "f1": e.report.f1,
        "pr_auc": e.report.pr_auc,
        "ce": e.ce,
    });
    println!("{json}");
    Ok(())
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let one_line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    let quoted = serde_json::to_string(&one_line).unwrap_or_else(|_| "\"\"".into());
    eprintln!("error: kind={kind} message={quoted}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", &e.to_string()),
    };
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::Sweep {
            common,
            param,
            grid,
        } => sweep(common, param, grid),
        Command::GenData(c) => gen_data(c),
        Command::Eval { model, data } => eval(model, data),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
