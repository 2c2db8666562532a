use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ledgercast::closure::{mean_abs_close_error_days, ClosureModel};
use ledgercast::dataset::Dataset;
use ledgercast::pipeline::{self, report, PipelineConfig, Variant};
use ledgercast::profiles::ProfileBook;
use ledgercast::series::WeeklySeries;
use ledgercast::synthgen::{self, SynthConfig};
use ledgercast::Result;

#[derive(Parser)]
#[command(name = "ledgercast", version, about = "Collections forecasting from invoice ledgers")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Directory holding invoices.csv and support.csv; overrides the config.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with planted structure.
    Generate {
        /// Generator configuration (TOML); the pinned default when absent.
        #[arg(long)]
        synth: Option<PathBuf>,
    },
    /// Fit the invoice-closure model and report its in-sample error.
    Train,
    /// Forecast the next horizon from the last observed week.
    Forecast,
    /// Rolling-origin evaluation of the configured variant.
    Evaluate,
    /// H1 and H2 on identical folds.
    Compare,
    /// Search pipeline parameters.
    Tune,
    /// Full H2 report with per-component series.
    Report,
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(v) = g.variant {
        cfg.variant = v;
    }
    if let Some(dir) = &g.data {
        cfg.data.invoices = Some(dir.join("invoices.csv"));
        let support = dir.join("support.csv");
        cfg.data.support = support.exists().then_some(support);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn train(cfg: &PipelineConfig, ds: &Dataset, out: &Path) -> Result<()> {
    let cal = cfg.calendar();
    let last = ds.last_observed_week(&cal)?;
    let book = ProfileBook::new(&ds.invoices, cal.last_date_of(last)?);
    let mut model = ClosureModel::new(cfg.closure);
    model.train(&ds.invoices, &book, &cal)?;
    let actual = ds
        .invoices
        .iter()
        .filter_map(|i| i.payment_date.map(|p| (i.invoice_id.clone(), p)))
        .collect();
    let mae = mean_abs_close_error_days(&model, &ds.invoices, &actual, &book, &cal)?;
    write_json(&out.join("closure_model.json"), model.fitted()?)?;
    println!(
        "closure model: {} trees, in-sample MAE {:.2} days",
        model.fitted()?.booster.trees.len(),
        mae.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn components_csv(cfg: &PipelineConfig, ds: &Dataset, out: &Path) -> Result<()> {
    let cal = cfg.calendar();
    let origin = ds.last_observed_week(&cal)?;
    let (f, _) = pipeline::forecast_at(ds, cfg, origin)?;
    let Some(d) = f.decomposition else { return Ok(()) };
    let start = d.weeks[0];
    let mut columns: Vec<(String, WeeklySeries)> = vec![("prediction".into(), WeeklySeries::new(start, d.prediction.clone()))];
    for c in &d.components {
        columns.push((c.name.clone(), WeeklySeries::new(start, c.values.clone())));
    }
    let refs: Vec<(&str, &WeeklySeries)> = columns.iter().map(|(n, s)| (n.as_str(), s)).collect();
    ledgercast::io::write_series_csv(&out.join("components.csv"), &refs, &cal)
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    std::fs::create_dir_all(&g.out)?;
    if let Command::Generate { synth } = &cli.command {
        let mut sc = match synth {
            Some(p) => SynthConfig::from_toml_str(&std::fs::read_to_string(p)?)?,
            None => SynthConfig::default(),
        };
        if let Some(seed) = g.seed {
            sc.seed = seed;
        }
        let ds = synthgen::generate(&sc)?;
        synthgen::export(&ds, &g.out, &sc.calendar())?;
        println!("{} invoices written to {}", ds.invoices.len(), g.out.display());
        return Ok(());
    }

    let cfg = load_config(g)?;
    let ds = pipeline::ingest_config(&cfg)?;
    let out = g.out.as_path();
    match cli.command {
        Command::Generate { .. } => unreachable!("handled above"),
        Command::Train => train(&cfg, &ds, out)?,
        Command::Forecast | Command::Evaluate => {
            let evaluate = matches!(cli.command, Command::Evaluate);
            let r = pipeline::run(&ds, &cfg, evaluate)?;
            let stem = if evaluate { "evaluation" } else { "forecast" };
            write_json(&out.join(format!("{stem}.json")), &r)?;
            write(&out.join(format!("{stem}.md")), &report::run_markdown(&r))?;
            match &r.evaluation {
                Some(e) => println!("{} final score {:.3}", r.variant, e.final_score),
                None => println!("{} forecast for weeks {}..={}", r.variant, r.origin + 1, r.origin + r.forecast.len() as i64),
            }
        }
        Command::Compare => {
            let c = pipeline::compare(&ds, &cfg)?;
            write_json(&out.join("compare.json"), &c)?;
            write(&out.join("compare.md"), &report::compare_markdown(&c))?;
            println!("accuracy uplift H2 over H1: {:.2}%", c.uplift_pct);
        }
        Command::Tune => {
            let (t, space) = pipeline::tune_pipeline(&ds, &cfg)?;
            write_json(&out.join("tune.json"), &t)?;
            t.result.write_csv(&out.join("tune_history.csv"), &space)?;
            write(&out.join("best_config.toml"), &t.best_config.to_toml_string()?)?;
            write(&out.join("tune.md"), &report::tune_markdown(&t))?;
            println!("default loss {:.4}, best loss {:.4}", t.default_loss, t.result.best_loss);
        }
        Command::Report => {
            let cfg = cfg.as_h2();
            let (_, r) = pipeline::run_h2(&ds, &cfg)?;
            write_json(&out.join("report.json"), &r)?;
            write(&out.join("report.md"), &report::run_markdown(&r))?;
            components_csv(&cfg, &ds, out)?;
            println!("uplift over H1: {:.2}%", r.uplift_vs_h1.unwrap_or(f64::NAN));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEDGERCAST_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
