//! `turnaround` command line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use turnaround_core::ais::{self, Geofence, VisitParams};
use turnaround_core::cleaning::{apply_filters, CleaningRules};
use turnaround_core::evaluation::{
    cross_validate, grid_search, render_markdown, CvConfig, EvalReport, GbdtFactory, GridAxes, LinearFactory,
};
use turnaround_core::features::{
    assemble_matrix, ExternalData, FeatureMatrix, FeatureToggles, HolidayCalendar, TideSeries, Tz, WeatherSeries,
};
use turnaround_core::gbdt::{self, TrainConfig};
use turnaround_core::linreg;
use turnaround_core::portcall::{format_timestamp, parse_dataset, save_dataset, Dataset, ParseMode};
use turnaround_core::synth::{synthesize_dataset, SynthConfig};

use crate::api::{handle_predict, AppState, PredictRequest, Snapshot};

#[derive(Debug, Parser)]
#[command(name = "turnaround", version, about = "Port-call turnaround time prediction")]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// IANA timezone used for local-time features.
    #[arg(long, global = true, default_value = "Europe/Paris")]
    pub timezone: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw port-call CSV and write the normalized dataset.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip bad rows instead of failing.
        #[arg(long)]
        lenient: bool,
        /// Where to write skipped-row errors as JSON.
        #[arg(long)]
        errors: Option<PathBuf>,
    },
    /// Apply the cleaning rules.
    Clean {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cleaning rules JSON; defaults when absent.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Drop calls without both timestamps before cleaning.
        #[arg(long)]
        drop_open: bool,
    },
    /// Build the feature matrix as CSV.
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the full dataset.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Training config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModelKind::Gbdt)]
        kind: ModelKind,
        #[arg(long, default_value_t = linreg::DEFAULT_RIDGE)]
        ridge: f64,
        #[arg(long)]
        model: PathBuf,
    },
    /// Leave-one-year-out cross-validation report.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Only `year` is supported.
        #[arg(long, default_value = "year")]
        folds: String,
        /// Report path; JSON and markdown are written side by side.
        #[arg(long)]
        report: PathBuf,
        /// Also evaluate the linear baseline.
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long, default_value_t = linreg::DEFAULT_RIDGE)]
        ridge: f64,
    },
    /// Cross-validated grid search over training parameters.
    GridSearch {
        #[command(flatten)]
        data: DataArgs,
        /// Base training config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Axis values JSON, e.g. {"n_trees": [100, 300]}.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect port visits from AIS positions.
    AisVisits {
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        fence: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        min_dwell_min: i64,
        #[arg(long, default_value_t = 120)]
        max_gap_min: i64,
    },
    /// Fill missing call timestamps from detected visits.
    Reconcile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        visits: PathBuf,
        /// CSV `vessel_id,mmsi` mapping call vessel ids to AIS ids.
        #[arg(long)]
        id_map: Option<PathBuf>,
        #[arg(long, default_value_t = ais::DEFAULT_TOLERANCE_HOURS)]
        tolerance_hours: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Batch predictions for a port-call CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calendar: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve predictions over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calendar: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Generate a synthetic port-call dataset.
    Synthesize {
        #[arg(long)]
        out: PathBuf,
        /// Generator config JSON; built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Gbdt,
    Linear,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Cleaned port-call CSV.
    #[arg(long)]
    input: PathBuf,
    /// Holiday dates, one `YYYY-MM-DD` per line.
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Feature toggles JSON.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Tide CSV `timestamp,sensor_id,water_height_m`.
    #[arg(long)]
    tides: Option<PathBuf>,
    /// Weather CSV.
    #[arg(long)]
    weather: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    path.map(|p| read_json(p)).transpose().map(Option::unwrap_or_default)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_strict(path: &Path) -> Result<Dataset> {
    Ok(parse_dataset(path, ParseMode::Strict)
        .with_context(|| format!("reading {}", path.display()))?
        .dataset)
}

fn load_calendar(path: Option<&PathBuf>) -> Result<HolidayCalendar> {
    match path {
        Some(p) => HolidayCalendar::load(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(HolidayCalendar::default()),
    }
}

fn build_matrix(data: &DataArgs, tz: Tz) -> Result<FeatureMatrix> {
    let dataset = load_strict(&data.input)?;
    let calendar = load_calendar(data.calendar.as_ref())?;
    let toggles: FeatureToggles = read_json_or_default(data.features.as_ref())?;
    let extras = ExternalData {
        tides: data
            .tides
            .as_ref()
            .map(|p| TideSeries::load(p).with_context(|| format!("reading {}", p.display())))
            .transpose()?,
        weather: data
            .weather
            .as_ref()
            .map(|p| WeatherSeries::load(p).with_context(|| format!("reading {}", p.display())))
            .transpose()?,
    };
    Ok(assemble_matrix(&dataset, &calendar, &extras, &toggles, tz)?)
}

fn train_config(path: Option<&PathBuf>, seed: u64) -> Result<TrainConfig> {
    let mut config: TrainConfig = read_json_or_default(path)?;
    config.seed = seed;
    config.validate()?;
    Ok(config)
}

/// JSON and markdown paths for a report argument given with either extension.
fn report_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("md"))
}

fn read_id_map(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut map = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            bail!("{}: expected `vessel_id,mmsi` rows", path.display());
        }
        map.insert(rec[0].to_string(), rec[1].to_string());
    }
    Ok(map)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let tz: Tz = cli
        .timezone
        .parse()
        .map_err(|e| anyhow::anyhow!("unknown timezone {:?}: {e}", cli.timezone))?;
    let seed = cli.seed;

    match cli.command {
        Command::Ingest {
            input,
            out,
            lenient,
            errors,
        } => {
            let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
            let outcome = parse_dataset(&input, mode).with_context(|| format!("reading {}", input.display()))?;
            save_dataset(&outcome.dataset, &out)?;
            if let Some(p) = errors {
                let rows: Vec<_> = outcome
                    .errors
                    .iter()
                    .map(|e| serde_json::json!({ "line": e.line, "call_id": e.call_id, "message": e.message }))
                    .collect();
                write_json(&p, &rows)?;
            }
            eprintln!("ingested {} calls, skipped {} rows", outcome.dataset.len(), outcome.errors.len());
        }
        Command::Clean {
            input,
            out,
            rules,
            report,
            drop_open,
        } => {
            let mut dataset = load_strict(&input)?;
            let rules: CleaningRules = read_json_or_default(rules.as_ref())?;
            if drop_open {
                let before = dataset.len();
                dataset = dataset.filtered(|c| c.arrival.is_some() && c.departure.is_some());
                eprintln!("dropped {} open calls", before - dataset.len());
            }
            let (cleaned, rep) = apply_filters(&dataset, &rules)?;
            save_dataset(&cleaned, &out)?;
            if let Some(p) = report {
                write_json(&p, &rep)?;
            }
            eprintln!("kept {} of {} calls", rep.output_size, rep.input_size);
        }
        Command::Features { data, out } => {
            let matrix = build_matrix(&data, tz)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            matrix.write_csv(BufWriter::new(file))?;
        }
        Command::Train {
            data,
            config,
            kind,
            ridge,
            model,
        } => {
            let matrix = build_matrix(&data, tz)?;
            let meta = match kind {
                ModelKind::Gbdt => {
                    let config = train_config(config.as_ref(), seed)?;
                    let m = gbdt::train(&matrix, &config)?;
                    gbdt::save_model(&m, &model)?
                }
                ModelKind::Linear => {
                    let m = linreg::fit_linear(&matrix, ridge)?;
                    linreg::save_linear(&m, &model)?
                }
            };
            eprintln!("wrote {} (sha256 {})", model.display(), meta.sha256);
        }
        Command::Evaluate {
            data,
            config,
            folds,
            report,
            baseline,
            top_k,
            ridge,
        } => {
            if folds != "year" {
                bail!("unsupported fold scheme {folds:?}; only `year` is available");
            }
            let matrix = build_matrix(&data, tz)?;
            let cv = CvConfig { seed, top_k };
            let factory = GbdtFactory {
                config: train_config(config.as_ref(), seed)?,
            };
            let primary = cross_validate(&matrix, &factory, &cv)?;
            let base = if baseline {
                Some(cross_validate(&matrix, &LinearFactory { ridge }, &cv)?)
            } else {
                None
            };
            let (json_path, md_path) = report_paths(&report);
            let mut reports: BTreeMap<&str, &EvalReport> = BTreeMap::new();
            reports.insert("gbdt", &primary);
            if let Some(b) = &base {
                reports.insert("linear", b);
            }
            write_json(&json_path, &reports)?;
            std::fs::write(&md_path, render_markdown(&primary, base.as_ref()))?;
            eprintln!(
                "pooled MAE {:.3} h over {} calls; wrote {} and {}",
                primary.overall.mae,
                primary.overall.n,
                json_path.display(),
                md_path.display()
            );
        }
        Command::GridSearch {
            data,
            config,
            grid,
            out,
        } => {
            let matrix = build_matrix(&data, tz)?;
            let base = train_config(config.as_ref(), seed)?;
            let axes: GridAxes = read_json(&grid)?;
            let result = grid_search(&matrix, &base, &axes, &CvConfig { seed, ..CvConfig::default() })?;
            write_json(&out, &result)?;
            eprintln!("best MAE {:.3} h", result.leaderboard[0].metrics.mae);
        }
        Command::AisVisits {
            track,
            fence,
            out,
            min_dwell_min,
            max_gap_min,
        } => {
            let reports = ais::load_positions(&track).with_context(|| format!("reading {}", track.display()))?;
            let fence = Geofence::load(&fence).with_context(|| format!("reading {}", fence.display()))?;
            let params = VisitParams {
                min_dwell_min,
                max_gap_min,
            };
            let visits = ais::detect_all_visits(&reports, &fence, &params)?;
            ais::write_visits(&visits, BufWriter::new(File::create(&out)?))?;
            eprintln!("found {} visits", visits.len());
        }
        Command::Reconcile {
            input,
            visits,
            id_map,
            tolerance_hours,
            out,
            report,
        } => {
            let dataset = load_strict(&input)?;
            let visits = ais::read_visits(File::open(&visits).with_context(|| format!("reading {}", visits.display()))?)?;
            let map = id_map.as_deref().map(read_id_map).transpose()?.unwrap_or_default();
            let (filled, rep) = ais::reconcile(&dataset, &visits, tolerance_hours, &map);
            save_dataset(&filled, &out)?;
            if let Some(p) = report {
                write_json(&p, &rep)?;
            }
            eprintln!("filled {} timestamps, {} calls unresolved", rep.fills.len(), rep.unresolved.len());
        }
        Command::Predict {
            model,
            calendar,
            input,
            out,
        } => {
            let snapshot = Snapshot::load(&model, calendar.as_deref(), tz).map_err(anyhow::Error::msg)?;
            let dataset = parse_dataset(&input, ParseMode::Strict)?.dataset;
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&out)?));
            w.write_record(["call_id", "predicted_turnaround_hours", "etd"])?;
            for call in dataset.calls() {
                let Some(arrival) = call.arrival else {
                    bail!("call {} has no arrival", call.call_id);
                };
                let request = PredictRequest {
                    call_id: Some(call.call_id.clone()),
                    vessel_id: Some(call.vessel_id.clone()),
                    arrival,
                    unload: call.unload.clone(),
                    load: call.load.clone(),
                };
                let resp = handle_predict(&request, &snapshot).map_err(anyhow::Error::msg)?;
                w.write_record([
                    call.call_id.clone(),
                    resp.predicted_turnaround_hours.to_string(),
                    format_timestamp(&resp.etd),
                ])?;
            }
            w.flush()?;
        }
        Command::Serve {
            model,
            calendar,
            host,
            port,
        } => {
            let state = Arc::new(AppState::new(tz));
            state.load(&model, calendar.as_deref()).map_err(anyhow::Error::msg)?;
            let addr = format!("{host}:{port}").parse().context("bad listen address")?;
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(crate::api::serve(state, addr))?;
        }
        Command::Synthesize { out, config } => {
            let config = match config {
                Some(p) => read_json::<SynthConfig>(&p)?,
                None => SynthConfig::default(),
            };
            let dataset = synthesize_dataset(&config, seed)?;
            save_dataset(&dataset, &out)?;
            eprintln!("wrote {} calls", dataset.len());
        }
    }
    Ok(())
}
