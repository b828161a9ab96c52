use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use cosub::data::{load_dataset, write_choices_csv, write_networks_csv, Dataset, NetworkFormat};
use cosub::diagnostics::{
    agency_edge_probs, fit_report, occupancy_summary, roc_curve, OccupancySample, OccupancySummary,
};
use cosub::gibbs::{run_chain, ChainConfig, JsonlSink, TraceRecord, TraceSink};
use cosub::model::{HyperOverrides, Hyperparameters};
use cosub::simulate::{default_scenario, generate, SimConfig};
use cosub::strategy::{strategy_table, MAX_MULTI_OFFER};
use cosub::summary::{
    map_partition, summarize_fit, summarize_relabeled, write_summary_csv, PosteriorSummary,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::run_dir::*;
use crate::{DiagnosticsArgs, FitArgs, Format, SimulateArgs, StrategiesArgs, SummarizeArgs};

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let mut cfg: SimConfig = match &a.config {
        Some(p) => read_json(p, "--config")?,
        None => default_scenario(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(CliError::input("--config"))?;
    let (data, truth) = generate(&cfg)?;
    ensure_dir(&a.out)?;
    let mut meta = RunMeta::new("simulate", cfg.seed, hash_json(&cfg)?);
    meta.simulation = Some(cfg);
    meta.save(&a.out)?;
    write_choices_csv(&data, a.out.join("choices.csv"))?;
    write_networks_csv(&data, a.out.join("networks.csv"))?;
    write_json(&a.out.join("truth.json"), &truth)?;
    meta.finish(&a.out, Status::Completed)?;
    eprintln!(
        "simulated {} agencies over {} products into {}",
        data.len(),
        data.v_count(),
        a.out.display()
    );
    Ok(())
}

/// Optional fit settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    iters: Option<usize>,
    burnin: Option<usize>,
    thin: Option<usize>,
    #[serde(rename = "H")]
    h: Option<usize>,
    #[serde(rename = "R")]
    r: Option<usize>,
    alpha_c: Option<f64>,
    seed: Option<u64>,
}

fn network_format(name: &str) -> NetworkFormat {
    match name {
        "edge-list" => NetworkFormat::EdgeList,
        _ => NetworkFormat::Wide,
    }
}

/// Attributes an ingestion error to the flag naming the offending file.
fn ingest_error<'a>(
    choices: &'a Path,
    networks: &'a Path,
) -> impl FnOnce(cosub::Error) -> CliError + 'a {
    move |e| {
        let path = match &e {
            cosub::Error::Parse { path, .. } | cosub::Error::Io { path, .. } => Some(path.clone()),
            _ => None,
        };
        let flag = match path {
            Some(p) if p == networks => "--networks",
            Some(p) if p == choices => "--choices",
            _ => "--choices/--networks",
        };
        CliError::Input { flag, source: e }
    }
}

fn load_fit_data(fit: &FitSettings) -> CliResult<Dataset> {
    load_dataset(
        &fit.choices,
        &fit.networks,
        network_format(&fit.network_format),
    )
    .map_err(ingest_error(&fit.choices, &fit.networks))
}

/// Prints a textual iteration counter while forwarding to `inner`.
struct Progress<S> {
    inner: S,
    total: usize,
    every: usize,
}

impl<S: TraceSink> TraceSink for Progress<S> {
    fn record(&mut self, record: TraceRecord) -> cosub::Result<()> {
        self.inner.record(record)
    }

    fn log_joint(&mut self, iteration: usize, value: f64) -> cosub::Result<()> {
        if iteration.is_multiple_of(self.every) || iteration == self.total {
            eprintln!("iteration {iteration}/{}", self.total);
        }
        self.inner.log_joint(iteration, value)
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| CliError::io(path, e))?,
    ))
}

fn absolute(path: &Path) -> PathBuf {
    path.canonicalize().unwrap_or_else(|_| path.to_path_buf())
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let file: FitConfig = match &a.config {
        Some(p) => read_json(p, "--config")?,
        None => FitConfig::default(),
    };
    let iterations = a.iters.or(file.iters).unwrap_or(5000);
    let burnin = a.burnin.or(file.burnin).unwrap_or(1000);
    let thin = a.thin.or(file.thin).unwrap_or(1);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let chain = ChainConfig {
        iterations,
        burnin,
        thin,
        seed,
        ..Default::default()
    };
    chain
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let choices_sha256 = hash_file(&a.choices, "--choices")?;
    let networks_sha256 = hash_file(&a.networks, "--networks")?;
    let format = match a.network_format {
        Format::Wide => NetworkFormat::Wide,
        Format::EdgeList => NetworkFormat::EdgeList,
    };
    let data = load_dataset(&a.choices, &a.networks, format)
        .map_err(ingest_error(&a.choices, &a.networks))?;

    let v = data.v_count();
    let mut hp = Hyperparameters::empirical(
        &data,
        file.h.unwrap_or(15),
        file.r.unwrap_or(10),
        file.alpha_c.unwrap_or(1.0),
    )?;
    if let Some(p) = &a.hyper {
        let overrides: HyperOverrides = read_json(p, "--hyper")?;
        hp = hp
            .apply(&overrides, v)
            .map_err(CliError::input("--hyper"))?;
    }
    hp.h = a.h.unwrap_or(hp.h);
    hp.r = a.r.unwrap_or(hp.r);
    hp.alpha_c = a.alpha_c.unwrap_or(hp.alpha_c);
    hp.validate(v).map_err(|e| CliError::Usage(e.to_string()))?;

    let settings = FitSettings {
        choices: absolute(&a.choices),
        networks: absolute(&a.networks),
        network_format: match a.network_format {
            Format::Wide => "wide".into(),
            Format::EdgeList => "edge-list".into(),
        },
        choices_sha256,
        networks_sha256,
        iterations,
        burnin,
        thin,
        seed,
        mu_sha256: hash_json(&hp.mu)?,
        hyperparameters: hp.clone(),
    };
    let config_hash = hash_json(&FitSettings {
        choices: PathBuf::new(),
        networks: PathBuf::new(),
        ..settings.clone()
    })?;

    ensure_dir(&a.out)?;
    let mut meta = RunMeta::new("fit", seed, config_hash);
    meta.fit = Some(settings);
    meta.save(&a.out)?;

    let sink = JsonlSink::new(
        create(&a.out.join(TRACE))?,
        Some(create(&a.out.join(LOG_JOINT))?),
    )?;
    let mut progress = Progress {
        inner: sink,
        total: iterations,
        every: (iterations / 10).max(1),
    };
    match run_chain(&data, &hp, &chain, &mut progress) {
        Ok(outcome) => {
            progress.inner.flush()?;
            meta.retained = Some(outcome.retained);
            meta.warnings = outcome.warnings;
            for w in &meta.warnings {
                eprintln!("warning: {}", serde_json::to_string(w)?.trim_matches('"'));
            }
            meta.finish(&a.out, Status::Completed)
        }
        Err(e) => {
            let _ = progress.inner.flush();
            let iteration = match &e {
                cosub::Error::Chain { iteration, .. } => Some(*iteration),
                _ => None,
            };
            meta.failure = Some(Failure {
                iteration,
                message: e.to_string(),
            });
            meta.finish(&a.out, Status::Failed)?;
            Err(CliError::Run(e))
        }
    }
}

fn read_trace(path: &Path) -> CliResult<Vec<TraceRecord>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(TraceRecord::read_jsonl(BufReader::new(f))?)
}

const FIT_HINT: &str = "run `cosub fit --out DIR` to produce it";
const SUMMARIZE_HINT: &str = "run `cosub summarize --run DIR` first";

pub fn summarize(a: &SummarizeArgs) -> CliResult<()> {
    let meta = RunMeta::load(&a.run)?;
    let fit = meta.completed_fit(&a.run)?;
    let trace = read_trace(&require(&a.run, TRACE, FIT_HINT)?)?;
    let (summary, conditional) = if a.relabel {
        summarize_relabeled(&trace, &map_partition(&trace)?)?
    } else {
        let data = load_fit_data(fit)?;
        let rerun = ChainConfig {
            iterations: a.sweeps,
            burnin: a.burnin,
            seed: a.seed.unwrap_or(fit.seed),
            ..Default::default()
        };
        rerun
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        summarize_fit(&data, &fit.hyperparameters, &trace, &rerun)?
    };

    let body = Stamped {
        seed: meta.seed,
        config_hash: &meta.config_hash,
        body: &summary,
    };
    write_json(&a.run.join(SUMMARY), &body)?;
    write_summary_csv(&summary, &a.run)?;
    let mut sink = JsonlSink::<_, std::io::Sink>::new(create(&a.run.join(CONDITIONAL))?, None)?;
    for rec in conditional {
        sink.record(rec)?;
    }
    sink.flush()?;
    eprintln!(
        "K_hat = {} (MAP partition frequency {:.3})",
        summary.k_hat, summary.map_partition.frequency
    );
    Ok(())
}

pub fn strategies(a: &StrategiesArgs) -> CliResult<()> {
    if a.multi == 0 || a.multi > MAX_MULTI_OFFER {
        return Err(CliError::Usage(format!(
            "--multi {}: multi-offer search enumerates every product subset and is limited to \
             1 <= M <= {MAX_MULTI_OFFER}",
            a.multi
        )));
    }
    let meta = RunMeta::load(&a.run)?;
    meta.completed_fit(&a.run)?;
    let summary: PosteriorSummary = read_json(&require(&a.run, SUMMARY, SUMMARIZE_HINT)?, "--run")?;
    let conditional = read_trace(&require(&a.run, CONDITIONAL, SUMMARIZE_HINT)?)?;
    let table = strategy_table(&summary, Some(&conditional), a.multi)?;
    table.write_csv(&a.run.join("strategies.csv"))?;
    let body = Stamped {
        seed: meta.seed,
        config_hash: &meta.config_hash,
        body: &table,
    };
    write_json(&a.run.join("strategies.json"), &body)?;
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticsDoc {
    #[serde(rename = "K_hat")]
    k_hat: usize,
    map_frequency: f64,
    max_epsilon: f64,
    auc_flag: f64,
    auc_above_flag: f64,
    auc_quartiles: Option<[f64; 3]>,
    flagged_agencies: Vec<String>,
    occupancy: OccupancySummary,
}

#[derive(Serialize)]
struct AucRow<'a> {
    agency_id: &'a str,
    auc: Option<f64>,
    epsilon: f64,
    flagged: bool,
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Run(e.into()))
}

fn csv_row<T: Serialize>(w: &mut csv::Writer<File>, row: T) -> CliResult<()> {
    w.serialize(row).map_err(|e| CliError::Run(e.into()))
}

pub fn diagnostics(a: &DiagnosticsArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.auc_flag) {
        return Err(CliError::Usage(format!(
            "--auc-flag {} must lie in [0, 1]",
            a.auc_flag
        )));
    }
    let meta = RunMeta::load(&a.run)?;
    let fit = meta.completed_fit(&a.run)?;
    let summary: PosteriorSummary = read_json(&require(&a.run, SUMMARY, SUMMARIZE_HINT)?, "--run")?;
    let trace = read_trace(&require(&a.run, TRACE, FIT_HINT)?)?;
    let data = load_fit_data(fit)?;
    let h = fit.hyperparameters.h;

    let report = fit_report(
        &data,
        &summary.map_partition.partition,
        &summary.p_hat.mean,
        &summary.pibar_hat.mean,
        a.auc_flag,
    )?;
    let samples: Vec<_> = trace
        .iter()
        .map(|r| OccupancySample::from_record(r, h))
        .collect();
    let doc = DiagnosticsDoc {
        k_hat: summary.k_hat,
        map_frequency: summary.map_partition.frequency,
        max_epsilon: report.max_epsilon,
        auc_flag: a.auc_flag,
        auc_above_flag: report.auc_above_flag,
        auc_quartiles: report.auc_quartiles,
        flagged_agencies: report.flagged_agencies.clone(),
        occupancy: occupancy_summary(&samples, h),
    };
    let body = Stamped {
        seed: meta.seed,
        config_hash: &meta.config_hash,
        body: &doc,
    };
    write_json(&a.run.join("diagnostics.json"), &body)?;

    let mut w = csv_writer(&a.run.join("auc.csv"))?;
    for f in &report.agencies {
        csv_row(
            &mut w,
            AucRow {
                agency_id: &f.agency_id,
                auc: f.auc,
                epsilon: f.epsilon,
                flagged: f.flagged,
            },
        )?;
    }
    w.flush()
        .map_err(|e| CliError::io(a.run.join("auc.csv"), e))?;

    let mut w = csv_writer(&a.run.join("roc.csv"))?;
    w.write_record(["agency_id", "fpr", "tpr"])
        .map_err(|e| CliError::Run(e.into()))?;
    for (agency, f) in data.agencies().iter().zip(&report.agencies) {
        if f.auc.is_none() {
            continue;
        }
        for (fpr, tpr) in roc_curve(&agency.network, &summary.pibar_hat.mean[f.cluster - 1])? {
            csv_row(&mut w, (&agency.id, fpr, tpr))?;
        }
    }
    w.flush()
        .map_err(|e| CliError::io(a.run.join("roc.csv"), e))?;

    let mut w = csv_writer(&a.run.join("agency_pi.csv"))?;
    w.write_record(["agency_id", "v", "u", "pi"])
        .map_err(|e| CliError::Run(e.into()))?;
    let layout = cosub::data::EdgeLayout::new(data.v_count());
    for id in &report.flagged_agencies {
        let pi = agency_edge_probs(&trace, &data, id)?;
        for (&(v, u), p) in layout.pairs().iter().zip(pi) {
            csv_row(&mut w, (id, v + 1, u + 1, p))?;
        }
    }
    w.flush()
        .map_err(|e| CliError::io(a.run.join("agency_pi.csv"), e))?;

    eprintln!(
        "max epsilon {:.4}; {:.1}% of AUCs above {}; {} agencies flagged",
        report.max_epsilon,
        100.0 * report.auc_above_flag,
        a.auc_flag,
        report.flagged_agencies.len()
    );
    Ok(())
}
