use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use patchreg::benchgen::{
    generate_entries, load_sample, read_suite_index, suite_entries, write_suite, SuiteIndex, SuiteIndexEntry,
};
use patchreg::eval::{
    bin_report, level_report, paired_csv, paired_rows, success_curve, success_curve_csv, BinAxis, BinReport, EvalRecord,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, MethodEntry};
use crate::error::{CliError, CliResult};
use crate::runner::{result_path, run_sample, MethodRun, ResultFile};

pub const RESULTS_DIR: &str = "results";
pub const REPORTS_DIR: &str = "reports";
/// Wall-clock measurements live apart from the reproducible outputs.
pub const RUNTIME_DIR: &str = "runtime";

fn pool(config: &ExperimentConfig) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        b = b.num_threads(w);
    }
    Ok(b.build()?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Generates the configured suite under `config.suite`.
pub fn cmd_gen(config: &ExperimentConfig, dry_run: bool) -> CliResult<SuiteIndex> {
    config.validate()?;
    let entries = suite_entries(&config.generation).map_err(CliError::invalid)?;
    info!("generating {} samples into {}", entries.len(), config.suite.display());
    let samples = if dry_run {
        entries.into_iter().map(|e| (e, None)).collect::<Vec<_>>()
    } else {
        pool(config)?
            .install(|| generate_entries(&entries))?
            .into_iter()
            .map(|(e, s)| (e, Some(s)))
            .collect()
    };
    Ok(write_suite(&config.suite, &config.generation, &samples)?)
}

#[derive(Clone, Debug, Default)]
pub struct RegisterSummary {
    pub samples: usize,
    pub results: usize,
    pub failures: usize,
}

/// Selection of samples for `register`.
#[derive(Clone, Debug, Default)]
pub enum SampleFilter {
    #[default]
    All,
    Ids(Vec<String>),
}

fn selected_samples<'a>(index: &'a SuiteIndex, filter: &SampleFilter) -> CliResult<Vec<&'a SuiteIndexEntry>> {
    match filter {
        SampleFilter::All => Ok(index.samples.iter().collect()),
        SampleFilter::Ids(ids) => ids
            .iter()
            .map(|id| {
                index
                    .samples
                    .iter()
                    .find(|s| &s.id == id)
                    .ok_or_else(|| CliError::config(format!("sample {id:?} is not in the suite")))
            })
            .collect(),
    }
}

fn open_suite(config: &ExperimentConfig) -> CliResult<SuiteIndex> {
    if !config.suite.join(patchreg::benchgen::suite::SUITE_FILE).is_file() {
        return Err(CliError::config(format!(
            "no suite at {}; run `gen` first",
            config.suite.display()
        )));
    }
    let index = read_suite_index(&config.suite)?;
    if index.samples.iter().any(|s| s.deformation_rms.is_none()) {
        return Err(CliError::config(
            "the suite was generated with --dry-run and holds no clouds",
        ));
    }
    Ok(index)
}

/// Runs `methods` on the selected samples and writes one result file per
/// (method, sample) plus a runtime table per method.
pub fn cmd_register(
    config: &ExperimentConfig,
    methods: &[&MethodEntry],
    filter: &SampleFilter,
) -> CliResult<RegisterSummary> {
    config.validate()?;
    let index = open_suite(config)?;
    let selected = selected_samples(&index, filter)?;
    info!(
        "registering {} samples with {} method(s)",
        selected.len(),
        methods.len()
    );
    let runs: Vec<Vec<MethodRun>> = pool(config)?.install(|| {
        selected
            .par_iter()
            .map(|entry| {
                let sample = load_sample(config.suite.join(&entry.manifest))?;
                run_sample(&entry.id, &sample, methods, config)
            })
            .collect::<CliResult<_>>()
    })?;

    let results_dir = config.output.join(RESULTS_DIR);
    let runtime_dir = config.output.join(RUNTIME_DIR);
    fs::create_dir_all(&runtime_dir)?;
    let mut summary = RegisterSummary {
        samples: selected.len(),
        ..Default::default()
    };
    for (k, method) in methods.iter().enumerate() {
        let dir = results_dir.join(&method.name);
        if matches!(filter, SampleFilter::All) && dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        let mut runtime = csv::Writer::from_path(runtime_dir.join(format!("{}.csv", method.name)))?;
        for sample_runs in &runs {
            let run = &sample_runs[k];
            write_json(
                &result_path(&results_dir, &method.name, &run.result.sample_id),
                &run.result,
            )?;
            runtime.serialize(RuntimeRow {
                sample_id: run.result.sample_id.clone(),
                runtime_s: run.runtime_s,
            })?;
            summary.results += 1;
            summary.failures += run.result.failed() as usize;
        }
        runtime.flush()?;
    }
    Ok(summary)
}

#[derive(Serialize, Deserialize)]
struct RuntimeRow {
    sample_id: String,
    runtime_s: f64,
}

fn read_runtimes(path: &Path) -> CliResult<BTreeMap<String, f64>> {
    if !path.is_file() {
        return Ok(BTreeMap::new());
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<RuntimeRow>()
        .map(|row| Ok(row.map(|v| (v.sample_id, v.runtime_s))?))
        .collect()
}

/// Result files grouped by method: configured methods first, then any other
/// method directory in name order; files in name order.
pub fn read_results(config: &ExperimentConfig) -> CliResult<Vec<(String, Vec<ResultFile>)>> {
    let results_dir = config.output.join(RESULTS_DIR);
    if !results_dir.is_dir() {
        return Err(CliError::config(format!("no results under {}", results_dir.display())));
    }
    let mut on_disk: Vec<String> = fs::read_dir(&results_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    on_disk.sort();
    let mut order: Vec<String> = config
        .methods
        .iter()
        .map(|m| m.name.clone())
        .filter(|n| on_disk.contains(n))
        .collect();
    order.extend(
        on_disk
            .into_iter()
            .filter(|n| !config.methods.iter().any(|m| &m.name == n)),
    );

    let mut out = Vec::new();
    for method in order {
        let mut files: Vec<PathBuf> = fs::read_dir(results_dir.join(&method))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let results = files
            .iter()
            .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
            .collect::<CliResult<Vec<ResultFile>>>()?;
        if !results.is_empty() {
            out.push((method, results));
        }
    }
    if out.is_empty() {
        return Err(CliError::config(format!(
            "no result files under {}",
            results_dir.display()
        )));
    }
    Ok(out)
}

/// Per-sample row of the JSON reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub method: String,
    pub rms_tre: Option<f64>,
    pub visibility: f64,
    pub noise_level: f64,
    pub deformation_rms: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub table: BinReport,
    pub samples: Vec<SampleRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub samples: usize,
    pub failed: usize,
    pub mean_rms_tre: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct EvalSummary {
    pub methods: Vec<MethodSummary>,
    pub records: Vec<EvalRecord>,
    /// Report files written, relative to the output directory.
    pub reports: Vec<PathBuf>,
}

fn summarize(method: &str, results: &[ResultFile]) -> MethodSummary {
    let errs: Vec<f64> = results.iter().filter_map(|r| r.rms_tre).collect();
    MethodSummary {
        method: method.to_string(),
        samples: results.len(),
        failed: results.iter().filter(|r| r.failed()).count(),
        mean_rms_tre: (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64),
    }
}

/// Aggregates the result files into reports. Everything under `reports/` is a
/// function of the result files alone; runtime tables go to `runtime/`.
pub fn cmd_eval(config: &ExperimentConfig) -> CliResult<EvalSummary> {
    config.validate()?;
    let grouped = read_results(config)?;
    let mut records = Vec::new();
    let mut methods = Vec::new();
    for (method, results) in &grouped {
        let runtimes = read_runtimes(&config.output.join(RUNTIME_DIR).join(format!("{method}.csv")))?;
        methods.push(summarize(method, results));
        records.extend(
            results
                .iter()
                .map(|r| r.to_record(runtimes.get(&r.sample_id).copied().unwrap_or(0.0))),
        );
    }
    let rows: Vec<SampleRow> = grouped
        .iter()
        .flat_map(|(_, results)| results.iter())
        .map(|r| SampleRow {
            sample_id: r.sample_id.clone(),
            method: r.method.clone(),
            rms_tre: r.rms_tre,
            visibility: r.visibility,
            noise_level: r.noise_level,
            deformation_rms: r.deformation_rms,
            failed: r.failed(),
        })
        .collect();

    let reports = config.output.join(REPORTS_DIR);
    fs::create_dir_all(&reports)?;
    let mut written = Vec::new();
    let mut emit = |name: String, text: String| -> CliResult<()> {
        fs::write(reports.join(&name), text)?;
        written.push(PathBuf::from(REPORTS_DIR).join(name));
        Ok(())
    };

    let r = &config.report;
    let tables = [
        (
            "visibility",
            bin_report(&records, BinAxis::Visibility, &r.visibility_edges)?,
        ),
        ("noise", level_report(&records, BinAxis::Noise)),
        (
            "deformation",
            bin_report(&records, BinAxis::Deformation, &r.deformation_edges)?,
        ),
    ];
    for (name, table) in &tables {
        emit(format!("{name}.csv"), table.to_csv(false)?)?;
        let json = ReportJson {
            table: table.without_runtime(),
            samples: rows.clone(),
        };
        emit(format!("{name}.json"), serde_json::to_string_pretty(&json)? + "\n")?;
    }

    emit(
        "success_rate.csv".into(),
        success_curve_csv(&success_curve(&records, &r.tau_grid)?)?,
    )?;
    let [lo, hi] = r.low_visibility;
    let low: Vec<EvalRecord> = records
        .iter()
        .filter(|x| x.visibility >= lo && x.visibility < hi)
        .cloned()
        .collect();
    emit(
        "success_rate_low_visibility.csv".into(),
        success_curve_csv(&success_curve(&low, &r.tau_grid).unwrap_or_default())?,
    )?;

    if let Some((reference, _)) = grouped.first() {
        for (other, _) in grouped.iter().skip(1) {
            let paired = paired_rows(&records, reference, other);
            emit(
                format!("paired_{reference}_{other}.csv"),
                paired_csv(&paired, reference, other)?,
            )?;
        }
    }
    emit("summary.json".into(), serde_json::to_string_pretty(&methods)? + "\n")?;

    let runtime_dir = config.output.join(RUNTIME_DIR);
    fs::create_dir_all(&runtime_dir)?;
    fs::write(runtime_dir.join("visibility.csv"), tables[0].1.to_csv(true)?)?;

    Ok(EvalSummary {
        methods,
        records,
        reports: written,
    })
}

#[derive(Clone, Debug, Default)]
pub struct BenchSummary {
    pub register: RegisterSummary,
    pub eval: EvalSummary,
}

/// `gen`, then `register` with every configured method, then `eval`.
pub fn cmd_bench(config: &ExperimentConfig) -> CliResult<BenchSummary> {
    cmd_gen(config, false)?;
    let methods: Vec<&MethodEntry> = config.methods.iter().collect();
    let results_dir = config.output.join(RESULTS_DIR);
    if results_dir.exists() {
        fs::remove_dir_all(&results_dir)?;
    }
    let register = cmd_register(config, &methods, &SampleFilter::All)?;
    let eval = cmd_eval(config)?;
    Ok(BenchSummary { register, eval })
}
