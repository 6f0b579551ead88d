//! Command-line experiment runner on top of `hjhomog-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plot;
pub mod verify;

use hjhomog_core::par::Exec;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use config::{resolve, ExperimentConfig, Resolved};
use error::CliError;
use experiments::{execute, Check, Outcome};
use output::Sink;
use verify::Suite;

/// Printed on stdout after every `run`/`verify`; not written to disk so the
/// output directory stays byte-identical between runs.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub wall_clock_seconds: f64,
    pub output_directory: String,
    pub outputs: Vec<String>,
    pub metrics: &'a BTreeMap<String, f64>,
    pub checks: &'a [Check],
}

/// Size the global pool; `None` keeps rayon's default. Returns the strategy to use.
pub fn configure_jobs(jobs: Option<usize>) -> Result<Exec, CliError> {
    match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            // a second call in the same process (tests) keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(Exec::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Exec::Sequential),
        None => Ok(Exec::available()),
    }
}

fn write_config(sink: &mut Sink, resolved: &Resolved) -> Result<(), CliError> {
    sink.write("resolved_config.json", resolved.to_json().as_bytes())?;
    sink.write("config_sources.csv", resolved.sources_csv().as_bytes())?;
    Ok(())
}

fn finish(
    sink: &Sink,
    result: Result<Outcome, CliError>,
    config: &ExperimentConfig,
    started: Instant,
) -> Result<Outcome, CliError> {
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            sink.finish(Some(&e.to_string()))?;
            return Err(e);
        }
    };
    sink.finish(None)?;
    let mut outputs = sink.files().to_vec();
    outputs.sort();
    outputs.push(output::MANIFEST.into());
    let record = RunRecord {
        version: env!("CARGO_PKG_VERSION"),
        config,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        output_directory: sink.root().display().to_string(),
        outputs,
        metrics: &out.metrics,
        checks: &out.checks,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&record).expect("record serializes")
    );
    Ok(out)
}

fn check_result(out: Outcome) -> Result<Outcome, CliError> {
    match out.first_failure() {
        Some(c) => Err(CliError::Check(format!("{}: {}", c.name, c.detail))),
        None => Ok(out),
    }
}

/// `hjhomog run <config>`.
pub fn run(config_path: &Path, overrides: &[String], exec: Exec) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(config_path).map_err(|source| CliError::Io {
        path: config_path.display().to_string(),
        source,
    })?;
    let resolved = resolve(&config_path.display().to_string(), &text, overrides)?;
    let mut sink = Sink::create(&resolved.config.output.directory)?;
    write_config(&mut sink, &resolved)?;
    let result = execute(&resolved.config, &mut sink, exec);
    let out = finish(&sink, result, &resolved.config, started)?;
    check_result(out)
}

/// `hjhomog verify <suite>`: prints one PASS/FAIL line per check on stderr.
pub fn verify(suite: Suite, overrides: &[String], exec: Exec) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let parts = verify::suite_configs(suite, overrides)?;
    let root = parts[0].1.config.output.directory.clone();
    let mut sink = Sink::create(&root)?;
    let mut total = Outcome::default();
    let mut result = Ok(());
    for (label, resolved) in &parts {
        sink.set_prefix(label);
        write_config(&mut sink, resolved)?;
        match verify::run_part(suite, &resolved.config, &mut sink, exec) {
            Ok(out) => {
                let prefix = if label.is_empty() { String::new() } else { format!("{label}.") };
                total.absorb(&prefix, out);
            }
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    sink.set_prefix("");
    let result = result.and_then(|_| {
        let mut csv = String::from("suite,check,pass,detail\n");
        for c in &total.checks {
            csv.push_str(&format!(
                "{},{},{},\"{}\"\n",
                suite.name(),
                c.name,
                c.passed,
                c.detail.replace('"', "'")
            ));
        }
        sink.write("verify.csv", csv.as_bytes())?;
        Ok(total)
    });
    let out = finish(&sink, result, &parts[0].1.config, started)?;
    for c in &out.checks {
        eprintln!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    check_result(out)
}

/// `hjhomog plot <csv> --out <svg>`.
pub fn plot(csv: &Path, out: &Path) -> Result<(), CliError> {
    let svg = plot::plot_csv(csv)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(out, svg).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })
}
