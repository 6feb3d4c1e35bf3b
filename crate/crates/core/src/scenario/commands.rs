use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{render_comparison_table, render_run_report, render_sweep_table, RunReport, Setting, SweepReport, SweepRow, TimingTable};
use super::{prepare, train_and_detect, DataSource, Prepared, ScenarioConfig, TrainOutcome};
use crate::dataio::{generate_synthetic, save_csv};
use crate::error::{Error, Result};
use crate::federation::RoundLog;
use crate::gmm::GmmModel;
use crate::neural::ModelKind;
use crate::preprocess::NormalizationParams;
use crate::scalar::Scalar;

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Writes the synthetic clients as one CSV per client into `out_dir`.
pub fn cmd_generate(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = cfg.clone().resolved();
    let DataSource::Synthetic(synth) = &cfg.data else {
        return Err(Error::invalid("data", "generate needs a synthetic data source"));
    };
    create_dir(out_dir)?;
    let clients = generate_synthetic::<f64>(synth)?;
    clients
        .iter()
        .map(|ds| {
            let path = out_dir.join(format!("{}.csv", ds.client_id));
            save_csv(ds, &path)?;
            Ok(path)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct GmmArtifact<T> {
    client_id: String,
    normalizer: Option<NormalizationParams<T>>,
    model: GmmModel<T>,
}

#[derive(Serialize)]
struct RoundLine<'a> {
    k: usize,
    #[serde(flatten)]
    log: &'a RoundLog,
}

/// Writes `report.json`, `metrics.txt`, `rounds.jsonl`, `gmm/<client>.json` and
/// `weights/<client>.bin`, filling in `report.artifacts`.
pub fn write_run_artifacts<T: Scalar>(
    out: &Path,
    prep: &Prepared<T>,
    outcome: &TrainOutcome<T>,
    report: &mut RunReport,
) -> Result<()> {
    create_dir(&out.join("gmm"))?;
    create_dir(&out.join("weights"))?;
    let mut artifacts = vec![
        "report.json".to_string(),
        "metrics.txt".to_string(),
        "rounds.jsonl".to_string(),
    ];
    for c in &prep.clients {
        let rel = format!("gmm/{}.json", c.id());
        write_json(
            &out.join(&rel),
            &GmmArtifact {
                client_id: c.id().to_string(),
                normalizer: c.normalizer.clone(),
                model: c.gmm.clone(),
            },
        )?;
        artifacts.push(rel);
    }
    for (id, model) in &outcome.models {
        let rel = format!("weights/{id}.bin");
        write_file(&out.join(&rel), &model.weights.to_bytes())?;
        artifacts.push(rel);
    }
    let rounds_path = out.join("rounds.jsonl");
    let file = fs::File::create(&rounds_path).map_err(|e| Error::io(&rounds_path, e))?;
    let mut w = BufWriter::new(file);
    for g in &report.groups {
        for log in &g.rounds {
            serde_json::to_writer(&mut w, &RoundLine { k: g.k, log })?;
            w.write_all(b"\n").map_err(|e| Error::io(&rounds_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&rounds_path, e))?;
    report.artifacts = artifacts;
    write_file(&out.join("metrics.txt"), render_run_report(report).as_bytes())?;
    write_json(&out.join("report.json"), report)
}

/// Runs the full pipeline with the configured model kind and federation settings.
pub fn cmd_run(cfg: &ScenarioConfig) -> Result<RunReport> {
    let prep = prepare::<f64>(cfg)?;
    let c = &prep.config;
    let outcome = train_and_detect(&prep, c.model_kind, &c.federation)?;
    let mut report = RunReport::build(&prep, &outcome)?;
    if let Some(out) = &c.output_dir {
        create_dir(out)?;
        write_run_artifacts(out, &prep, &outcome, &mut report)?;
    }
    Ok(report)
}

fn sweep(cfg: &ScenarioConfig, settings: &[Setting], name: &str) -> Result<SweepReport> {
    if cfg.lr_grid.is_empty() {
        return Err(Error::invalid("lr_grid", "must not be empty"));
    }
    let prep = prepare::<f64>(cfg)?;
    let c = &prep.config;
    let mut rows = Vec::new();
    let mut stage_maps = Vec::new();
    for &setting in settings {
        for kind in [ModelKind::Vae, ModelKind::Ae] {
            for &lr in &c.lr_grid {
                let mut fed = c.federation.clone();
                fed.lr = lr;
                if setting == Setting::Distributed {
                    fed.theta = 1.0;
                    fed.aggregation = crate::federation::Aggregation::FedPlus;
                }
                let outcome = train_and_detect(&prep, kind, &fed)?;
                log::info!("{setting} {kind} lr={lr} done");
                rows.push(SweepRow::from_outcome(setting, kind, lr, &outcome)?);
                stage_maps.push(outcome.stage_seconds);
            }
        }
    }
    let report = SweepReport {
        config: c.clone(),
        rows,
        timings: TimingTable::build(&prep, &stage_maps.iter().collect::<Vec<_>>()),
    };
    if let Some(out) = &c.output_dir {
        create_dir(out)?;
        write_json(&out.join(format!("{name}.json")), &report)?;
        let table = if settings.len() > 1 {
            render_comparison_table(&report)
        } else {
            render_sweep_table(&report)
        };
        write_file(&out.join(format!("{name}.txt")), table.as_bytes())?;
    }
    Ok(report)
}

/// lr grid × {VAE, AE} with the configured federation settings.
pub fn cmd_sweep_lr(cfg: &ScenarioConfig) -> Result<SweepReport> {
    let setting = if cfg.federation.theta == 1.0 {
        Setting::Distributed
    } else {
        Setting::Federated
    };
    sweep(cfg, &[setting], "sweep")
}

/// {Federated (configured θ), Distributed (θ = 1)} × {VAE, AE} × lr grid.
pub fn cmd_compare(cfg: &ScenarioConfig) -> Result<SweepReport> {
    sweep(cfg, &[Setting::Federated, Setting::Distributed], "compare")
}

fn render_json_file(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("groups").is_some() {
        let report: RunReport = serde_json::from_value(value)?;
        Ok(render_run_report(&report))
    } else if value.get("rows").is_some() {
        let report: SweepReport = serde_json::from_value(value)?;
        let settings: std::collections::BTreeSet<Setting> = report.rows.iter().map(|r| r.setting).collect();
        Ok(if settings.len() > 1 {
            render_comparison_table(&report)
        } else {
            render_sweep_table(&report)
        })
    } else {
        Err(Error::invalid("report", format!("{} is not a run or sweep report", path.display())))
    }
}

/// Renders saved reports. Directories are searched for `report.json`, `sweep.json`
/// and `compare.json`.
pub fn cmd_report(paths: &[PathBuf]) -> Result<String> {
    let mut out = String::new();
    for path in paths {
        let files: Vec<PathBuf> = if path.is_dir() {
            ["report.json", "sweep.json", "compare.json"]
                .iter()
                .map(|f| path.join(f))
                .filter(|p| p.is_file())
                .collect()
        } else {
            vec![path.clone()]
        };
        if files.is_empty() {
            return Err(Error::invalid("report", format!("no reports found in {}", path.display())));
        }
        for f in files {
            out.push_str(&format!("== {} ==\n", f.display()));
            out.push_str(&render_json_file(&f)?);
            out.push('\n');
        }
    }
    Ok(out)
}
