use super::compare::compare_traces;
use super::config::ExperimentConfig;
use super::manifest::{hash_artifact, sha256_hex, ArtifactEntry, Manifest, StageEntry};
use super::report::{write_report, ReportSummary};
use super::{BoxError, HarnessError};
use crate::attack::{evaluation_cameras, optimize_patch, write_history_csv, PatchMeta};
use crate::locnet::{
    evaluate, load_checkpoint, saliency_map, save_checkpoint, train_with, write_errors_csv, ErrorStats, Normalization,
    PoseModel,
};
use crate::nav::{drive_frames, drive_on_frames, read_trace_csv, write_trace_csv};
use crate::render::{load_dataset, render_dataset, write_dataset, Patch, Split};
use crate::world::{generate_city, make_route, CityModel, Route};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Wall-clock seconds per stage; kept out of the manifest so that it stays reproducible.
pub const TIMINGS_FILE: &str = "timings.json";

pub const STAGES: [&str; 6] = ["city", "dataset", "train", "attack", "drive", "report"];

/// Patch labels driven in the drive stage; the first one is the crafted patch.
const DRIVE_LABELS: [&str; 4] = ["adversarial", "black", "white", "random"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub manifest: Manifest,
    pub statuses: Vec<(&'static str, StageStatus)>,
    pub summary: ReportSummary,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitSummary {
    count: usize,
    mean_position: f64,
    median_position: f64,
    mean_angular: f64,
    median_angular: f64,
}

impl From<&ErrorStats> for SplitSummary {
    fn from(s: &ErrorStats) -> Self {
        Self {
            count: s.records.len(),
            mean_position: s.mean_position,
            median_position: s.median_position,
            mean_angular: s.mean_angular,
            median_angular: s.median_angular,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalSummary {
    parameter_count: usize,
    map_diagonal: f64,
    train: SplitSummary,
    test: SplitSummary,
}

#[derive(Debug, Serialize, Deserialize)]
struct PatchArtifact {
    #[serde(flatten)]
    meta: PatchMeta,
    /// Along-track coordinates of the crafting views.
    crafting_alongs: Vec<f64>,
    /// Along-track coordinates of the drive steps, kept disjoint from the crafting views
    /// by default.
    drive_alongs: Vec<f64>,
}

struct Runner<'a> {
    dir: PathBuf,
    old: Manifest,
    new: Manifest,
    /// Digest of the last stage key and its artifact hashes.
    upstream: String,
    statuses: Vec<(&'static str, StageStatus)>,
    timings: Vec<(&'static str, f64)>,
    /// Seconds each stage took when its artifacts were produced, from an earlier run.
    old_timings: serde_json::Map<String, serde_json::Value>,
    log: &'a mut dyn FnMut(&str),
}

impl Runner<'_> {
    fn can_skip(&self, name: &str, key: &str, artifacts: &[&str]) -> bool {
        let Some(prev) = self.old.stage(name) else {
            return false;
        };
        prev.key == key
            && prev.artifacts.len() == artifacts.len()
            && prev.artifacts.iter().zip(artifacts).all(|(a, want)| {
                a.path == *want
                    && self.dir.join(want).exists()
                    && hash_artifact(&self.dir.join(want)).is_ok_and(|h| h == a.sha256)
            })
    }

    fn stage(
        &mut self,
        name: &'static str,
        params: serde_json::Value,
        artifacts: &[&str],
        run: impl FnOnce(&Path, &mut dyn FnMut(&str)) -> Result<(), BoxError>,
    ) -> Result<StageStatus, HarnessError> {
        let key = sha256_hex(format!("{name}\0{params}\0{}", self.upstream).as_bytes());
        let started = Instant::now();
        let status = if self.can_skip(name, &key, artifacts) {
            (self.log)(&format!("{name}: up to date"));
            StageStatus::Skipped
        } else {
            (self.log)(&format!("{name}: running"));
            for a in artifacts {
                remove(&self.dir.join(a))?;
            }
            run(&self.dir, &mut *self.log).map_err(|e| HarnessError::stage(name, e))?;
            StageStatus::Ran
        };
        let mut entries = Vec::with_capacity(artifacts.len());
        for a in artifacts {
            let path = self.dir.join(a);
            if !path.exists() {
                return Err(HarnessError::stage(name, format!("artifact {a} was not produced")));
            }
            entries.push(ArtifactEntry {
                path: a.to_string(),
                sha256: hash_artifact(&path)?,
            });
        }
        let mut digest = key.clone();
        for e in &entries {
            digest.push_str(&e.sha256);
        }
        self.upstream = sha256_hex(digest.as_bytes());
        self.new.record(StageEntry {
            name: name.to_string(),
            key,
            params,
            artifacts: entries,
        });
        self.statuses.push((name, status));
        let seconds = match status {
            StageStatus::Skipped => self.old_timings.get(name).and_then(|v| v.as_f64()).unwrap_or(0.0),
            StageStatus::Ran => started.elapsed().as_secs_f64(),
        };
        self.timings.push((name, seconds));
        self.checkpoint()?;
        Ok(status)
    }

    /// Persist finished stages, keeping old entries of the stages still ahead so an
    /// interrupted rerun can still skip them.
    fn checkpoint(&self) -> Result<(), HarnessError> {
        let mut m = self.new.clone();
        for s in &self.old.stages {
            if m.stage(&s.name).is_none() {
                m.stages.push(s.clone());
            }
        }
        m.save(&self.dir)?;
        let mut timings = self.old_timings.clone();
        for (n, t) in &self.timings {
            timings.insert(n.to_string(), json!(t));
        }
        let path = self.dir.join(TIMINGS_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&timings)? + "\n").map_err(|e| HarnessError::io(&path, e))
    }
}

fn remove(path: &Path) -> Result<(), HarnessError> {
    let r = if path.is_dir() {
        std::fs::remove_dir_all(path)
    } else if path.exists() {
        std::fs::remove_file(path)
    } else {
        Ok(())
    };
    r.map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BoxError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn load_city(dir: &Path) -> Result<CityModel, BoxError> {
    Ok(CityModel::from_json(&std::fs::read_to_string(dir.join("city.json"))?)?)
}

fn load_route(city: &CityModel, config: &ExperimentConfig) -> Result<Route, BoxError> {
    let r = &config.route;
    Ok(make_route(city, r.from, r.turn_at, r.to)?)
}

pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineRun, HarnessError> {
    run_pipeline_with(config, &mut |_| {})
}

/// Run every stage, skipping those whose configuration and upstream artifacts match the
/// manifest already in the output directory. `log` receives progress lines.
pub fn run_pipeline_with(config: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<PipelineRun, HarnessError> {
    config.validate()?;
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let old = Manifest::load(&dir)?.unwrap_or_default();
    let old_timings = std::fs::read_to_string(dir.join(TIMINGS_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    let mut r = Runner {
        dir: dir.clone(),
        old,
        new: Manifest::default(),
        upstream: String::new(),
        statuses: Vec::new(),
        timings: Vec::new(),
        old_timings,
        log,
    };

    r.stage("city", json!(config.city), &["city.json"], |dir, _| {
        let city = generate_city(config.city.seed, &config.city.config)?;
        std::fs::write(dir.join("city.json"), city.to_json())?;
        // fail early on an unusable route
        load_route(&city, config)?;
        Ok(())
    })?;

    r.stage("dataset", json!(config.dataset), &["dataset"], |dir, _| {
        let city = load_city(dir)?;
        let ds = render_dataset(&city, &config.dataset.sampler, config.dataset.seed)?;
        write_dataset(&ds, &dir.join("dataset"))?;
        Ok(())
    })?;

    let train_artifacts = [
        "model.ckpt",
        "train_history.csv",
        "errors_train.csv",
        "errors_test.csv",
        "eval.json",
        "saliency",
    ];
    r.stage("train", json!({"model": config.model, "train": config.train}), &train_artifacts, |dir, log| {
        let city = load_city(dir)?;
        // always the on-disk dataset, so a skipped dataset stage trains on the same data
        let ds = load_dataset(&dir.join("dataset"))?;
        let model = PoseModel::<f32>::new(
            config.model.architecture.clone(),
            Normalization::for_city(&city),
            config.model.seed,
        )?;
        let started = Instant::now();
        let (model, history) = train_with(model, &ds, &config.train, |e| {
            let test = match (e.test_mean_position, e.test_mean_angular) {
                (Some(p), Some(a)) => format!(", test {p:.1} m / {a:.1} deg"),
                _ => String::new(),
            };
            log(&format!(
                "train: epoch {} loss {:.4}, train {:.1} m / {:.1} deg{test} ({:.0} s)",
                e.epoch,
                e.train_loss,
                e.train_mean_position,
                e.train_mean_angular,
                started.elapsed().as_secs_f64()
            ));
        })?;
        save_checkpoint(&model, &dir.join("model.ckpt"))?;
        history.write_csv(&dir.join("train_history.csv"))?;
        let train_stats = evaluate(&model, &ds, Split::Train)?;
        let test_stats = evaluate(&model, &ds, Split::Test)?;
        write_errors_csv(&train_stats, &dir.join("errors_train.csv"))?;
        write_errors_csv(&test_stats, &dir.join("errors_test.csv"))?;
        write_json(
            &dir.join("eval.json"),
            &EvalSummary {
                parameter_count: model.parameter_count(),
                map_diagonal: city.extent.norm(),
                train: (&train_stats).into(),
                test: (&test_stats).into(),
            },
        )?;
        log(&format!(
            "train: test mean error {:.1} m / {:.1} deg",
            test_stats.mean_position, test_stats.mean_angular
        ));
        let sal_dir = dir.join("saliency");
        std::fs::create_dir_all(&sal_dir)?;
        for (i, s) in ds.split(Split::Test).take(config.model.saliency_samples).enumerate() {
            let grid = saliency_map(&model, &s.image, config.model.saliency_block, config.train.direction_weight)?;
            grid.write_csv(&sal_dir.join(format!("sample_{i}.csv")))?;
            grid.save_png(&sal_dir.join(format!("sample_{i}.png")))?;
            s.image.save_png(&sal_dir.join(format!("sample_{i}_input.png")))?;
        }
        Ok(())
    })?;

    let attack_artifacts = ["patch.png", "patch.json", "attack_history.csv"];
    r.stage("attack", json!({"route": config.route, "attack": config.attack}), &attack_artifacts, |dir, log| {
        let city = load_city(dir)?;
        let route = load_route(&city, config)?;
        let (model, _) = load_checkpoint(&dir.join("model.ckpt"))?;
        let result = optimize_patch(&model, &city, &route, &config.attack)?;
        log(&format!(
            "attack: V {:.4} -> {:.4} after {} evaluations",
            result.initial_value, result.best_value, result.evaluations
        ));
        result.patch.save_png(&dir.join("patch.png"))?;
        write_history_csv(&result.history, &dir.join("attack_history.csv"))?;
        let crafting_alongs = evaluation_cameras(&route, &config.attack)
            .iter()
            .map(|c| route.along_track(c.position.xy()))
            .collect();
        write_json(
            &dir.join("patch.json"),
            &PatchArtifact {
                meta: PatchMeta::new(&config.attack, &result),
                crafting_alongs,
                drive_alongs: config.drive.step_alongs(),
            },
        )?;
        Ok(())
    })?;

    let drive_params = json!({
        "route": config.route,
        "drive": config.drive,
        "random_patch_seed": config.random_patch_seed,
    });
    r.stage("drive", drive_params, &["traces"], |dir, _| {
        let city = load_city(dir)?;
        let route = load_route(&city, config)?;
        let (model, _) = load_checkpoint(&dir.join("model.ckpt"))?;
        let patches = [
            Patch::load_png(&dir.join("patch.png"))?,
            Patch::black(),
            Patch::white(),
            Patch::random(config.random_patch_seed),
        ];
        let frames = drive_frames(&city, &route, &config.drive)?;
        let traces = dir.join("traces");
        std::fs::create_dir_all(&traces)?;
        for (label, patch) in DRIVE_LABELS.iter().zip(&patches) {
            let trace = drive_on_frames(&frames, &route, &model, Some(patch), &config.drive.estimator)?;
            write_trace_csv(&trace, &traces.join(format!("{label}.csv")))?;
        }
        Ok(())
    })?;

    let report_params = json!({"region": config.region, "region_scan": config.region_scan});
    r.stage("report", report_params, &["report"], |dir, log| {
        let mut traces = Vec::with_capacity(DRIVE_LABELS.len());
        for label in DRIVE_LABELS {
            traces.push((label.to_string(), read_trace_csv(&dir.join("traces").join(format!("{label}.csv")))?));
        }
        let table = compare_traces(traces, &config.region)?;
        let summary = write_report(&dir.join("report"), &table, DRIVE_LABELS[0], &config.region_scan)?;
        log(&format!(
            "report: adversarial shift vs black {:.1} m (noise {:.1} m), decisions {:?}",
            summary.target_mean_backward_vs_black, summary.black_noise, summary.decisions
        ));
        Ok(())
    })?;

    let summary_path = dir.join("report").join("summary.json");
    let text = std::fs::read_to_string(&summary_path).map_err(|e| HarnessError::io(&summary_path, e))?;
    let summary = serde_json::from_str(&text)?;
    Ok(PipelineRun {
        manifest: r.new,
        statuses: r.statuses,
        summary,
    })
}
