//! Orchestration of the experiment chain. The in-memory functions
//! ([`generate`], [`train_members`], [`predict`], [`weights`],
//! [`longtime_delta`]) do the work; the `stage_*` functions wrap them with
//! the run-directory layout and the manifest.

mod config;
mod manifest;

pub use config::{
    default_members, ClusterConfig, ConfusionConfig, EnsembleConfig, ExperimentConfig, LongtimeConfig, MemberSlot,
    ModelConfig, TimeConfig, WeightsConfig, SEED_ENV,
};
pub use manifest::{file_record, sha256_file, FileRecord, RunManifest, StageRecord, MANIFEST_FILE};

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    extract_features_many, load_network, save_network, train, NetworkFile, NetworkParams, TrainReport,
};
use crate::clustering::{average_elbow, elbow_scan, kmeans_assign_all, kmeans_fit, ClusterModel, ElbowCurve};
use crate::confusion::{ensemble_average, predict_mct, sweep, AccuracyCurve, MctPrediction};
use crate::dynamics::{analytic_mct, ModelId};
use crate::error::{MctError, Result};
use crate::introspection::{
    center_fidelity_curve, compare_periods, feature_trajectories, importance_csv, overlay_mask, periods_csv,
    rotation_jaccard, select_pixels, trajectories_csv, transition_time, weight_importance, ImportanceMap,
    PeriodComparison,
};
use crate::landscape::{
    empirical_mct, generate_dataset, load_dataset, read_split_manifest, save_dataset, split_dataset,
    write_split_manifest, FourWaySplit, LandscapeDataset,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const DATASET_FILE: &str = "dataset.mctl";
pub const SPLIT_FILE: &str = "split.txt";
pub const NETWORK_DIR: &str = "networks";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.csv";
pub const ACCURACY_FILE: &str = "accuracy_curve.csv";
pub const MEMBER_CURVES_FILE: &str = "member_curves.csv";
pub const ELBOW_FILE: &str = "elbow.csv";
pub const PREDICTION_FILE: &str = "prediction.json";
pub const TRANSITIONS_FILE: &str = "transitions.csv";
pub const FEATURES_DIR: &str = "features";
pub const WEIGHTS_FILE: &str = "weights_map.csv";
pub const WEIGHTS_MEMBERS_FILE: &str = "weights_per_architecture.csv";
pub const WEIGHTS_SUMMARY_FILE: &str = "weights_summary.json";
pub const LONGTIME_DIR: &str = "longtime";
pub const LONGTIME_FILE: &str = "longtime_periods.csv";

/// Generates the configured dataset; `seed` records the master seed.
pub fn generate(cfg: &ExperimentConfig) -> Result<LandscapeDataset> {
    let problem = cfg.model.problem()?;
    let t = &cfg.time;
    let mut ds = generate_dataset(&problem, t.t_start, t.t_end, t.t_step, &cfg.mesh)?;
    ds.seed = cfg.master_seed;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedMember {
    pub slot: MemberSlot,
    pub seed: u64,
    pub params: NetworkParams,
    pub report: TrainReport,
}

// One per member, so the size gap between variants does not matter.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum MemberOutcome {
    Trained(TrainedMember),
    Failed { slot: MemberSlot, seed: u64, error: String },
}

impl MemberOutcome {
    pub fn trained(&self) -> Option<&TrainedMember> {
        match self {
            MemberOutcome::Trained(m) => Some(m),
            MemberOutcome::Failed { .. } => None,
        }
    }
}

fn rows<'a>(ds: &'a LandscapeDataset, idx: &[usize]) -> Vec<&'a [f64]> {
    idx.iter().map(|&i| ds.landscapes[i].pixels.as_slice()).collect()
}

/// Trains every selected member on `ae_train` (validated on `ae_val`).
/// Members whose training diverges or hits a numeric failure are returned
/// as [`MemberOutcome::Failed`]; other errors abort.
pub fn train_members(
    cfg: &ExperimentConfig,
    dataset: &LandscapeDataset,
    split: &FourWaySplit,
) -> Result<Vec<MemberOutcome>> {
    if split.len() != dataset.len() {
        return Err(MctError::Shape {
            context: "split size vs dataset size",
            expected: dataset.len(),
            actual: split.len(),
        });
    }
    let slots = cfg.members_for(dataset.pixel_count())?;
    let ae_train = rows(dataset, &split.ae_train);
    let ae_val = rows(dataset, &split.ae_val);
    slots
        .par_iter()
        .map(|&slot| {
            let seed = cfg.member_seed(slot.index);
            let tc = crate::autoencoder::TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let started = Instant::now();
            match train(&ae_train, &ae_val, slot.spec, &tc) {
                Ok((params, report)) => {
                    log::info!(
                        "member {} trained in {:.1}s, final mse {:.3e}",
                        slot.spec.label(),
                        started.elapsed().as_secs_f64(),
                        report.final_train_mse().unwrap_or(f64::NAN)
                    );
                    Ok(MemberOutcome::Trained(TrainedMember {
                        slot,
                        seed,
                        params,
                        report,
                    }))
                }
                Err(e @ (MctError::Diverged { .. } | MctError::Numeric(_))) => {
                    log::warn!("member {} failed: {e}", slot.spec.label());
                    Ok(MemberOutcome::Failed {
                        slot,
                        seed,
                        error: e.to_string(),
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberPrediction {
    pub index: usize,
    pub label: String,
    pub kmeans_seed: u64,
    pub elbow: Option<ElbowCurve>,
    pub model: ClusterModel,
    pub curve: AccuracyCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub members: Vec<MemberPrediction>,
    /// Normalized inertia averaged over members; `None` when k was forced.
    pub elbow: Option<ElbowCurve>,
    pub k: usize,
    pub curve: AccuracyCurve,
    pub prediction: MctPrediction,
    pub analytic_mct: Option<f64>,
    pub empirical_mct: f64,
}

/// k-means on `km_train` features and the confusion sweep on `perf`, per
/// member, then the ensemble average and `T'`.
pub fn predict(
    cfg: &ExperimentConfig,
    dataset: &LandscapeDataset,
    split: &FourWaySplit,
    members: &[&TrainedMember],
) -> Result<PredictionResult> {
    predict_with_k(cfg, dataset, split, members, cfg.clustering.k)
}

fn predict_with_k(
    cfg: &ExperimentConfig,
    dataset: &LandscapeDataset,
    split: &FourWaySplit,
    members: &[&TrainedMember],
    forced_k: Option<usize>,
) -> Result<PredictionResult> {
    if members.is_empty() {
        return Err(MctError::Analysis("no trained members to predict with".into()));
    }
    if split.len() != dataset.len() {
        return Err(MctError::Shape {
            context: "split size vs dataset size",
            expected: dataset.len(),
            actual: split.len(),
        });
    }
    for m in members {
        if m.params.spec.input_dim != dataset.pixel_count() {
            return Err(MctError::Shape {
                context: "member input_dim vs dataset pixels",
                expected: dataset.pixel_count(),
                actual: m.params.spec.input_dim,
            });
        }
    }
    let km_rows = rows(dataset, &split.km_train);
    let perf_rows = rows(dataset, &split.perf);
    let perf_times: Vec<f64> = split.perf.iter().map(|&i| dataset.times[i]).collect();
    let opts = cfg.clustering.options();

    let features = members
        .par_iter()
        .map(|m| {
            let km = extract_features_many(&m.params, km_rows.iter().copied())?;
            let perf = extract_features_many(&m.params, perf_rows.iter().copied())?;
            Ok((km, perf))
        })
        .collect::<Result<Vec<_>>>()?;

    let elbows = match forced_k {
        Some(_) => None,
        None => Some(
            members
                .par_iter()
                .zip(&features)
                .map(|(m, (km, _))| {
                    elbow_scan(
                        km,
                        cfg.clustering.k_min,
                        cfg.clustering.k_max,
                        cfg.kmeans_seed(m.slot.index),
                        opts,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let mean_elbow = elbows.as_deref().map(average_elbow).transpose()?;
    let k = forced_k
        .or(mean_elbow.as_ref().map(|e| e.best_k))
        .expect("k forced or chosen");
    if k != 2 {
        return Err(MctError::Analysis(format!(
            "the confusion sweep needs k = 2 clusters but k = {k} was {}; rerun with k = 2 to force it",
            if forced_k.is_some() {
                "requested"
            } else {
                "selected by the elbow"
            }
        )));
    }

    let per_member = members
        .par_iter()
        .zip(&features)
        .enumerate()
        .map(|(i, (m, (km, perf)))| {
            let seed = cfg.kmeans_seed(m.slot.index);
            let model = kmeans_fit(km, k, seed, opts)?;
            let labels: Vec<u8> = kmeans_assign_all(&model, perf)?.into_iter().map(|l| l as u8).collect();
            let curve = sweep(&labels, &perf_times, &dataset.times)?;
            Ok(MemberPrediction {
                index: m.slot.index,
                label: m.slot.spec.label(),
                kmeans_seed: seed,
                elbow: elbows.as_ref().map(|e| e[i].clone()),
                model,
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let curves: Vec<AccuracyCurve> = per_member.iter().map(|m| m.curve.clone()).collect();
    let curve = ensemble_average(&curves)?;
    let prediction = predict_mct(&curve, cfg.confusion.window, cfg.confusion.smoothing)?;
    let analytic = match dataset.problem.model_id {
        ModelId::Lz => Some(analytic_mct(dataset.problem.delta)?),
        _ => None,
    };
    Ok(PredictionResult {
        members: per_member,
        elbow: mean_elbow,
        k,
        curve,
        prediction,
        analytic_mct: analytic,
        empirical_mct: empirical_mct(dataset)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsResult {
    pub map: ImportanceMap,
    pub threshold: f64,
    pub mask: Vec<bool>,
    pub selected: usize,
    pub rotation_jaccard: f64,
}

pub fn weights(
    cfg: &ExperimentConfig,
    dataset: &LandscapeDataset,
    members: &[&TrainedMember],
    threshold: f64,
) -> Result<WeightsResult> {
    let params: Vec<&NetworkParams> = members.iter().map(|m| &m.params).collect();
    let map = weight_importance(&params, cfg.weights.aggregation)?;
    if map.mean.len() != dataset.pixel_count() {
        return Err(MctError::Shape {
            context: "importance map vs dataset pixels",
            expected: dataset.pixel_count(),
            actual: map.mean.len(),
        });
    }
    let mask = select_pixels(&map, threshold)?;
    let selected = mask.iter().filter(|&&b| b).count();
    let rotation_jaccard = rotation_jaccard(&mask, &dataset.mesh)?;
    Ok(WeightsResult {
        map,
        threshold,
        mask,
        selected,
        rotation_jaccard,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongtimeResult {
    pub delta: f64,
    pub curve: AccuracyCurve,
    pub t_prime: f64,
    pub center_fidelity: Vec<f64>,
    pub comparison: PeriodComparison,
    pub trained: usize,
    pub failed: usize,
}

/// The standard-sweep config at `delta`, with `t_end` stretched to cover
/// at least one full fidelity period past the MCT.
pub fn config_for_delta(cfg: &ExperimentConfig, delta: f64) -> ExperimentConfig {
    let mut sub = cfg.clone();
    sub.model.delta = delta;
    sub.time.t_end = cfg.time.t_end.max(2.0 * PI / delta + 4.0);
    sub
}

/// Trains an ensemble on the standard sweep at `delta`, then clusters and
/// sweeps a long dataset with it and compares periods.
pub fn longtime_delta(cfg: &ExperimentConfig, delta: f64) -> Result<LongtimeResult> {
    if cfg.model.model_id != ModelId::Lz {
        return Err(MctError::param("the long-time study is defined for the LZ model"));
    }
    let sub = config_for_delta(cfg, delta);
    let ds = generate(&sub)?;
    let split = split_dataset(ds.len(), sub.split_seed())?;
    let outcomes = train_members(&sub, &ds, &split)?;
    let trained: Vec<&TrainedMember> = outcomes.iter().filter_map(MemberOutcome::trained).collect();
    if trained.is_empty() {
        return Err(MctError::Analysis(format!(
            "every member failed to train at delta = {delta}"
        )));
    }
    let mut result = longtime_analysis(cfg, delta, &trained)?;
    result.failed = outcomes.len() - trained.len();
    Ok(result)
}

/// The long-dataset half of [`longtime_delta`] with members trained
/// elsewhere.
pub fn longtime_analysis(cfg: &ExperimentConfig, delta: f64, members: &[&TrainedMember]) -> Result<LongtimeResult> {
    if cfg.model.model_id != ModelId::Lz {
        return Err(MctError::param("the long-time study is defined for the LZ model"));
    }
    let mut sub = config_for_delta(cfg, delta);
    let lt = &cfg.longtime;
    let scale = if lt.scale_with_delta { 1.0 / delta } else { 1.0 };
    sub.time = TimeConfig {
        t_start: cfg.time.t_start * scale,
        t_end: lt.t_end * scale,
        t_step: lt.t_step * scale,
    };
    let long = generate(&sub)?;
    let long_split = split_dataset(long.len(), sub.split_seed())?;
    let result = predict_with_k(&sub, &long, &long_split, members, Some(lt.k))?;
    let comparison = compare_periods(&long.problem, &result.curve.t_aux, &result.curve.accuracy)?;
    let center_fidelity = center_fidelity_curve(&long.problem, &result.curve.t_aux)?;
    Ok(LongtimeResult {
        delta,
        t_prime: result.prediction.t_prime,
        curve: result.curve,
        center_fidelity,
        comparison,
        trained: members.len(),
        failed: 0,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| MctError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| MctError::io(path, e))
}

struct StageLog {
    name: &'static str,
    run_dir: PathBuf,
    config_hash: String,
    started: Instant,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    notes: Vec<String>,
}

impl StageLog {
    fn new(name: &'static str, cfg: &ExperimentConfig, run_dir: &Path) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("master_seed".to_string(), cfg.master_seed);
        Self {
            name,
            run_dir: run_dir.to_path_buf(),
            config_hash: cfg.hash(),
            started: Instant::now(),
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn finish(self) -> Result<()> {
        let records = |paths: &[PathBuf]| -> Result<Vec<FileRecord>> {
            paths.iter().map(|p| file_record(&self.run_dir, p)).collect()
        };
        let record = StageRecord {
            name: self.name.to_string(),
            config_hash: self.config_hash.clone(),
            seeds: self.seeds.clone(),
            inputs: records(&self.inputs)?,
            outputs: records(&self.outputs)?,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            notes: self.notes.clone(),
        };
        RunManifest::record(&self.run_dir, record)
    }
}

/// Every successful stage records the config it ran with, so later stages
/// started without `--config` pick up earlier overrides.
fn write_config(cfg: &ExperimentConfig, run_dir: &Path, log: &mut StageLog) -> Result<()> {
    let path = run_dir.join(CONFIG_FILE);
    write_text(&path, &cfg.to_toml())?;
    log.outputs.push(path);
    Ok(())
}

/// `generate`: writes `dataset.mctl`.
pub fn stage_generate(cfg: &ExperimentConfig, run_dir: &Path) -> Result<LandscapeDataset> {
    cfg.validate()?;
    ensure_dir(run_dir)?;
    let mut log = StageLog::new("generate", cfg, run_dir);
    write_config(cfg, run_dir, &mut log)?;
    let ds = generate(cfg)?;
    let path = run_dir.join(DATASET_FILE);
    save_dataset(&ds, &path)?;
    log.outputs.push(path);
    log.notes
        .push(format!("{} landscapes of {} pixels", ds.len(), ds.pixel_count()));
    log.finish()?;
    Ok(ds)
}

/// `split`: reads the dataset, writes `split.txt`.
pub fn stage_split(cfg: &ExperimentConfig, run_dir: &Path) -> Result<FourWaySplit> {
    cfg.validate()?;
    let mut log = StageLog::new("split", cfg, run_dir);
    let ds_path = run_dir.join(DATASET_FILE);
    let ds = load_dataset(&ds_path)?;
    log.inputs.push(ds_path);
    let seed = cfg.split_seed();
    log.seeds.insert("split_seed".into(), seed);
    let split = split_dataset(ds.len(), seed)?;
    let path = run_dir.join(SPLIT_FILE);
    write_split_manifest(&split, &path)?;
    log.outputs.push(path);
    write_config(cfg, run_dir, &mut log)?;
    log.finish()?;
    Ok(split)
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    member_index: usize,
    label: String,
    seed: u64,
    status: String,
    final_train_loss: Option<f64>,
    final_train_mse: Option<f64>,
    final_val_loss: Option<f64>,
    error: String,
}

fn load_split_for(run_dir: &Path, ds: &LandscapeDataset) -> Result<(FourWaySplit, PathBuf)> {
    let path = run_dir.join(SPLIT_FILE);
    let split = read_split_manifest(&path)?;
    if split.len() != ds.len() {
        return Err(MctError::Format {
            offset: 0,
            message: format!(
                "{} covers {} samples but the dataset has {}",
                path.display(),
                split.len(),
                ds.len()
            ),
        });
    }
    Ok((split, path))
}

/// `train`: reads dataset and split, writes one network file per trained
/// member plus `train_summary.csv` into `networks/`. Fails only when every
/// member fails.
pub fn stage_train(cfg: &ExperimentConfig, run_dir: &Path) -> Result<Vec<MemberOutcome>> {
    cfg.validate()?;
    let mut log = StageLog::new("train", cfg, run_dir);
    let ds_path = run_dir.join(DATASET_FILE);
    let ds = load_dataset(&ds_path)?;
    let (split, split_path) = load_split_for(run_dir, &ds)?;
    log.inputs.extend([ds_path, split_path]);
    let outcomes = train_members(cfg, &ds, &split)?;

    let net_dir = run_dir.join(NETWORK_DIR);
    ensure_dir(&net_dir)?;
    let mut summary = csv::Writer::from_writer(Vec::new());
    for o in &outcomes {
        let row = match o {
            MemberOutcome::Trained(m) => {
                let path = net_dir.join(m.slot.file_name());
                let file = NetworkFile {
                    params: m.params.clone(),
                    config: crate::autoencoder::TrainConfig {
                        seed: m.seed,
                        ..cfg.train.clone()
                    },
                    report: m.report.clone(),
                };
                save_network(&file, &path)?;
                log.outputs.push(path);
                log.seeds.insert(format!("member_{}", m.slot.spec.label()), m.seed);
                SummaryRow {
                    member_index: m.slot.index,
                    label: m.slot.spec.label(),
                    seed: m.seed,
                    status: "trained".into(),
                    final_train_loss: m.report.train_loss.last().copied(),
                    final_train_mse: m.report.train_mse.last().copied(),
                    final_val_loss: m.report.val_loss.last().copied(),
                    error: String::new(),
                }
            }
            MemberOutcome::Failed { slot, seed, error } => {
                log.notes.push(format!("member {} failed: {error}", slot.spec.label()));
                log.seeds.insert(format!("member_{}", slot.spec.label()), *seed);
                SummaryRow {
                    member_index: slot.index,
                    label: slot.spec.label(),
                    seed: *seed,
                    status: "failed".into(),
                    final_train_loss: None,
                    final_train_mse: None,
                    final_val_loss: None,
                    error: error.clone(),
                }
            }
        };
        summary.serialize(row).expect("in-memory csv");
    }
    let path = net_dir.join(TRAIN_SUMMARY_FILE);
    write_text(
        &path,
        &String::from_utf8(summary.into_inner().expect("in-memory csv")).expect("utf8"),
    )?;
    log.outputs.push(path);
    let failed = outcomes.iter().filter(|o| o.trained().is_none()).count();
    write_config(cfg, run_dir, &mut log)?;
    log.finish()?;
    if failed == outcomes.len() {
        return Err(MctError::Analysis(format!("all {failed} members failed to train")));
    }
    Ok(outcomes)
}

/// Members recorded as failed in a `train_summary.csv`.
fn failed_members(net_dir: &Path) -> Result<Vec<usize>> {
    let path = net_dir.join(TRAIN_SUMMARY_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(&path).map_err(|e| MctError::Format {
        offset: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize::<SummaryRow>() {
        let row = row.map_err(|e| MctError::Format {
            offset: e.position().map_or(0, |p| p.byte()),
            message: format!("{}: {e}", path.display()),
        })?;
        if row.status != "trained" {
            out.push(row.member_index);
        }
    }
    Ok(out)
}

/// Loads the selected members from `net_dir`, skipping members the
/// training summary marks as failed. Any other missing file is an error.
pub fn load_members(
    cfg: &ExperimentConfig,
    net_dir: &Path,
    input_dim: usize,
) -> Result<(Vec<TrainedMember>, Vec<PathBuf>)> {
    let failed = failed_members(net_dir)?;
    let mut members = Vec::new();
    let mut paths = Vec::new();
    for slot in cfg.members_for(input_dim)? {
        if failed.contains(&slot.index) {
            log::warn!("skipping member {}: training failed", slot.spec.label());
            continue;
        }
        let path = net_dir.join(slot.file_name());
        let file = load_network(&path)?;
        if file.params.spec != slot.spec {
            return Err(MctError::Format {
                offset: 16,
                message: format!("{} holds {}, expected {}", path.display(), file.params.spec, slot.spec),
            });
        }
        members.push(TrainedMember {
            slot,
            seed: file.config.seed,
            params: file.params,
            report: file.report,
        });
        paths.push(path);
    }
    if members.is_empty() {
        return Err(MctError::Format {
            offset: 0,
            message: format!("no usable networks in {}", net_dir.display()),
        });
    }
    Ok((members, paths))
}

/// Where `predict` and `weights` read their inputs from.
#[derive(Debug, Clone, Default)]
pub struct StageInputs {
    /// Dataset to analyse; defaults to the run's own dataset. A different
    /// dataset (transfer mode) gets a split derived from the split seed.
    pub dataset: Option<PathBuf>,
    /// Network directory; defaults to the run's `networks/`.
    pub networks: Option<PathBuf>,
}

fn resolve_inputs(run_dir: &Path, inputs: &StageInputs) -> (PathBuf, PathBuf, bool) {
    let own = run_dir.join(DATASET_FILE);
    let ds = inputs.dataset.clone().unwrap_or_else(|| own.clone());
    let transfer = inputs.dataset.as_ref().is_some_and(|p| *p != own);
    let nets = inputs.networks.clone().unwrap_or_else(|| run_dir.join(NETWORK_DIR));
    (ds, nets, transfer)
}

#[derive(Debug, Serialize)]
struct PredictionDocument<'a> {
    t_prime: f64,
    window: [f64; 2],
    grid_step: f64,
    k: usize,
    k_forced: bool,
    n_members: usize,
    members: Vec<&'a str>,
    model_id: ModelId,
    delta: f64,
    analytic_mct: Option<f64>,
    empirical_mct: f64,
    dataset: String,
    transfer: bool,
    seeds: BTreeMap<String, u64>,
    elbow: Option<&'a ElbowCurve>,
    cluster_models: Vec<(&'a str, &'a ClusterModel)>,
}

fn elbow_csv(result: &PredictionResult) -> Option<String> {
    let mean = result.elbow.as_ref()?;
    let mut s = String::from("k,mean_normalized_inertia");
    for m in &result.members {
        s.push_str(&format!(",inertia_{}", m.label));
    }
    s.push('\n');
    for (i, k) in mean.ks.iter().enumerate() {
        s.push_str(&format!("{k},{}", mean.inertia[i]));
        for m in &result.members {
            s.push_str(&format!(",{}", m.elbow.as_ref().map_or(f64::NAN, |e| e.inertia[i])));
        }
        s.push('\n');
    }
    Some(s)
}

fn member_curves_csv(result: &PredictionResult) -> String {
    let mut s = String::from("t_aux");
    for m in &result.members {
        s.push_str(&format!(",{}", m.label));
    }
    s.push('\n');
    for (i, t) in result.curve.t_aux.iter().enumerate() {
        s.push_str(&t.to_string());
        for m in &result.members {
            s.push_str(&format!(",{}", m.curve.accuracy[i]));
        }
        s.push('\n');
    }
    s
}

/// `predict`: clusters, sweeps and averages; writes the accuracy curve,
/// per-member curves, elbow table, feature trajectories and
/// `prediction.json`.
pub fn stage_predict(cfg: &ExperimentConfig, run_dir: &Path, inputs: &StageInputs) -> Result<PredictionResult> {
    cfg.validate()?;
    ensure_dir(run_dir)?;
    let mut log = StageLog::new("predict", cfg, run_dir);
    let (ds_path, net_dir, transfer) = resolve_inputs(run_dir, inputs);
    let ds = load_dataset(&ds_path)?;
    log.inputs.push(ds_path.clone());
    let split = if transfer || !run_dir.join(SPLIT_FILE).exists() {
        log.notes.push("split derived from split seed".into());
        split_dataset(ds.len(), cfg.split_seed())?
    } else {
        let (split, path) = load_split_for(run_dir, &ds)?;
        log.inputs.push(path);
        split
    };
    log.seeds.insert("split_seed".into(), cfg.split_seed());
    let (members, paths) = load_members(cfg, &net_dir, ds.pixel_count())?;
    log.inputs.extend(paths);
    let refs: Vec<&TrainedMember> = members.iter().collect();
    let result = predict(cfg, &ds, &split, &refs)?;
    if cfg.clustering.k.is_some() {
        log.notes.push(format!("k forced to {}; elbow scan skipped", result.k));
    } else {
        log.notes
            .push(format!("k = {} selected by the averaged elbow", result.k));
    }

    let path = run_dir.join(ACCURACY_FILE);
    write_text(&path, &result.curve.to_csv())?;
    log.outputs.push(path);
    let path = run_dir.join(MEMBER_CURVES_FILE);
    write_text(&path, &member_curves_csv(&result))?;
    log.outputs.push(path);
    if let Some(text) = elbow_csv(&result) {
        let path = run_dir.join(ELBOW_FILE);
        write_text(&path, &text)?;
        log.outputs.push(path);
    }

    let mut transitions = String::from("member,transition_time\n");
    for (m, p) in members.iter().zip(&result.members) {
        let traj = feature_trajectories(&m.params, &p.model, &ds)?;
        let t = transition_time(&traj).map_or_else(|_| "nan".to_string(), |t| t.to_string());
        transitions.push_str(&format!("{},{t}\n", p.label));
        let path = run_dir.join(FEATURES_DIR).join(format!("features_{}.csv", p.label));
        write_text(&path, &trajectories_csv(&traj))?;
        log.outputs.push(path);
    }
    let path = run_dir.join(TRANSITIONS_FILE);
    write_text(&path, &transitions)?;
    log.outputs.push(path);

    let mut seeds = BTreeMap::new();
    seeds.insert("master_seed".to_string(), cfg.master_seed);
    seeds.insert("split_seed".to_string(), cfg.split_seed());
    for p in &result.members {
        seeds.insert(format!("kmeans_{}", p.label), p.kmeans_seed);
        log.seeds.insert(format!("kmeans_{}", p.label), p.kmeans_seed);
    }
    let t = &result.curve.t_aux;
    let doc = PredictionDocument {
        t_prime: result.prediction.t_prime,
        window: result.prediction.window,
        grid_step: if t.len() > 1 {
            (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64
        } else {
            0.0
        },
        k: result.k,
        k_forced: cfg.clustering.k.is_some(),
        n_members: result.members.len(),
        members: result.members.iter().map(|m| m.label.as_str()).collect(),
        model_id: ds.problem.model_id,
        delta: ds.problem.delta,
        analytic_mct: result.analytic_mct,
        empirical_mct: result.empirical_mct,
        dataset: ds_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        transfer,
        seeds,
        elbow: result.elbow.as_ref(),
        cluster_models: result.members.iter().map(|m| (m.label.as_str(), &m.model)).collect(),
    };
    let path = run_dir.join(PREDICTION_FILE);
    write_text(&path, &serde_json::to_string_pretty(&doc).expect("document serializes"))?;
    log.outputs.push(path);
    write_config(cfg, run_dir, &mut log)?;
    log.finish()?;
    Ok(result)
}

fn member_maps_csv(result: &WeightsResult, members: &[TrainedMember]) -> String {
    let mut s = String::from("pixel_index");
    for m in members {
        s.push_str(&format!(",{}", m.slot.spec.label()));
    }
    s.push('\n');
    for j in 0..result.map.mean.len() {
        s.push_str(&j.to_string());
        for map in &result.map.per_architecture {
            s.push_str(&format!(",{}", map[j]));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Serialize)]
struct WeightsSummary {
    threshold: f64,
    aggregation: crate::introspection::NodeAggregation,
    selected_pixels: usize,
    total_pixels: usize,
    rotation_jaccard: f64,
    map_max: f64,
    overlays: Vec<(f64, String)>,
    members: Vec<String>,
}

/// `weights`: importance map, threshold mask and overlays.
pub fn stage_weights(cfg: &ExperimentConfig, run_dir: &Path, inputs: &StageInputs) -> Result<WeightsResult> {
    cfg.validate()?;
    ensure_dir(run_dir)?;
    let mut log = StageLog::new("weights", cfg, run_dir);
    let (ds_path, net_dir, _) = resolve_inputs(run_dir, inputs);
    let ds = load_dataset(&ds_path)?;
    log.inputs.push(ds_path);
    let (members, paths) = load_members(cfg, &net_dir, ds.pixel_count())?;
    log.inputs.extend(paths);
    let refs: Vec<&TrainedMember> = members.iter().collect();
    let threshold = cfg.threshold();
    let result = weights(cfg, &ds, &refs, threshold)?;

    let path = run_dir.join(WEIGHTS_FILE);
    write_text(&path, &importance_csv(&result.map, &ds.mesh)?)?;
    log.outputs.push(path);
    let path = run_dir.join(WEIGHTS_MEMBERS_FILE);
    write_text(&path, &member_maps_csv(&result, &members))?;
    log.outputs.push(path);

    let mut overlays = Vec::new();
    for &t in &cfg.weights.overlay_times {
        let nearest = ds
            .landscapes
            .iter()
            .min_by(|a, b| (a.total_time - t).abs().total_cmp(&(b.total_time - t).abs()))
            .expect("non-empty dataset");
        let name = format!("mask_T{}.csv", nearest.total_time);
        let path = run_dir.join(&name);
        write_text(&path, &overlay_mask(nearest, &result.mask)?)?;
        log.outputs.push(path);
        overlays.push((nearest.total_time, name));
    }
    let summary = WeightsSummary {
        threshold,
        aggregation: cfg.weights.aggregation,
        selected_pixels: result.selected,
        total_pixels: result.mask.len(),
        rotation_jaccard: result.rotation_jaccard,
        map_max: result.map.mean.iter().cloned().fold(0.0, f64::max),
        overlays,
        members: members.iter().map(|m| m.slot.spec.label()).collect(),
    };
    let path = run_dir.join(WEIGHTS_SUMMARY_FILE);
    write_text(
        &path,
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    log.outputs.push(path);
    write_config(cfg, run_dir, &mut log)?;
    log.finish()?;
    Ok(result)
}

fn longtime_curve_csv(r: &LongtimeResult) -> String {
    let mut s = String::from("t_aux,accuracy_mean,accuracy_std,center_fidelity\n");
    for i in 0..r.curve.len() {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.curve.t_aux[i], r.curve.accuracy[i], r.curve.accuracy_std[i], r.center_fidelity[i]
        ));
    }
    s
}

/// `longtime`: one [`longtime_delta`] run per configured delta; writes the
/// curves and `longtime_periods.csv`.
pub fn stage_longtime(cfg: &ExperimentConfig, run_dir: &Path) -> Result<Vec<LongtimeResult>> {
    cfg.validate()?;
    ensure_dir(run_dir)?;
    let mut log = StageLog::new("longtime", cfg, run_dir);
    log.seeds.insert("split_seed".into(), cfg.split_seed());
    let mut results = Vec::new();
    for &delta in &cfg.longtime.deltas {
        let r = longtime_delta(cfg, delta)?;
        let path = run_dir.join(LONGTIME_DIR).join(format!("curve_delta{delta}.csv"));
        write_text(&path, &longtime_curve_csv(&r))?;
        log.outputs.push(path);
        log.notes.push(format!(
            "delta {delta}: {} members trained, {} failed, T' = {}",
            r.trained, r.failed, r.t_prime
        ));
        results.push(r);
    }
    let rows: Vec<PeriodComparison> = results.iter().map(|r| r.comparison.clone()).collect();
    let path = run_dir.join(LONGTIME_FILE);
    write_text(&path, &periods_csv(&rows))?;
    log.outputs.push(path);
    write_config(cfg, run_dir, &mut log)?;
    log.finish()?;
    Ok(results)
}
