use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{ensemble_specs, ArchitectureSpec, TrainConfig};
use crate::clustering::KMeansOptions;
use crate::confusion::SearchWindow;
use crate::dynamics::{build_problem, ControlProblem, ModelId};
use crate::error::{MctError, Result};
use crate::introspection::NodeAggregation;
use crate::landscape::MeshSpec;
use crate::rng::{derive_seed, stage};

/// Environment variable that replaces `master_seed` when set.
pub const SEED_ENV: &str = "MCT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: ModelId,
    pub delta: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    /// Overrides of the model's default transfer states.
    pub initial_state: Option<usize>,
    pub target_state: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model_id: ModelId::Lz,
            delta: 1.0,
            delta_a: 1.0,
            delta_b: 1.0,
            initial_state: None,
            target_state: None,
        }
    }
}

impl ModelConfig {
    pub fn problem(&self) -> Result<ControlProblem> {
        let p = build_problem(self.model_id, self.delta, self.delta_a, self.delta_b)?;
        match (self.initial_state, self.target_state) {
            (None, None) => Ok(p),
            (i, f) => {
                let dim = p.dim();
                let default_i = (0..dim).find(|&k| p.initial_state[k].norm() > 0.5).unwrap_or(0);
                let default_f = (0..dim).find(|&k| p.target_state[k].norm() > 0.5).unwrap_or(dim - 1);
                p.with_transfer(i.unwrap_or(default_i), f.unwrap_or(default_f))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t_start: f64,
    pub t_end: f64,
    pub t_step: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_start: 0.01,
            t_end: 10.0,
            t_step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub hidden: Vec<usize>,
    pub features: Vec<usize>,
    /// Labels such as `190x40`; empty selects every member.
    pub members: Vec<String>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            hidden: (100..=190).rev().step_by(10).collect(),
            features: (10..=40).rev().step_by(10).collect(),
            members: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Fixed k; skips the elbow scan.
    pub k: Option<usize>,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let o = KMeansOptions::default();
        Self {
            k_min: 1,
            k_max: 8,
            k: None,
            n_init: o.n_init,
            max_iter: o.max_iter,
            tol: o.tol,
        }
    }
}

impl ClusterConfig {
    pub fn options(&self) -> KMeansOptions {
        KMeansOptions {
            n_init: self.n_init,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ConfusionConfig {
    pub window: SearchWindow,
    /// Odd moving-average window applied before the argmax; off by default.
    pub smoothing: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    /// Defaults to 0.7 for LZ and 0.5 for the generalized model.
    pub threshold: Option<f64>,
    pub aggregation: NodeAggregation,
    /// Total times whose landscapes get a mask overlay (nearest sample).
    pub overlay_times: Vec<f64>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            threshold: None,
            aggregation: NodeAggregation::Mean,
            overlay_times: vec![4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongtimeConfig {
    pub deltas: Vec<f64>,
    pub t_end: f64,
    pub t_step: f64,
    /// Divide `t_end` and `t_step` by delta so every delta covers the same
    /// number of oscillations with the same number of landscapes.
    pub scale_with_delta: bool,
    pub k: usize,
}

impl Default for LongtimeConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.5, 0.7, 1.0],
            t_end: 49.9,
            t_step: 0.01,
            scale_with_delta: true,
            k: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Split seed; derived from `master_seed` when absent.
    pub split_seed: Option<u64>,
    pub model: ModelConfig,
    pub mesh: MeshSpec,
    pub time: TimeConfig,
    pub ensemble: EnsembleConfig,
    pub train: TrainConfig,
    pub clustering: ClusterConfig,
    pub confusion: ConfusionConfig,
    pub weights: WeightsConfig,
    pub longtime: LongtimeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 7,
            split_seed: None,
            model: ModelConfig::default(),
            mesh: MeshSpec::default_two_segment(),
            time: TimeConfig::default(),
            ensemble: EnsembleConfig::default(),
            train: TrainConfig::default(),
            clustering: ClusterConfig::default(),
            confusion: ConfusionConfig::default(),
            weights: WeightsConfig::default(),
            longtime: LongtimeConfig::default(),
        }
    }
}

/// A member of the ensemble with its position in the full grid, which is
/// what its seeds derive from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemberSlot {
    pub index: usize,
    pub spec: ArchitectureSpec,
}

impl MemberSlot {
    pub fn file_name(&self) -> String {
        format!("member_{:02}_{}.mctn", self.index, self.spec.label())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MctError::param(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MctError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `MCT_SEED` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.master_seed = v
                .trim()
                .parse()
                .map_err(|_| MctError::param(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.problem()?;
        self.mesh.validate()?;
        let t = &self.time;
        if !(t.t_step > 0.0) || !(t.t_start > 0.0) || !(t.t_end >= t.t_start) {
            return Err(MctError::param(format!(
                "time sweep needs 0 < t_start <= t_end and t_step > 0, got {}..{} step {}",
                t.t_start, t.t_end, t.t_step
            )));
        }
        self.train.validate()?;
        if let Some(th) = self.weights.threshold {
            if !(0.0..=1.0).contains(&th) {
                return Err(MctError::param(format!("threshold must be in [0, 1], got {th}")));
            }
        }
        if self.clustering.k == Some(0) {
            return Err(MctError::param("k must be at least 1"));
        }
        self.members()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
            .unwrap_or_else(|| derive_seed(self.master_seed, stage::SPLIT, 0))
    }

    pub fn member_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, stage::MEMBER, index as u64)
    }

    pub fn kmeans_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, stage::KMEANS, index as u64)
    }

    pub fn threshold(&self) -> f64 {
        self.weights.threshold.unwrap_or(match self.model.model_id {
            ModelId::Lz => 0.7,
            ModelId::GeneralizedLz3 => 0.5,
        })
    }

    /// Selected members of the hidden x feature grid (hidden outer) for
    /// the configured mesh.
    pub fn members(&self) -> Result<Vec<MemberSlot>> {
        self.members_for(self.mesh.pixel_count())
    }

    pub fn members_for(&self, input_dim: usize) -> Result<Vec<MemberSlot>> {
        let mut all = Vec::new();
        for &h in &self.ensemble.hidden {
            for &f in &self.ensemble.features {
                let spec = ArchitectureSpec::new(input_dim, h, f)?;
                all.push(MemberSlot { index: all.len(), spec });
            }
        }
        if all.is_empty() {
            return Err(MctError::param("ensemble grid is empty"));
        }
        if self.ensemble.members.is_empty() {
            return Ok(all);
        }
        let mut picked = Vec::new();
        for label in &self.ensemble.members {
            let slot = all
                .iter()
                .find(|s| s.spec.label() == *label)
                .ok_or_else(|| MctError::param(format!("no ensemble member labelled {label:?}")))?;
            if !picked.contains(slot) {
                picked.push(*slot);
            }
        }
        picked.sort_by_key(|s| s.index);
        Ok(picked)
    }
}

/// The ensemble grid used by default, for callers that only need specs.
pub fn default_members(input_dim: usize) -> Vec<MemberSlot> {
    ensemble_specs(input_dim)
        .into_iter()
        .enumerate()
        .map(|(index, spec)| MemberSlot { index, spec })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_forty_members() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let m = cfg.members().unwrap();
        assert_eq!(m.len(), 40);
        assert_eq!(m, default_members(10_000));
        assert_eq!(m[0].file_name(), "member_00_190x40.mctn");
    }

    #[test]
    fn toml_roundtrip_and_partial_documents() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml("master_seed = 3\n[model]\ndelta = 0.7\n").unwrap();
        assert_eq!(partial.master_seed, 3);
        assert_eq!(partial.model.delta, 0.7);
        assert_eq!(partial.time, TimeConfig::default());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn member_filter() {
        let mut cfg = ExperimentConfig::default();
        cfg.ensemble.members = vec!["100x10".into(), "190x40".into()];
        let m = cfg.members().unwrap();
        assert_eq!(m.iter().map(|s| s.index).collect::<Vec<_>>(), vec![0, 39]);
        cfg.ensemble.members = vec!["191x40".into()];
        assert!(cfg.members().is_err());
    }

    #[test]
    fn seeds_depend_on_master_and_index() {
        let mut cfg = ExperimentConfig::default();
        let a = cfg.member_seed(3);
        assert_ne!(a, cfg.member_seed(4));
        assert_ne!(a, cfg.kmeans_seed(3));
        cfg.master_seed += 1;
        assert_ne!(a, cfg.member_seed(3));
        let h = cfg.hash();
        assert_eq!(h.len(), 64);
        assert_eq!(h, cfg.clone().hash());
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.time.t_step = 0.0;
        assert!(matches!(cfg.validate(), Err(MctError::Parameter(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.weights.threshold = Some(1.01);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.model.model_id = ModelId::GeneralizedLz3;
        assert_eq!(cfg.threshold(), 0.5);
        cfg.model.target_state = Some(1);
        assert_eq!(cfg.model.problem().unwrap().target_state[1].re, 1.0);
    }
}
