//! IMU-only standstill classifier.
//!
//! Each sample yields 36 features: four squared kinetic-energy proxies plus
//! the single-sided DFT amplitudes of those proxies over a 17-sample sliding
//! window. A bagged decision-tree forest maps the features to
//! standstill/motion.

mod features;
mod forest;

pub use features::{
    dft_frequency_grid, feature_stream, single_sided_amplitudes, time_features, DftPlan,
    FeatureExtractor, SscConfig, SscFeatureVector, TIME_CHANNELS,
};
pub use forest::{
    train, Classification, DecisionTree, ForestParams, LabelledSample, Node, RandomForestModel,
};

use crate::error::{Error, Result};
use crate::sim::GroundTruthTrace;
use crate::types::{ImuSample, MotionState};

/// Ground-truth label of each sample timestamp: the motion state at the
/// newest sample of the window, so drive-off and stop windows carry the state
/// the vehicle is going into.
pub fn label_stream(truth: &GroundTruthTrace, timestamps: &[f64]) -> Result<Vec<MotionState>> {
    timestamps
        .iter()
        .map(|&t| truth.motion_state_at(t))
        .collect()
}

/// Pairs a feature stream with ground-truth labels.
pub fn labelled_samples(
    samples: &[ImuSample],
    truth: &GroundTruthTrace,
    cfg: &SscConfig,
) -> Result<Vec<LabelledSample>> {
    let features = feature_stream(samples, cfg)?;
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let labels = label_stream(truth, &times)?;
    Ok(features
        .into_iter()
        .zip(labels)
        .map(|(features, label)| LabelledSample { features, label })
        .collect())
}

/// Trains a forest on IMU samples with per-sample labels.
pub fn train_on_imu(
    samples: &[ImuSample],
    labels: &[MotionState],
    cfg: &SscConfig,
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForestModel> {
    if samples.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} samples but {} labels",
            samples.len(),
            labels.len()
        )));
    }
    let data: Vec<LabelledSample> = feature_stream(samples, cfg)?
        .into_iter()
        .zip(labels)
        .map(|(features, &label)| LabelledSample { features, label })
        .collect();
    train(&data, params, seed)
}

/// Streaming classifier: feature extraction plus forest vote per sample.
#[derive(Debug, Clone)]
pub struct StandstillClassifier {
    extractor: FeatureExtractor,
    model: RandomForestModel,
    buffer: Vec<f64>,
}

impl StandstillClassifier {
    pub fn new(model: RandomForestModel, cfg: SscConfig) -> Result<Self> {
        if model.n_features != cfg.n_features() {
            return Err(Error::Config(format!(
                "model expects {} features, window produces {}",
                model.n_features,
                cfg.n_features()
            )));
        }
        Ok(Self {
            extractor: FeatureExtractor::new(cfg)?,
            buffer: vec![0.0; cfg.n_features()],
            model,
        })
    }

    pub fn model(&self) -> &RandomForestModel {
        &self.model
    }

    pub fn push(&mut self, s: &ImuSample) -> Classification {
        self.extractor.push_into(s, &mut self.buffer);
        self.model.classify(&self.buffer)
    }

    pub fn reset(&mut self) {
        self.extractor.reset();
    }
}

/// Confusion counts with standstill as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Confusion {
    /// Standstill detected as standstill.
    pub true_positive: usize,
    /// Standstill detected as motion.
    pub false_negative: usize,
    /// Motion detected as standstill.
    pub false_positive: usize,
    /// Motion detected as motion.
    pub true_negative: usize,
}

impl Confusion {
    pub fn from_pairs(
        truth: impl IntoIterator<Item = MotionState>,
        detected: impl IntoIterator<Item = MotionState>,
    ) -> Self {
        let mut c = Self::default();
        for (t, d) in truth.into_iter().zip(detected) {
            c.add(t, d);
        }
        c
    }

    pub fn add(&mut self, truth: MotionState, detected: MotionState) {
        use MotionState::*;
        match (truth, detected) {
            (Standstill, Standstill) => self.true_positive += 1,
            (Standstill, Motion) => self.false_negative += 1,
            (Motion, Standstill) => self.false_positive += 1,
            (Motion, Motion) => self.true_negative += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_negative + self.false_positive + self.true_negative
    }
}
