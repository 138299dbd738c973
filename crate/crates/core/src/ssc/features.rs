use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ImuSample;

/// Number of time-domain feature channels.
pub const TIME_CHANNELS: usize = 4;

/// Sliding-window configuration of the feature generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SscWindow", into = "SscWindow")]
pub struct SscConfig {
    /// Window length in seconds.
    pub window_duration: f64,
    /// IMU sampling rate in Hz.
    pub sample_rate: f64,
    /// Samples per window, `round(window_duration * sample_rate)`.
    pub n_samples: usize,
}

/// Serialized form: the sample count is derived.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SscWindow {
    window_duration: f64,
    sample_rate: f64,
}

impl TryFrom<SscWindow> for SscConfig {
    type Error = Error;

    fn try_from(w: SscWindow) -> Result<Self> {
        Self::new(w.window_duration, w.sample_rate)
    }
}

impl From<SscConfig> for SscWindow {
    fn from(c: SscConfig) -> Self {
        Self {
            window_duration: c.window_duration,
            sample_rate: c.sample_rate,
        }
    }
}

impl Default for SscConfig {
    fn default() -> Self {
        Self::new(0.170, 100.0).expect("default window is valid")
    }
}

impl SscConfig {
    pub fn new(window_duration: f64, sample_rate: f64) -> Result<Self> {
        if !(window_duration > 0.0 && sample_rate > 0.0) {
            return Err(Error::Config(format!(
                "window {window_duration} s at {sample_rate} Hz"
            )));
        }
        let n_samples = (window_duration * sample_rate).round() as usize;
        let cfg = Self {
            window_duration,
            sample_rate,
            n_samples,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = (self.window_duration * self.sample_rate).round() as usize;
        if self.n_samples != expected {
            return Err(Error::Config(format!(
                "n_samples {} does not match round({} * {}) = {expected}",
                self.n_samples, self.window_duration, self.sample_rate
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::Config("window needs at least two samples".into()));
        }
        Ok(())
    }

    /// Frequency bins per channel, `floor(N / 2)`.
    pub fn n_bins(&self) -> usize {
        self.n_samples / 2
    }

    /// Total feature count, `4 + 4 * floor(N / 2)`.
    pub fn n_features(&self) -> usize {
        TIME_CHANNELS * (1 + self.n_bins())
    }
}

/// Squared kinetic-energy proxies of one sample:
/// `[ax² + ay², az², roll_rate² + pitch_rate², yaw_rate²]`.
pub fn time_features(s: &ImuSample) -> [f64; TIME_CHANNELS] {
    [
        s.ax * s.ax + s.ay * s.ay,
        s.az * s.az,
        s.roll_rate * s.roll_rate + s.pitch_rate * s.pitch_rate,
        s.yaw_rate * s.yaw_rate,
    ]
}

/// Frequencies (Hz) of the DFT bins used as features: `Fs/N, 2·Fs/N, …,
/// floor(N/2)·Fs/N`. The DC bin is not part of the grid.
pub fn dft_frequency_grid(cfg: &SscConfig) -> Vec<f64> {
    let step = cfg.sample_rate / cfg.n_samples as f64;
    (1..=cfg.n_bins()).map(|k| k as f64 * step).collect()
}

/// Precomputed twiddle factors for the short real DFT over one window.
#[derive(Debug, Clone)]
pub struct DftPlan {
    n: usize,
    bins: usize,
    // cos/sin tables indexed [bin][sample]
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl DftPlan {
    pub fn new(n: usize) -> Self {
        let bins = n / 2;
        let mut cos = Vec::with_capacity(bins * n);
        let mut sin = Vec::with_capacity(bins * n);
        for k in 1..=bins {
            for i in 0..n {
                // reduce k*i mod n first so the phase stays exact for long windows
                let phase = TAU * ((k * i) % n) as f64 / n as f64;
                cos.push(phase.cos());
                sin.push(phase.sin());
            }
        }
        Self { n, bins, cos, sin }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Single-sided amplitudes `(2/N)·|X_k|` for `k = 1..=floor(N/2)`,
    /// written into `out`.
    pub fn amplitudes_into(&self, window: &[f64], out: &mut [f64]) -> Result<()> {
        if window.len() != self.n {
            return Err(Error::WindowLength {
                expected: self.n,
                actual: window.len(),
            });
        }
        let scale = 2.0 / self.n as f64;
        for (k, o) in out.iter_mut().take(self.bins).enumerate() {
            let row = k * self.n;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &w) in window.iter().enumerate() {
                re += w * self.cos[row + i];
                im -= w * self.sin[row + i];
            }
            *o = scale * re.hypot(im);
        }
        Ok(())
    }
}

/// Single-sided amplitude spectrum of a window of exactly `n` values,
/// excluding the DC bin.
pub fn single_sided_amplitudes(window: &[f64], n: usize) -> Result<Vec<f64>> {
    let plan = DftPlan::new(n);
    let mut out = vec![0.0; plan.bins()];
    plan.amplitudes_into(window, &mut out)?;
    Ok(out)
}

/// The feature vector of one IMU sample.
///
/// Layout: the four time features followed by `floor(N/2)` amplitudes for
/// each time channel in channel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SscFeatureVector {
    /// Timestamp of the newest sample in the window.
    pub t: f64,
    pub values: Vec<f64>,
}

impl SscFeatureVector {
    pub fn time_features(&self) -> &[f64] {
        &self.values[..TIME_CHANNELS]
    }

    pub fn freq_features(&self) -> &[f64] {
        &self.values[TIME_CHANNELS..]
    }

    /// Amplitudes of one time channel (0..4).
    pub fn channel_spectrum(&self, channel: usize) -> &[f64] {
        let bins = (self.values.len() - TIME_CHANNELS) / TIME_CHANNELS;
        let start = TIME_CHANNELS + channel * bins;
        &self.values[start..start + bins]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Streaming sliding-window feature generator. The window advances by one
/// sample per call; until the window is full the amplitudes are zero.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: SscConfig,
    plan: DftPlan,
    history: [VecDeque<f64>; TIME_CHANNELS],
    scratch: Vec<f64>,
}

impl FeatureExtractor {
    pub fn new(cfg: SscConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_samples;
        Ok(Self {
            cfg,
            plan: DftPlan::new(n),
            history: std::array::from_fn(|_| VecDeque::with_capacity(n)),
            scratch: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &SscConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.history.iter_mut().for_each(VecDeque::clear);
    }

    pub fn push(&mut self, s: &ImuSample) -> SscFeatureVector {
        let mut values = vec![0.0; self.cfg.n_features()];
        self.push_into(s, &mut values);
        SscFeatureVector { t: s.t, values }
    }

    /// Like [`push`](Self::push) but writes into a caller-provided buffer of
    /// length `n_features()`.
    pub fn push_into(&mut self, s: &ImuSample, values: &mut [f64]) {
        let n = self.cfg.n_samples;
        let bins = self.plan.bins();
        let tf = time_features(s);
        values[..TIME_CHANNELS].copy_from_slice(&tf);
        for (ch, &f) in tf.iter().enumerate() {
            let h = &mut self.history[ch];
            if h.len() == n {
                h.pop_front();
            }
            h.push_back(f);
            let out = &mut values[TIME_CHANNELS + ch * bins..TIME_CHANNELS + (ch + 1) * bins];
            if h.len() < n {
                out.fill(0.0);
            } else {
                for (dst, src) in self.scratch.iter_mut().zip(h.iter()) {
                    *dst = *src;
                }
                self.plan
                    .amplitudes_into(&self.scratch, out)
                    .expect("window length matches plan");
            }
        }
    }
}

/// One feature vector per input sample.
pub fn feature_stream(samples: &[ImuSample], cfg: &SscConfig) -> Result<Vec<SscFeatureVector>> {
    let mut fx = FeatureExtractor::new(*cfg)?;
    Ok(samples.iter().map(|s| fx.push(s)).collect())
}
