//! First-order (PT1-like) damping of reported measurement standard deviations.
//!
//! Receivers under multipath tend to report optimistic σ values that drop
//! abruptly. The damped value `c` follows any degradation immediately but
//! relaxes towards an improved σ only as the improvement persists:
//!
//! ```text
//! T' = 0                     if c < σ,  else T + Δτ
//! c' = σ                     if c < σ,  else c·e^(−T'/T_sat) + σ·(1 − e^(−T'/T_sat))
//! ```

use serde::{Deserialize, Serialize};

use super::Channel;

/// Default saturation time in seconds.
pub const DEFAULT_T_SAT: f64 = 1.5;

/// Damping state of a single measurement channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaDamperState {
    /// Current damped σ.
    pub c: f64,
    /// Accumulated improving time in seconds.
    pub improving_time: f64,
    /// Saturation parameter in seconds.
    pub t_sat: f64,
}

impl SigmaDamperState {
    pub fn new(sigma: f64, t_sat: f64) -> Self {
        Self {
            c: sigma,
            improving_time: 0.0,
            t_sat,
        }
    }

    /// Blend weights `(w_c, w_σ)` applied to the previous damped value and the
    /// incoming σ after `t` seconds of continued improvement.
    pub fn blend_weights(t: f64, t_sat: f64) -> (f64, f64) {
        let w = (-t / t_sat).exp();
        (w, 1.0 - w)
    }
}

/// Advances one channel by `dt` seconds with a newly reported σ.
pub fn damp_sigma(d: SigmaDamperState, sigma_new: f64, dt: f64) -> SigmaDamperState {
    if d.c < sigma_new {
        return SigmaDamperState {
            c: sigma_new,
            improving_time: 0.0,
            t_sat: d.t_sat,
        };
    }
    let t = d.improving_time + dt.max(0.0);
    let (wc, ws) = SigmaDamperState::blend_weights(t, d.t_sat);
    SigmaDamperState {
        // the blend never undershoots σ; max() absorbs rounding
        c: (d.c * wc + sigma_new * ws).max(sigma_new),
        improving_time: t,
        t_sat: d.t_sat,
    }
}

/// Per-channel dampers for the whole measurement vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaDamper {
    t_sat: f64,
    channels: [Option<(f64, SigmaDamperState)>; Channel::COUNT],
}

impl SigmaDamper {
    pub fn new(t_sat: f64) -> Self {
        Self {
            t_sat,
            channels: [None; Channel::COUNT],
        }
    }

    /// Feeds a reported σ observed at time `t` and returns the damped σ.
    pub fn filter(&mut self, channel: Channel, t: f64, sigma: f64) -> f64 {
        let slot = &mut self.channels[channel.index()];
        let next = match *slot {
            None => SigmaDamperState::new(sigma, self.t_sat),
            Some((t_prev, d)) => damp_sigma(d, sigma, t - t_prev),
        };
        *slot = Some((t, next));
        next.c
    }

    pub fn state(&self, channel: Channel) -> Option<SigmaDamperState> {
        self.channels[channel.index()].map(|(_, d)| d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn degradation_is_tracked_instantly() {
        let d = SigmaDamperState {
            c: 0.1,
            improving_time: 2.0,
            t_sat: 1.5,
        };
        let out = damp_sigma(d, 2.0, 0.01);
        assert_eq!(out.c, 2.0);
        assert_eq!(out.improving_time, 0.0);
    }

    #[test]
    fn improvement_after_three_seconds() {
        let d = SigmaDamperState {
            c: 2.0,
            improving_time: 2.9,
            t_sat: 1.5,
        };
        let out = damp_sigma(d, 0.5, 0.1);
        assert_abs_diff_eq!(out.improving_time, 3.0, epsilon = 1e-12);
        let e = (-2.0f64).exp();
        assert_abs_diff_eq!(out.c, 2.0 * e + 0.5 * (1.0 - e), epsilon = 1e-12);
        assert_abs_diff_eq!(out.c, 0.7030, epsilon = 5e-5);
    }

    #[test]
    fn fixed_point() {
        let mut d = SigmaDamperState::new(1.0, 1.5);
        for dt in [0.01, 0.5, 3.0] {
            d = damp_sigma(d, 1.0, dt);
            assert_eq!(d.c, 1.0);
        }
    }

    #[test]
    fn ratio_rounds_to_paper_values() {
        let (wc, ws) = SigmaDamperState::blend_weights(3.0, 1.5);
        assert_eq!((wc * 100.0).round() / 100.0, 0.14);
        assert_eq!((ws * 100.0).round() / 100.0, 0.86);
    }

    #[test]
    fn channel_bank_initialises_on_first_report() {
        let mut bank = SigmaDamper::new(1.5);
        assert_eq!(bank.filter(Channel::X, 0.0, 3.0), 3.0);
        let c = bank.filter(Channel::X, 0.1, 0.1);
        assert!(c < 3.0 && c > 0.1);
        assert!(bank.state(Channel::Y).is_none());
    }

    proptest! {
        #[test]
        fn monotone_convergence(c0 in 0.2..10.0f64, frac in 0.01..0.99f64, dt in 0.01..0.2f64) {
            let sigma = c0 * frac;
            let mut d = SigmaDamperState::new(c0, 1.5);
            let mut prev = d.c;
            let mut elapsed = 0.0;
            while elapsed < 30.0 {
                d = damp_sigma(d, sigma, dt);
                prop_assert!(d.c < prev || (prev - sigma).abs() < 1e-12 * c0);
                prop_assert!(d.c >= sigma);
                prev = d.c;
                elapsed += dt;
            }
            prop_assert!((d.c - sigma).abs() < 1e-6);
        }

        #[test]
        fn worse_sigma_passes_through(c in 0.01..5.0f64, extra in 1e-6..5.0f64, t in 0.0..10.0f64) {
            let d = SigmaDamperState { c, improving_time: t, t_sat: 1.5 };
            let out = damp_sigma(d, c + extra, 0.1);
            prop_assert_eq!(out.c, c + extra);
            prop_assert_eq!(out.improving_time, 0.0);
        }
    }
}
