//! The simulated energy receiver. It measures harvested energy exactly but
//! reveals nothing except one-bit comparisons, and it meters every bit it
//! sends — the cost currency of both design schemes.
//!
//! Optimizers are written against the [`OneBitFeedback`] trait, which has no
//! energy accessor. True energies are reachable only through the clearly
//! separated [`Genie`] handle, used for metrics and plots.

use std::io::Write;

use crate::channel::{harvested_energy, GroupedChannel, ReflectionConfig, TransmitConfig};
use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Interval comparison bit: `Rose` means the probed energy was at least the
/// previous interval's (the wire encodes it as -1), `Fell` means it dropped
/// (+1 on the wire).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalBit {
    Rose,
    Fell,
}

impl IntervalBit {
    /// Wire sign convention: -1 for rose (energy did not decrease), +1 for fell.
    pub fn sign(self) -> i8 {
        match self {
            IntervalBit::Rose => -1,
            IntervalBit::Fell => 1,
        }
    }
}

/// Best-so-far comparison bit: `Keep` iff the probe strictly beat the best
/// recorded energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeBit {
    Keep,
    Undo,
}

/// The bit-only surface optimizers may touch.
///
/// `observe` measures a configuration and updates the interval reference
/// without sending (or billing) a bit; it models the intervals whose bit is
/// either deterministic or deliberately unused by the transmitter, so that
/// `bits_spent` counts informative feedback only.
pub trait OneBitFeedback {
    fn observe(&mut self, q: &TransmitConfig, v: &ReflectionConfig) -> Result<()>;

    /// Compares the probed energy with the previous interval's; updates the
    /// reference; bills one bit.
    fn interval_feedback(&mut self, q: &TransmitConfig, v: &ReflectionConfig) -> Result<IntervalBit>;

    /// Compares the probed energy with the best recorded so far (strictly);
    /// updates the record; bills one bit.
    fn best_feedback(&mut self, q: &TransmitConfig, v: &ReflectionConfig) -> Result<ProbeBit>;

    /// Zeroes both comparison references. The bit meter is cumulative across
    /// phases and is deliberately preserved.
    fn reset_comparison_state(&mut self);

    fn bits_spent(&self) -> u64;
}

#[derive(Debug, Clone)]
pub struct TranscriptRow {
    /// Probe index, counting unbilled observations too.
    pub step: u64,
    pub phase: String,
    /// Wire value: interval bits are ±1, best bits are +1 (keep) / -1 (undo),
    /// unbilled observations log 0.
    pub bit: i8,
    pub bits_spent: u64,
}

/// Simulated receiver bound to one grouped channel realization.
///
/// Single-owner mutable: use one oracle per optimization run; independent
/// Monte Carlo trials get their own oracles and may run in parallel.
#[derive(Debug, Clone)]
pub struct FeedbackOracle {
    grouped: GroupedChannel,
    eta: f64,
    t_s: f64,
    last_energy: f64,
    best_energy: f64,
    bits: u64,
    probes: u64,
    phase: String,
    transcript: Option<Vec<TranscriptRow>>,
}

impl FeedbackOracle {
    pub fn new(grouped: GroupedChannel, eta: f64, t_s: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Domain(format!("efficiency must be in (0, 1], got {eta}")));
        }
        if !(t_s > 0.0) {
            return Err(Error::Domain(format!("interval must be > 0, got {t_s}")));
        }
        Ok(FeedbackOracle {
            grouped,
            eta,
            t_s,
            last_energy: 0.0,
            best_energy: 0.0,
            bits: 0,
            probes: 0,
            phase: String::new(),
            transcript: None,
        })
    }

    /// Labels subsequent transcript rows (e.g. "accpm", "ratio", "phase").
    pub fn set_phase(&mut self, phase: &str) {
        self.phase = phase.to_string();
    }

    pub fn enable_transcript(&mut self) {
        if self.transcript.is_none() {
            self.transcript = Some(Vec::new());
        }
    }

    pub fn transcript(&self) -> Option<&[TranscriptRow]> {
        self.transcript.as_deref()
    }

    pub fn write_transcript_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "step,phase,bit,bits_spent")?;
        if let Some(rows) = &self.transcript {
            for r in rows {
                writeln!(w, "{},{},{},{}", r.step, r.phase, r.bit, r.bits_spent)?;
            }
        }
        Ok(())
    }

    /// Debug side-channel exposing true energies. Never handed to optimizers.
    pub fn genie(&self) -> Genie<'_> {
        Genie { oracle: self }
    }

    fn measure(&self, q: &TransmitConfig, v: &ReflectionConfig) -> Result<f64> {
        harvested_energy(q, v, &self.grouped, self.eta, self.t_s)
    }

    fn log(&mut self, bit: i8) {
        self.probes += 1;
        if let Some(rows) = &mut self.transcript {
            rows.push(TranscriptRow {
                step: self.probes,
                phase: self.phase.clone(),
                bit,
                bits_spent: self.bits,
            });
        }
    }
}

impl OneBitFeedback for FeedbackOracle {
    fn observe(&mut self, q: &TransmitConfig, v: &ReflectionConfig) -> Result<()> {
        self.last_energy = self.measure(q, v)?;
        self.log(0);
        Ok(())
    }

    fn interval_feedback(&mut self, q: &TransmitConfig, v: &ReflectionConfig) -> Result<IntervalBit> {
        let e = self.measure(q, v)?;
        let bit = if e >= self.last_energy {
            IntervalBit::Rose
        } else {
            IntervalBit::Fell
        };
        self.last_energy = e;
        self.bits += 1;
        self.log(bit.sign());
        Ok(bit)
    }

    fn best_feedback(&mut self, q: &TransmitConfig, v: &ReflectionConfig) -> Result<ProbeBit> {
        let e = self.measure(q, v)?;
        let bit = if e > self.best_energy {
            ProbeBit::Keep
        } else {
            ProbeBit::Undo
        };
        self.best_energy = self.best_energy.max(e);
        self.bits += 1;
        self.log(if bit == ProbeBit::Keep { 1 } else { -1 });
        Ok(bit)
    }

    fn reset_comparison_state(&mut self) {
        self.last_energy = 0.0;
        self.best_energy = 0.0;
    }

    fn bits_spent(&self) -> u64 {
        self.bits
    }
}

/// Read-only genie view of an oracle: true energies and channel matrices for
/// metrics, traces and tests.
pub struct Genie<'a> {
    oracle: &'a FeedbackOracle,
}

impl Genie<'_> {
    pub fn energy(&self, q: &TransmitConfig, v: &ReflectionConfig) -> Result<f64> {
        self.oracle.measure(q, v)
    }

    pub fn grouped_channel(&self) -> &GroupedChannel {
        &self.oracle.grouped
    }

    pub fn eta(&self) -> f64 {
        self.oracle.eta
    }

    pub fn interval_seconds(&self) -> f64 {
        self.oracle.t_s
    }

    pub fn best_energy(&self) -> f64 {
        self.oracle.best_energy
    }

    pub fn last_energy(&self) -> f64 {
        self.oracle.last_energy
    }

    /// The rank-1 matrix the cutting-plane learner targets for this pattern.
    pub fn effective_outer(&self, v: &ReflectionConfig) -> Result<CMat> {
        crate::channel::effective_outer(&self.oracle.grouped, v, self.oracle.eta)
    }

    /// The quadratic-form matrix climbed by the phase perturbation scheme.
    pub fn phase_objective(&self, p_b: f64) -> CMat {
        crate::channel::phase_objective_matrix(&self.oracle.grouped, p_b, self.oracle.eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{group_composite, sample_channels, Geometry};
    use crate::linalg::cplx;
    use crate::linalg::CMat;

    fn oracle() -> FeedbackOracle {
        let geom = Geometry::default_indoor();
        let ch = sample_channels(&geom, 8, 2, 3).unwrap();
        FeedbackOracle::new(group_composite(&ch, 2).unwrap(), 0.5, 1.0).unwrap()
    }

    #[test]
    fn first_interval_call_rises() {
        let mut o = oracle();
        let q = TransmitConfig::isotropic(2, 1.0);
        let v = ReflectionConfig::from_phases(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(o.interval_feedback(&q, &v).unwrap(), IntervalBit::Rose);
        assert_eq!(o.bits_spent(), 1);
    }

    #[test]
    fn tie_counts_as_rose() {
        let mut o = oracle();
        let q = TransmitConfig::isotropic(2, 1.0);
        let v = ReflectionConfig::from_phases(&[0.1, 0.2, 0.3, 0.4]);
        o.interval_feedback(&q, &v).unwrap();
        assert_eq!(o.interval_feedback(&q, &v).unwrap(), IntervalBit::Rose);
    }

    #[test]
    fn halved_power_falls() {
        let mut o = oracle();
        let q = TransmitConfig::isotropic(2, 1.0);
        let half = TransmitConfig::covariance(q.covariance_matrix() * cplx(0.5, 0.0), 1.0).unwrap();
        let v = ReflectionConfig::from_phases(&[0.1, 0.2, 0.3, 0.4]);
        o.interval_feedback(&q, &v).unwrap();
        assert_eq!(o.interval_feedback(&half, &v).unwrap(), IntervalBit::Fell);
        assert_eq!(o.bits_spent(), 2);
    }

    #[test]
    fn best_feedback_is_strict() {
        let mut o = oracle();
        let q = TransmitConfig::isotropic(2, 1.0);
        let v = ReflectionConfig::from_phases(&[0.1, 0.2, 0.3, 0.4]);
        // first positive probe beats the zero-initialized record
        assert_eq!(o.best_feedback(&q, &v).unwrap(), ProbeBit::Keep);
        // exact tie is an undo
        assert_eq!(o.best_feedback(&q, &v).unwrap(), ProbeBit::Undo);
    }

    #[test]
    fn improving_probes_all_keep() {
        let mut o = oracle();
        let v = ReflectionConfig::from_phases(&[0.1, 0.2, 0.3, 0.4]);
        let mut last = 0.0;
        for p in 1..=5 {
            let q = TransmitConfig::isotropic(2, 0.2 * p as f64);
            assert_eq!(o.best_feedback(&q, &v).unwrap(), ProbeBit::Keep);
            last = o.genie().energy(&q, &v).unwrap();
        }
        assert!((o.genie().best_energy() - last).abs() < 1e-18);
    }

    #[test]
    fn reset_preserves_bit_meter() {
        let mut o = oracle();
        let q = TransmitConfig::isotropic(2, 1.0);
        let v = ReflectionConfig::from_phases(&[0.1, 0.2, 0.3, 0.4]);
        o.interval_feedback(&q, &v).unwrap();
        o.best_feedback(&q, &v).unwrap();
        let bits = o.bits_spent();
        o.reset_comparison_state();
        assert_eq!(o.bits_spent(), bits);
        assert_eq!(o.interval_feedback(&q, &v).unwrap(), IntervalBit::Rose);
        assert_eq!(o.bits_spent(), bits + 1);
    }

    #[test]
    fn observe_is_unbilled() {
        let mut o = oracle();
        let q = TransmitConfig::isotropic(2, 1.0);
        let v = ReflectionConfig::from_phases(&[0.1, 0.2, 0.3, 0.4]);
        o.observe(&q, &v).unwrap();
        assert_eq!(o.bits_spent(), 0);
        // the observation set the interval reference
        let half = TransmitConfig::covariance(q.covariance_matrix() * cplx(0.5, 0.0), 1.0).unwrap();
        assert_eq!(o.interval_feedback(&half, &v).unwrap(), IntervalBit::Fell);
    }

    #[test]
    fn transcript_records_bits() {
        let mut o = oracle();
        o.enable_transcript();
        o.set_phase("demo");
        let q = TransmitConfig::isotropic(2, 1.0);
        let v = ReflectionConfig::from_phases(&[0.1, 0.2, 0.3, 0.4]);
        o.observe(&q, &v).unwrap();
        o.interval_feedback(&q, &v).unwrap();
        o.best_feedback(&q, &v).unwrap();
        let rows = o.transcript().unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].bit, 0);
        assert_eq!(rows[1].phase, "demo");
        let mut buf = Vec::new();
        o.write_transcript_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,phase,bit,bits_spent\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn genie_energy_is_nonnegative_and_matches_channel() {
        let o = oracle();
        let q = TransmitConfig::isotropic(2, 1.0);
        let v = ReflectionConfig::from_phases(&[0.1, 0.2, 0.3, 0.4]);
        let e = o.genie().energy(&q, &v).unwrap();
        assert!(e > 0.0);
        let p = o.genie().effective_outer(&v).unwrap();
        // E = t_s * tr(P Q) for the covariance form
        let want = crate::linalg::inner_trace(&p, &q.covariance_matrix());
        assert!((e - want).abs() < 1e-15 * e.max(1.0));
        assert_eq!(p.nrows(), 2);
        let phi: CMat = o.genie().phase_objective(1.0);
        assert_eq!(phi.nrows(), 4);
    }
}
