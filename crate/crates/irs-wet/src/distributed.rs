//! Perturbation-based phase adaptation from best-so-far bits, plus the
//! two-stage scheme that finishes with one cutting-plane pass for the
//! transmit covariance.
//!
//! Stage 1 fixes the isotropic covariance and randomly perturbs every group
//! phase each timeslot; the receiver's single bit says whether the probe beat
//! the best energy recorded so far, and the surface keeps or undoes the
//! perturbation accordingly. The climbed objective and its stationarity
//! diagnostics are genie-side only.

use rand::Rng;

use crate::accpm::{run_accpm, AccpmOptions};
use crate::beamforming::optimal_covariance;
use crate::channel::{ReflectionConfig, TransmitConfig};
use crate::error::{Error, Result};
use crate::linalg::{cplx, CMat};
use crate::oracle::{FeedbackOracle, OneBitFeedback, ProbeBit};

#[derive(Debug, Clone)]
pub struct DbParams {
    /// Perturbation half-width in radians.
    pub delta0: f64,
    /// Linear decay of the half-width when the keep rate collapses; off by
    /// default.
    pub anneal: bool,
    pub anneal_window: usize,
    pub anneal_keep_rate: f64,
    pub record_trace: bool,
}

impl DbParams {
    pub fn new(delta0_rad: f64) -> Self {
        DbParams {
            delta0: delta0_rad,
            anneal: false,
            anneal_window: 100,
            anneal_keep_rate: 0.05,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DbTraceRow {
    pub step: usize,
    pub kept: bool,
    /// Phases probed this step (kept ones become the new state).
    pub probe_theta: Vec<f64>,
}

/// Mutable adaptation state: best known group phases and the step counter.
#[derive(Debug, Clone)]
pub struct DbState {
    theta: Vec<f64>,
    step: usize,
    delta0: f64,
    delta0_init: f64,
    window_keeps: usize,
    window_steps: usize,
    pub trace: Vec<DbTraceRow>,
}

impl DbState {
    pub fn new(theta_init: &[f64], delta0: f64) -> Result<Self> {
        if theta_init.is_empty() {
            return Err(Error::Config("need at least one group phase".into()));
        }
        if !(delta0 >= 0.0) {
            return Err(Error::Domain(format!(
                "perturbation half-width must be >= 0, got {delta0}"
            )));
        }
        Ok(DbState {
            theta: theta_init.to_vec(),
            step: 0,
            delta0,
            delta0_init: delta0,
            window_keeps: 0,
            window_steps: 0,
            trace: Vec::new(),
        })
    }

    /// Best known phases, reduced to [0, 2π) for reporting.
    pub fn theta(&self) -> Vec<f64> {
        self.theta
            .iter()
            .map(|t| t.rem_euclid(std::f64::consts::TAU))
            .collect()
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    pub fn reflection(&self) -> ReflectionConfig {
        ReflectionConfig::from_phases(&self.theta)
    }
}

/// One timeslot: perturb every phase, probe, keep on a strictly-better bit.
/// Spends exactly one feedback bit.
pub fn db_step<O: OneBitFeedback>(
    state: &mut DbState,
    oracle: &mut O,
    q_fixed: &TransmitConfig,
    params: &DbParams,
    rng: &mut impl Rng,
) -> Result<bool> {
    let probe: Vec<f64> = state
        .theta
        .iter()
        .map(|&t| t + (2.0 * rng.random::<f64>() - 1.0) * state.delta0)
        .collect();
    let bit = oracle.best_feedback(q_fixed, &ReflectionConfig::from_phases(&probe))?;
    let kept = bit == ProbeBit::Keep;
    if kept {
        state.theta = probe.clone();
    }
    state.step += 1;
    if params.record_trace {
        state.trace.push(DbTraceRow {
            step: state.step,
            kept,
            probe_theta: probe,
        });
    }
    if params.anneal {
        state.window_steps += 1;
        if kept {
            state.window_keeps += 1;
        }
        if state.window_steps >= params.anneal_window {
            let rate = state.window_keeps as f64 / state.window_steps as f64;
            if rate < params.anneal_keep_rate {
                state.delta0 =
                    (state.delta0 - 0.1 * state.delta0_init).max(0.05 * state.delta0_init);
            }
            state.window_steps = 0;
            state.window_keeps = 0;
        }
    }
    Ok(kept)
}

/// Runs the stage-1 adaptation under the isotropic covariance for `n_d`
/// timeslots; spends exactly `n_d` bits.
pub fn run_distributed<O: OneBitFeedback>(
    oracle: &mut O,
    n_d: usize,
    params: &DbParams,
    theta_init: &[f64],
    p_b: f64,
    m_t: usize,
    rng: &mut impl Rng,
) -> Result<(ReflectionConfig, DbState)> {
    if n_d < 1 {
        return Err(Error::Config("need at least one timeslot".into()));
    }
    let mut state = DbState::new(theta_init, params.delta0)?;
    let mut params = params.clone();
    let q_fixed = TransmitConfig::isotropic(m_t, p_b);
    for _ in 0..n_d {
        db_step(&mut state, oracle, &q_fixed, &params, rng)?;
        params.delta0 = state.delta0; // annealing feedback
    }
    Ok((state.reflection(), state))
}

/// Largest per-group derivative magnitude of the climbed quadratic form at
/// the given phases: `max_n |2 Im{e^{-jθ_n} Σ_{k≠n} Φ(n,k) e^{jθ_k}}|`.
/// Genie-only diagnostic (`phi` is hidden from the adaptation itself).
pub fn stationarity_residual(theta: &[f64], phi: &CMat) -> Result<f64> {
    let j = theta.len();
    if phi.nrows() != j || phi.ncols() != j {
        return Err(Error::Config(format!(
            "phi is {}x{}, phases have {j} entries",
            phi.nrows(),
            phi.ncols()
        )));
    }
    let mut worst = 0.0_f64;
    for n in 0..j {
        let mut s = cplx(0.0, 0.0);
        for k in 0..j {
            if k != n {
                s += phi[(n, k)] * cplx(theta[k].cos(), theta[k].sin());
            }
        }
        let d = 2.0 * (cplx(theta[n].cos(), -theta[n].sin()) * s).im;
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

/// Per-group conditionally optimal phases `arg(Σ_{k≠n} Φ(n,k) e^{jθ_k})`;
/// `None` where the inner sum vanishes.
pub fn db_theoretical_targets(theta: &[f64], phi: &CMat) -> Result<Vec<Option<f64>>> {
    let j = theta.len();
    if phi.nrows() != j || phi.ncols() != j {
        return Err(Error::Config(format!(
            "phi is {}x{}, phases have {j} entries",
            phi.nrows(),
            phi.ncols()
        )));
    }
    let mut out = Vec::with_capacity(j);
    for n in 0..j {
        let mut s = cplx(0.0, 0.0);
        for k in 0..j {
            if k != n {
                s += phi[(n, k)] * cplx(theta[k].cos(), theta[k].sin());
            }
        }
        if s.norm() < 1e-300 {
            out.push(None);
        } else {
            out.push(Some(s.arg().rem_euclid(std::f64::consts::TAU)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FullSchemeResult {
    pub covariance: CMat,
    pub reflection: ReflectionConfig,
    /// Genie-measured harvested energy of the final pair, joules.
    pub energy: f64,
    pub stage1_bits: u64,
    pub stage2_bits: u64,
    pub db_state: DbState,
}

/// The complete two-stage scheme: phase adaptation under the isotropic
/// covariance, a comparison-state reset at the stage boundary, one
/// cutting-plane pass at the settled reflection, and the closed-form
/// covariance from its center. Total bits: `n_d + (n_a - 1)`.
pub fn full_scheme(
    oracle: &mut FeedbackOracle,
    n_d: usize,
    db_params: &DbParams,
    n_a: usize,
    p_b: f64,
    m_t: usize,
    rng: &mut impl Rng,
) -> Result<FullSchemeResult> {
    let before = oracle.bits_spent();
    let theta_init = vec![0.0; oracle.genie().grouped_channel().group_count()];
    let (reflection, db_state) =
        run_distributed(oracle, n_d, db_params, &theta_init, p_b, m_t, rng)?;
    let stage1_bits = oracle.bits_spent() - before;

    // stage-2 interval comparisons are unrelated to the stage-1 best stream
    oracle.reset_comparison_state();
    let run = run_accpm(
        oracle,
        &reflection,
        n_a,
        p_b,
        m_t,
        rng,
        &AccpmOptions {
            record_centers: false,
        },
    )?;
    let stage2_bits = oracle.bits_spent() - before - stage1_bits;

    let covariance = optimal_covariance(run.center(), p_b)?;
    let q = TransmitConfig::covariance(covariance.clone(), p_b)?;
    let energy = oracle.genie().energy(&q, &reflection)?;
    Ok(FullSchemeResult {
        covariance,
        reflection,
        energy,
        stage1_bits,
        stage2_bits,
        db_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{group_composite, phase_objective_matrix, sample_channels, Geometry};
    use crate::linalg::hermitian_part;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, n: usize, m_t: usize, k: usize) -> FeedbackOracle {
        let geom = Geometry::default_indoor();
        let ch = sample_channels(&geom, n, m_t, seed).unwrap();
        FeedbackOracle::new(group_composite(&ch, k).unwrap(), 0.5, 1.0).unwrap()
    }

    #[test]
    fn keep_and_undo_branches() {
        let mut oracle = setup(3, 16, 2, 4);
        let q = TransmitConfig::isotropic(2, 1.0);
        let params = DbParams::new(2.0_f64.to_radians());
        let mut state = DbState::new(&[0.0; 4], params.delta0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // first probe has positive energy and beats the zero record
        let kept = db_step(&mut state, &mut oracle, &q, &params, &mut rng).unwrap();
        assert!(kept);
        let after_first = state.theta();
        assert_ne!(after_first, vec![0.0; 4]);
        // replay the same configuration: exact tie is an undo
        let frozen = state.theta();
        let e_now = oracle
            .genie()
            .energy(&q, &ReflectionConfig::from_phases(&frozen))
            .unwrap();
        assert!(e_now > 0.0);
        let mut zero_params = DbParams::new(0.0);
        zero_params.record_trace = false;
        let mut frozen_state = DbState::new(&frozen, 0.0).unwrap();
        let kept = db_step(&mut frozen_state, &mut oracle, &q, &zero_params, &mut rng).unwrap();
        assert!(!kept, "tie against the recorded best must undo");
        assert_eq!(frozen_state.theta(), frozen);
    }

    #[test]
    fn zero_width_never_moves() {
        let mut oracle = setup(5, 8, 2, 2);
        let params = DbParams::new(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (v, state) = run_distributed(&mut oracle, 50, &params, &[0.3, 0.9, 1.5, 2.1], 1.0, 2, &mut rng).unwrap();
        assert_eq!(state.theta(), vec![0.3, 0.9, 1.5, 2.1]);
        // exactly one keep (the first probe), everything after ties
        let keeps = state.trace.iter().filter(|r| r.kept).count();
        assert_eq!(keeps, 1);
        assert_eq!(v.phases().len(), 4);
        assert_eq!(oracle.bits_spent(), 50);
    }

    #[test]
    fn best_energy_replay_is_monotone() {
        let mut oracle = setup(7, 16, 3, 4);
        let q = TransmitConfig::isotropic(3, 1.0);
        let params = DbParams::new(2.0_f64.to_radians());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, state) = run_distributed(&mut oracle, 1000, &params, &[0.0; 4], 1.0, 3, &mut rng).unwrap();
        let genie = oracle.genie();
        let mut y_best = 0.0_f64;
        let mut bests = Vec::new();
        for row in &state.trace {
            let y = genie
                .energy(&q, &ReflectionConfig::from_phases(&row.probe_theta))
                .unwrap();
            assert_eq!(row.kept, y > y_best, "keep bit must match the record");
            y_best = y_best.max(y);
            bests.push(y_best);
        }
        let mut sorted = bests.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(bests, sorted);
        assert!((genie.best_energy() - y_best).abs() <= 1e-18 + 1e-12 * y_best);
    }

    #[test]
    fn stationarity_hand_values() {
        // J=2, phi(1,2)=1: theta (0,0) stationary, (0, pi/2) has residual 2
        let mut phi = CMat::zeros(2, 2);
        phi[(0, 1)] = cplx(1.0, 0.0);
        phi[(1, 0)] = cplx(1.0, 0.0);
        assert!(stationarity_residual(&[0.0, 0.0], &phi).unwrap() < 1e-15);
        let r = stationarity_residual(&[0.0, std::f64::consts::FRAC_PI_2], &phi).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        // target for group 1 is the other group's phase
        let targets = db_theoretical_targets(&[0.0, 1.1], &phi).unwrap();
        assert!((targets[0].unwrap() - 1.1).abs() < 1e-12);
        assert!((targets[1].unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn stationarity_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = CMat::from_fn(5, 5, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let phi = hermitian_part(&(&a * a.adjoint()));
        let theta: Vec<f64> = (0..5)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect();
        let objective = |t: &[f64]| {
            let v = ReflectionConfig::from_phases(t);
            (v.coefficients().adjoint() * &phi * v.coefficients())[(0, 0)].re
        };
        let h = 1e-6;
        let mut fd_worst = 0.0_f64;
        for n in 0..5 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[n] += h;
            dn[n] -= h;
            fd_worst = fd_worst.max(((objective(&up) - objective(&dn)) / (2.0 * h)).abs());
        }
        let got = stationarity_residual(&theta, &phi).unwrap();
        assert!(
            (got - fd_worst).abs() < 1e-4 * fd_worst.max(1e-12),
            "analytic {got} vs finite differences {fd_worst}"
        );
    }

    #[test]
    fn bcd_fixed_point_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = CMat::from_fn(4, 4, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let phi = hermitian_part(&(&a * a.adjoint()));
        let init = ReflectionConfig::from_phases(&[0.0; 4]);
        let run = crate::beamforming::optimize_phases_bcd(
            &phi,
            &init,
            crate::beamforming::bcd_default_iters(4),
            0.0,
        )
        .unwrap();
        let theta = run.config.phases();
        assert!(stationarity_residual(&theta, &phi).unwrap() < 1e-8);
        // the conditional targets coincide with the phases at a fixed point
        let targets = db_theoretical_targets(&theta, &phi).unwrap();
        for (t, tgt) in theta.iter().zip(targets) {
            let d = (t - tgt.unwrap()).rem_euclid(std::f64::consts::TAU);
            assert!(d.min(std::f64::consts::TAU - d) < 1e-6);
        }
    }

    #[test]
    fn scaling_phi_preserves_bcd_fixed_points() {
        // the climbed objective and the full-power objective differ by a
        // positive factor, so their ascent fixed points coincide
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = CMat::from_fn(4, 4, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let phi = hermitian_part(&(&a * a.adjoint()));
        let scaled = &phi * cplx(3.7, 0.0);
        let init = ReflectionConfig::from_phases(&[0.5, 1.0, 1.5, 2.0]);
        let r1 = crate::beamforming::optimize_phases_bcd(&phi, &init, 2000, 0.0).unwrap();
        let r2 = crate::beamforming::optimize_phases_bcd(&scaled, &init, 2000, 0.0).unwrap();
        // identical fixed points up to a global phase
        let ip = (r1.config.coefficients().adjoint() * r2.config.coefficients())[(0, 0)];
        assert!((ip.norm() - 4.0).abs() < 1e-9, "overlap {}", ip.norm());
        // and both are stationary points of either matrix
        assert!(stationarity_residual(&r1.config.phases(), &scaled).unwrap() < 1e-6);
        assert!(stationarity_residual(&r2.config.phases(), &phi).unwrap() < 1e-7);
    }

    #[test]
    fn phases_approach_their_conditional_targets() {
        // the per-group gap to the conditionally optimal phase shrinks over a
        // converging run (comparing the early and settled medians)
        let mut oracle = setup(31, 32, 3, 4);
        let phi = phase_objective_matrix(oracle.genie().grouped_channel(), 1.0, 0.5);
        let params = DbParams::new(2.0_f64.to_radians());
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (_, state) =
            run_distributed(&mut oracle, 4000, &params, &[0.0; 8], 1.0, 3, &mut rng).unwrap();

        let median_gap = |theta: &[f64]| -> f64 {
            let targets = db_theoretical_targets(theta, &phi).unwrap();
            let mut gaps: Vec<f64> = theta
                .iter()
                .zip(targets)
                .map(|(t, tgt)| {
                    let tgt = tgt.expect("nonzero coupling");
                    (cplx(t.cos(), t.sin()) - cplx(tgt.cos(), tgt.sin())).norm()
                })
                .collect();
            gaps.sort_by(f64::total_cmp);
            gaps[gaps.len() / 2]
        };

        let mut theta = vec![0.0; 8];
        let mut early_gap = None;
        for row in &state.trace {
            if row.kept {
                theta = row.probe_theta.clone();
            }
            if row.step == 100 {
                early_gap = Some(median_gap(&theta));
            }
        }
        let late_gap = median_gap(&state.theta());
        assert!(
            late_gap < early_gap.unwrap(),
            "median gap should shrink: early {:?} vs late {late_gap}",
            early_gap
        );
    }

    #[test]
    fn full_scheme_accounting_and_mrt_identity() {
        let mut oracle = setup(9, 16, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = DbParams::new(2.0_f64.to_radians());
        let res = full_scheme(&mut oracle, 120, &params, 25, 1.0, 3, &mut rng).unwrap();
        assert_eq!(res.stage1_bits, 120);
        assert_eq!(res.stage2_bits, 24);
        assert_eq!(oracle.bits_spent(), 120 + 24);
        assert!(res.energy > 0.0);

        // genie stage 2: the exact center would give the matched-beam energy
        let gch = oracle.genie().grouped_channel().clone();
        let e = gch.effective_vector(&res.reflection).unwrap();
        let ideal = 0.5 * 1.0 * e.norm_squared();
        let q_ideal = crate::beamforming::optimal_covariance(
            &crate::channel::effective_outer(&gch, &res.reflection, 0.5).unwrap(),
            1.0,
        )
        .unwrap();
        let got = oracle
            .genie()
            .energy(
                &TransmitConfig::covariance(q_ideal, 1.0).unwrap(),
                &res.reflection,
            )
            .unwrap();
        assert!((got - ideal).abs() < 1e-10 * ideal.max(1.0));
        // the learned covariance is close to that ideal
        assert!(res.energy >= 0.8 * ideal);
    }

    #[test]
    fn phase_objective_matrix_shape() {
        let oracle = setup(21, 8, 2, 2);
        let phi = phase_objective_matrix(oracle.genie().grouped_channel(), 1.0, 0.5);
        assert_eq!(phi.nrows(), 4);
        assert!(crate::linalg::is_hermitian(&phi, 1e-12));
    }
}
