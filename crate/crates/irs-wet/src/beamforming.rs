//! Downlink design once a channel estimate is in hand: the closed-form
//! optimal transmit covariance, and element-wise coordinate descent on the
//! unit-modulus reflection phases.

use rand::Rng;

use crate::channel::{ReflectionConfig, ReflectionMode};
use crate::error::{Error, Result};
use crate::linalg::{cplx, dominant_eigpair, is_hermitian, trace_re, CMat, CVec};

/// Maximizer of `tr(Q U)` over PSD `Q` with `tr(Q) <= p_b`: the full budget
/// on the dominant eigenvector, `Q = p_b υ υ^H`.
pub fn optimal_covariance(u: &CMat, p_b: f64) -> Result<CMat> {
    if u.nrows() != u.ncols() || !is_hermitian(u, 1e-12) {
        return Err(Error::Domain("matrix must be square Hermitian".into()));
    }
    if !(p_b > 0.0) {
        return Err(Error::Domain(format!("power budget must be > 0, got {p_b}")));
    }
    let (_, v) = dominant_eigpair(u);
    Ok((&v * v.adjoint()) * cplx(p_b, 0.0))
}

#[derive(Debug, Clone)]
pub struct BcdResult {
    pub config: ReflectionConfig,
    /// Final quadratic-form value v^H M v.
    pub objective: f64,
    /// Full sweeps executed.
    pub sweeps: usize,
    /// Objective after each sweep; non-decreasing.
    pub history: Vec<f64>,
}

/// Element-wise block coordinate ascent on `v^H m v` over unit-modulus `v`:
/// each coefficient in turn is set to the phase of its conditional linear
/// term, which can only increase the objective. A zero linear term leaves
/// the coefficient unchanged.
pub fn optimize_phases_bcd(
    m: &CMat,
    init: &ReflectionConfig,
    max_iters: usize,
    tol: f64,
) -> Result<BcdResult> {
    let j = m.nrows();
    if m.ncols() != j || !is_hermitian(m, 1e-10) {
        return Err(Error::Domain("matrix must be square Hermitian".into()));
    }
    if init.len() != j {
        return Err(Error::Config(format!(
            "init has {} entries, matrix is {j}x{j}",
            init.len()
        )));
    }
    if init.mode() != ReflectionMode::UnitModulus {
        return Err(Error::Config("init must be unit-modulus".into()));
    }

    let mut v: CVec = init.coefficients().clone();
    let objective = |v: &CVec| (v.adjoint() * m * v)[(0, 0)].re;
    let mut obj = objective(&v);
    let mut history = vec![obj];
    let mut sweeps = 0;
    for _ in 0..max_iters {
        for n in 0..j {
            let mut s = cplx(0.0, 0.0);
            for k in 0..j {
                if k != n {
                    s += m[(n, k)] * v[k];
                }
            }
            let mag = s.norm();
            if mag > 0.0 {
                v[n] = s / cplx(mag, 0.0);
            }
        }
        sweeps += 1;
        let next = objective(&v);
        debug_assert!(next >= obj - 1e-9 * obj.abs().max(1e-300));
        let gain = next - obj;
        obj = next;
        history.push(obj);
        if gain < tol {
            break;
        }
    }
    Ok(BcdResult {
        config: ReflectionConfig::unit_modulus(v)?,
        objective: obj,
        sweeps,
        history,
    })
}

/// Default stopping tolerance for the phase ascent, relative to the matrix
/// trace.
pub fn bcd_default_tol(m: &CMat) -> f64 {
    1e-10 * trace_re(m).abs().max(f64::MIN_POSITIVE)
}

/// Default sweep cap.
pub fn bcd_default_iters(j: usize) -> usize {
    500 * j
}

#[derive(Debug, Clone)]
pub struct JointDesign {
    pub covariance: CMat,
    pub reflection: ReflectionConfig,
    /// Energy per unit interval predicted by the estimate itself:
    /// `eta * p_b * ||h^H v||^2`.
    pub predicted_energy_rate: f64,
    /// Best phase-ascent objective over the restarts.
    pub objective: f64,
}

/// Joint transmit/reflection design from a (scaled) channel estimate:
/// coordinate-descent phase optimization of `v^H (h h^H) v` with random
/// restarts, then the full power budget beamed along the resulting effective
/// channel. Any complex rescaling of the estimate yields the same design.
pub fn joint_design_from_estimate(
    h_est: &CMat,
    p_b: f64,
    eta: f64,
    restarts: usize,
    rng: &mut impl Rng,
) -> Result<JointDesign> {
    if h_est.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::Degenerate("channel estimate is zero".into()));
    }
    let j = h_est.nrows();
    let m = h_est * h_est.adjoint();
    let max_iters = bcd_default_iters(j);
    let tol = bcd_default_tol(&m);

    let mut best: Option<BcdResult> = None;
    for r in 0..restarts.max(1) {
        let init = if r == 0 {
            ReflectionConfig::from_phases(&vec![0.0; j])
        } else {
            let phases: Vec<f64> = (0..j)
                .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                .collect();
            ReflectionConfig::from_phases(&phases)
        };
        let run = optimize_phases_bcd(&m, &init, max_iters, tol)?;
        if best.as_ref().is_none_or(|b| run.objective > b.objective) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart runs");

    let effective = h_est.adjoint() * best.config.coefficients();
    let norm = effective.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate(
            "estimate maps the optimized reflection to a zero effective channel".into(),
        ));
    }
    let dir = &effective / cplx(norm, 0.0);
    let covariance = (&dir * dir.adjoint()) * cplx(p_b, 0.0);
    Ok(JointDesign {
        covariance,
        reflection: best.config,
        predicted_energy_rate: eta * p_b * norm * norm,
        objective: best.objective,
    })
}
