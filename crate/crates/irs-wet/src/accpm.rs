//! Cutting-plane learner for the scaled rank-1 target matrix seen through
//! interval feedback bits.
//!
//! The working set is `{P : 0 ⪯ P ⪯ I}` intersected with the half-spaces
//! `tr(P C_i) ≥ 0` accumulated from the feedback; its analytic center
//! minimizes the log-determinant barrier
//!
//! ```text
//! F(P) = -2 log det(P) - 2 log det(I - P) - Σ_i log tr(P C_i)
//! ```
//!
//! solved here by damped Newton on the real coordinates of the Hermitian
//! space, with exact gradient and Hessian of the barrier, backtracking line
//! search that keeps every eigenvalue in (0, 1) and every cut trace positive,
//! and warm starts from the previous center. Each probe covariance is built
//! so the next cut passes exactly through the current center (a neutral cut)
//! while spending the full power budget on a rank-1 probe with randomized
//! direction.

use nalgebra::DVector;
use rand::Rng;

use crate::channel::{ReflectionConfig, TransmitConfig};
use crate::error::{Error, Result};
use crate::linalg::{
    cplx, dominant_eigpair, frob, hermitian_basis, hermitian_eigen, hermitian_part, inner_trace,
    is_hermitian, trace_re, CMat, CVec,
};
use crate::oracle::OneBitFeedback;

/// One half-space `tr(P · matrix) ≥ 0` recorded from a feedback bit; `index`
/// is the interval that produced it.
#[derive(Debug, Clone)]
pub struct Cut {
    matrix: CMat,
    index: usize,
}

impl Cut {
    pub fn new(matrix: CMat, index: usize) -> Result<Self> {
        if !is_hermitian(&matrix, 1e-12) {
            return Err(Error::Domain("cut matrix must be Hermitian".into()));
        }
        Ok(Cut { matrix, index })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// Newton target; the looser value is the accepted contract when the line
/// search stalls first.
const TARGET_TOL_PER_DIM: f64 = 1e-9;
const CONTRACT_TOL_PER_DIM: f64 = 1e-7;
const MAX_NEWTON_ITERS: usize = 400;

fn barrier_value(cuts: &[Cut], p: &CMat) -> Option<f64> {
    let m = p.nrows();
    let ld_p = crate::linalg::hpd_log_det(p)?;
    let ld_ip = crate::linalg::hpd_log_det(&(CMat::identity(m, m) - p))?;
    let mut acc = -2.0 * ld_p - 2.0 * ld_ip;
    for cut in cuts {
        let t = inner_trace(p, &cut.matrix);
        if t <= 0.0 || !t.is_finite() {
            return None;
        }
        acc -= t.ln();
    }
    acc.is_finite().then_some(acc)
}

/// Gradient of the barrier at `p`. The two box terms are combined per
/// eigenvalue in the eigenbasis of `p` before transforming back, which avoids
/// the catastrophic cancellation of subtracting two large inverses when the
/// working set is thin.
fn barrier_gradient(cuts: &[Cut], p: &CMat) -> Result<CMat> {
    let m = p.nrows();
    let (vals, vecs) = hermitian_eigen(p);
    if vals[0] <= 0.0 || vals[m - 1] >= 1.0 {
        return Err(Error::Infeasible(
            "evaluation point leaves the open (0, I) box".into(),
        ));
    }
    let mut g = CMat::zeros(m, m);
    for k in 0..m {
        let coeff = -2.0 / vals[k] + 2.0 / (1.0 - vals[k]);
        let u = vecs.column(k);
        g += (u * u.adjoint()) * cplx(coeff, 0.0);
    }
    for cut in cuts {
        let t = inner_trace(p, &cut.matrix);
        if t <= 0.0 {
            return Err(Error::Infeasible(format!(
                "cut {} has nonpositive trace {t:.3e} at the evaluation point",
                cut.index
            )));
        }
        g -= &cut.matrix * cplx(1.0 / t, 0.0);
    }
    Ok(hermitian_part(&g))
}

/// Frobenius norm of the barrier gradient at `p`; the solver's stationarity
/// certificate.
pub fn analytic_center_residual(cuts: &[Cut], p: &CMat) -> Result<f64> {
    Ok(frob(&barrier_gradient(cuts, p)?))
}

fn trace_prod_re(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Damped Newton from a strictly feasible `start`.
fn newton_center(cuts: &[Cut], start: CMat) -> Result<(CMat, f64)> {
    let m = start.nrows();
    let dim = m * m;
    let basis = hermitian_basis(m);
    let target = TARGET_TOL_PER_DIM * m as f64;
    let contract = CONTRACT_TOL_PER_DIM * m as f64;

    // cut coordinates are independent of the iterate
    let cut_coords: Vec<DVector<f64>> = cuts
        .iter()
        .map(|c| DVector::from_iterator(dim, basis.iter().map(|b| inner_trace(&c.matrix, b))))
        .collect();

    let mut p = hermitian_part(&start);
    let mut f0 = barrier_value(cuts, &p)
        .ok_or_else(|| Error::Infeasible("warm start is not strictly interior".into()))?;
    let mut last_decrement = f64::INFINITY;

    for _ in 0..MAX_NEWTON_ITERS {
        let grad_mat = barrier_gradient(cuts, &p)?;
        let residual = frob(&grad_mat);
        if residual <= target {
            return Ok((p, residual));
        }

        let (vals, vecs) = hermitian_eigen(&p);
        let from_spectrum = |f: &dyn Fn(f64) -> f64| -> CMat {
            let mut acc = CMat::zeros(m, m);
            for k in 0..m {
                let u = vecs.column(k);
                acc += (u * u.adjoint()) * cplx(f(vals[k]), 0.0);
            }
            acc
        };
        let p_inv = from_spectrum(&|lam| 1.0 / lam);
        let w = from_spectrum(&|lam| 1.0 / (1.0 - lam));
        let a_mats: Vec<CMat> = basis.iter().map(|b| &p_inv * b).collect();
        let c_mats: Vec<CMat> = basis.iter().map(|b| &w * b).collect();

        let mut hess = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for k in 0..dim {
            for l in k..dim {
                let v = 2.0 * trace_prod_re(&a_mats[k], &a_mats[l])
                    + 2.0 * trace_prod_re(&c_mats[k], &c_mats[l]);
                hess[(k, l)] = v;
                hess[(l, k)] = v;
            }
        }
        for (cut, coords) in cuts.iter().zip(cut_coords.iter()) {
            let t = inner_trace(&p, &cut.matrix);
            let inv_t2 = 1.0 / (t * t);
            for k in 0..dim {
                let ck = coords[k];
                if ck == 0.0 {
                    continue;
                }
                for l in k..dim {
                    let v = ck * coords[l] * inv_t2;
                    hess[(k, l)] += v;
                    if l != k {
                        hess[(l, k)] += v;
                    }
                }
            }
        }

        let g = DVector::from_iterator(dim, basis.iter().map(|b| inner_trace(&grad_mat, b)));
        // regularized solve: floor the Hessian spectrum so extreme
        // conditioning (very thin working sets) cannot flip the direction
        let eig = hess.symmetric_eigen();
        let lam_max = eig.eigenvalues.amax();
        let lam_floor = 1e-14 * lam_max.max(1.0);
        let gt = eig.eigenvectors.transpose() * &g;
        let mut d = DVector::zeros(dim);
        for k in 0..dim {
            d += eig.eigenvectors.column(k) * (-gt[k] / eig.eigenvalues[k].max(lam_floor));
        }

        let slope = g.dot(&d);
        let mut delta = CMat::zeros(m, m);
        for k in 0..dim {
            delta += &basis[k] * cplx(d[k], 0.0);
        }
        // fall back to steepest descent if rounding flipped the direction
        let (delta, slope) = if slope < 0.0 {
            (delta, slope)
        } else {
            (-&grad_mat, -(residual * residual))
        };
        last_decrement = -slope / 2.0;
        let f_resolution = 1e-13 * (1.0 + f0.abs());

        let mut s = 1.0;
        let mut advanced = false;
        while s >= 1e-16 {
            let cand = hermitian_part(&(&p + &delta * cplx(s, 0.0)));
            if let Some(fc) = barrier_value(cuts, &cand) {
                let unmeasurable = -0.01 * s * slope < f_resolution;
                if !unmeasurable && fc <= f0 + 0.01 * s * slope {
                    p = cand;
                    f0 = fc;
                    advanced = true;
                    break;
                }
                if unmeasurable {
                    // the barrier value can no longer resolve the descent;
                    // judge the candidate by the gradient norm instead
                    if let Ok(gc) = barrier_gradient(cuts, &cand) {
                        if frob(&gc) < 0.999 * residual {
                            p = cand;
                            f0 = fc;
                            advanced = true;
                            break;
                        }
                    }
                }
            }
            s *= 0.5;
        }
        if !advanced {
            break;
        }
    }

    let residual = analytic_center_residual(cuts, &p)?;
    // Stalled. Accept the iterate if it is stationary to working precision:
    // either the ideal Newton decrease has fallen below the f64 resolution
    // of the barrier value, or the gradient is smaller than the rounding of
    // the sum that defines it.
    let (vals, _) = hermitian_eigen(&p);
    let mut gscale = 2.0 / vals[0] + 2.0 / (1.0 - vals[vals.len() - 1]);
    for cut in cuts {
        gscale += frob(&cut.matrix) / inner_trace(&p, &cut.matrix);
    }
    let at_float_resolution =
        last_decrement <= 1e-12 * (1.0 + f0.abs()) || residual <= 1e-12 * gscale;
    if residual <= contract || at_float_resolution {
        Ok((p, residual))
    } else {
        Err(Error::Solver {
            message: "analytic center Newton iteration stalled".into(),
            residual,
        })
    }
}

/// Walks from `center` into the strict interior of the set extended with
/// `new_cut`, preserving strict feasibility of `old_cuts` and the eigenvalue
/// box. `center` may sit exactly on (or slightly beyond) the new hyperplane.
fn nudge_into_interior(old_cuts: &[Cut], new_cut: &Cut, center: &CMat) -> Result<CMat> {
    let qn = &new_cut.matrix;
    let qn_norm = frob(qn);
    if qn_norm == 0.0 {
        return Err(Error::Degenerate("cut matrix is zero".into()));
    }
    let dir = qn * cplx(1.0 / qn_norm, 0.0);

    let (pvals, _) = hermitian_eigen(center);
    let (dvals, _) = hermitian_eigen(&dir);
    let lam_lo = pvals[0];
    let lam_hi = pvals[pvals.len() - 1];
    let d_lo = dvals[0];
    let d_hi = dvals[dvals.len() - 1];
    let mut hi = f64::INFINITY;
    if d_lo < 0.0 {
        hi = hi.min(lam_lo / (-d_lo));
    }
    if d_hi > 0.0 {
        hi = hi.min((1.0 - lam_hi) / d_hi);
    }
    for cut in old_cuts {
        let slope = inner_trace(&dir, &cut.matrix);
        if slope < 0.0 {
            hi = hi.min(inner_trace(center, &cut.matrix) / (-slope));
        }
    }

    let t0 = inner_trace(center, qn);
    let scale = qn_norm * frob(center).max(1e-300);
    let lo = ((-t0).max(0.0) + 1e-10 * scale) / qn_norm;
    if !(lo < hi) {
        return Err(Error::Infeasible(
            "no interior point found past the new cut".into(),
        ));
    }

    // try progressively smaller steps inside (lo, hi)
    for frac in [0.25, 0.1, 0.5, 0.02, 0.75] {
        let s = lo + frac * (hi - lo);
        let cand = hermitian_part(&(center + &dir * cplx(s, 0.0)));
        let mut all = Vec::with_capacity(old_cuts.len() + 1);
        all.extend_from_slice(old_cuts);
        all.push(new_cut.clone());
        if barrier_value(&all, &cand).is_some() {
            return Ok(cand);
        }
    }
    Err(Error::Infeasible(
        "could not establish strict interior feasibility for the new cut".into(),
    ))
}

/// Analytic center of the working set defined by `cuts` inside the
/// `0 ⪯ P ⪯ I` box. With no cuts this is exactly `I/2`. Cuts are introduced
/// one at a time with recentering, so arbitrary (feasible) cut sets are
/// accepted.
pub fn analytic_center(cuts: &[Cut], m_t: usize) -> Result<CMat> {
    if m_t == 0 {
        return Err(Error::UnsupportedDimension("dimension must be at least 1".into()));
    }
    let mut center = CMat::identity(m_t, m_t) * cplx(0.5, 0.0);
    for k in 0..cuts.len() {
        if cuts[k].matrix.nrows() != m_t {
            return Err(Error::Config(format!(
                "cut {} has dimension {}, expected {m_t}",
                cuts[k].index,
                cuts[k].matrix.nrows()
            )));
        }
        let start = nudge_into_interior(&cuts[..k], &cuts[k], &center)?;
        center = newton_center(&cuts[..=k], start)?.0;
    }
    Ok(center)
}

/// Builds the next probe covariance: rank-1, full power budget, and neutral —
/// the hyperplane `tr(P (Q - q_prev)) = 0` passes through `center`.
///
/// The probe direction mixes the extreme eigenvectors of the center (the pair
/// whose eigenvalues straddle the required quadratic-form value) with a
/// random unit vector from the complementary eigenspace, plus independent
/// random phases, so that successive cut normals explore the whole neutral
/// hyperplane.
pub fn next_covariance(
    center: &CMat,
    q_prev: &CMat,
    p_b: f64,
    rng: &mut impl Rng,
) -> Result<CMat> {
    let m = center.nrows();
    if m < 2 {
        return Err(Error::UnsupportedDimension(
            "neutrality forces Q to repeat in dimension 1; nothing to probe".into(),
        ));
    }
    if !(p_b > 0.0) {
        return Err(Error::Domain(format!("power budget must be > 0, got {p_b}")));
    }
    if q_prev.nrows() != m || q_prev.ncols() != m {
        return Err(Error::Config("q_prev dimension mismatch".into()));
    }

    let (vals, vecs) = hermitian_eigen(center);
    let lam_lo = vals[0];
    let lam_hi = vals[m - 1];
    let mut c = inner_trace(center, q_prev) / p_b;
    let slack = 1e-9 * frob(center);
    if c < lam_lo - slack || c > lam_hi + slack {
        return Err(Error::Infeasible(format!(
            "target value {c:.6e} outside the center's eigenvalue range [{lam_lo:.6e}, {lam_hi:.6e}]"
        )));
    }
    c = c.clamp(lam_lo, lam_hi);

    let unit = |z: CVec| -> CVec {
        let n = z.norm();
        z / cplx(n, 0.0)
    };
    let rand_phase = |rng: &mut dyn rand::RngCore| {
        let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        cplx(t.cos(), t.sin())
    };

    for _ in 0..32 {
        let u = if lam_hi - lam_lo < 1e-10 {
            // near-isotropic center: any unit direction is neutral
            unit(CVec::from_fn(m, |_, _| {
                cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            }))
        } else {
            // The target may sit exactly on an extreme eigenvalue (this is
            // guaranteed right after the first recentering, whose center
            // shares the probe's eigenbasis); exact neutrality would then
            // force a repeated probe. Pull the target strictly inside by at
            // most half the neutrality budget so probes stay distinct.
            let spread = lam_hi - lam_lo;
            let slack_in = (0.5e-9 * frob(center)).min(0.25 * spread);
            let c = c.clamp(lam_lo + slack_in, lam_hi - slack_in);
            let u_a = vecs.column(m - 1).into_owned();
            let u_b = vecs.column(0).into_owned();
            let (s, lam_w, w) = if m >= 3 {
                let coeffs: Vec<f64> = (0..m - 2).map(|_| rng.random::<f64>() - 0.5).collect();
                let phases: Vec<C64Phase> = (0..m - 2).map(|_| rand_phase(rng)).collect();
                let mut w = CVec::zeros(m);
                for k in 1..m - 1 {
                    w += vecs.column(k) * (cplx(coeffs[k - 1], 0.0) * phases[k - 1]);
                }
                let n2 = w.norm_squared();
                if n2 < 1e-24 {
                    (0.0, 0.0, CVec::zeros(m))
                } else {
                    let w = unit(w);
                    let mut lam_w = 0.0;
                    for k in 1..m - 1 {
                        let overlap = (vecs.column(k).adjoint() * &w)[(0, 0)].norm_sqr();
                        lam_w += vals[k] * overlap;
                    }
                    let tiny = 1e-14;
                    let s1 = if lam_w > lam_lo + tiny {
                        (c - lam_lo) / (lam_w - lam_lo)
                    } else {
                        f64::INFINITY
                    };
                    let s2 = if lam_w < lam_hi - tiny {
                        (lam_hi - c) / (lam_hi - lam_w)
                    } else {
                        f64::INFINITY
                    };
                    let cap = s1.min(s2).min(0.9).max(0.0);
                    (rng.random::<f64>() * cap, lam_w, w)
                }
            } else {
                (0.0, 0.0, CVec::zeros(m))
            };

            let c_ab = if s > 0.0 {
                ((c - s * lam_w) / (1.0 - s)).clamp(lam_lo, lam_hi)
            } else {
                c
            };
            let cos2 = ((c_ab - lam_lo) / (lam_hi - lam_lo)).clamp(0.0, 1.0);
            let (ct, st) = (cos2.sqrt(), (1.0 - cos2).sqrt());
            let mut u = u_a * cplx(((1.0 - s).sqrt()) * ct, 0.0)
                + u_b * (cplx((1.0 - s).sqrt() * st, 0.0) * rand_phase(rng));
            if s > 0.0 {
                u += &w * (cplx(s.sqrt(), 0.0) * rand_phase(rng));
            }
            unit(u)
        };

        let q = hermitian_part(&((&u * u.adjoint()) * cplx(p_b, 0.0)));
        if frob(&(&q - q_prev)) > 1e-12 * p_b {
            debug_assert!(
                inner_trace(center, &(&q - q_prev)).abs() <= 1e-8 * p_b * frob(center).max(1e-300),
                "neutrality violated"
            );
            return Ok(q);
        }
    }
    Err(Error::Degenerate(
        "could not draw a probe distinct from the previous covariance".into(),
    ))
}

type C64Phase = crate::linalg::C64;

/// Scaled dominant-eigenvector read-out of a learned center:
/// `sqrt(tr(P)) u_max`, with the global phase fixed so the largest-magnitude
/// entry is real nonnegative.
pub fn extract_scaled_vector(p_tilde: &CMat) -> Result<CVec> {
    let tr = trace_re(p_tilde);
    if !(tr > 0.0) || frob(p_tilde) == 0.0 {
        return Err(Error::Degenerate("matrix has no positive trace".into()));
    }
    let (_, u) = dominant_eigpair(p_tilde);
    let mut idx = 0;
    let mut best = 0.0;
    for (i, z) in u.iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            idx = i;
        }
    }
    let rot = if best > 0.0 {
        u[idx].conj() / cplx(best, 0.0)
    } else {
        cplx(1.0, 0.0)
    };
    Ok(u * (rot * cplx(tr.sqrt(), 0.0)))
}

/// Mutable learner state: accumulated cuts, the current center, and the
/// previous probe covariance.
#[derive(Debug, Clone)]
pub struct AccpmState {
    cuts: Vec<Cut>,
    center: CMat,
    q_prev: CMat,
    interval: usize,
    p_b: f64,
    last_residual: f64,
}

impl AccpmState {
    /// Fresh state at interval 1: isotropic probe, centered box.
    pub fn new(m_t: usize, p_b: f64) -> Result<Self> {
        if m_t < 2 {
            return Err(Error::UnsupportedDimension(
                "the learner needs at least 2 antennas".into(),
            ));
        }
        if !(p_b > 0.0) {
            return Err(Error::Domain(format!("power budget must be > 0, got {p_b}")));
        }
        Ok(AccpmState {
            cuts: Vec::new(),
            center: CMat::identity(m_t, m_t) * cplx(0.5, 0.0),
            q_prev: TransmitConfig::isotropic(m_t, p_b).covariance_matrix(),
            interval: 1,
            p_b,
            last_residual: 0.0,
        })
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn center(&self) -> &CMat {
        &self.center
    }

    pub fn q_prev(&self) -> &CMat {
        &self.q_prev
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn last_residual(&self) -> f64 {
        self.last_residual
    }

    /// One feedback interval: probe a neutral rank-1 covariance, turn the bit
    /// into a cut, recenter. Costs exactly one feedback bit.
    pub fn step<O: OneBitFeedback>(
        &mut self,
        oracle: &mut O,
        v: &ReflectionConfig,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let q_n = next_covariance(&self.center, &self.q_prev, self.p_b, rng)?;
        let bit = oracle.interval_feedback(
            &TransmitConfig::covariance(q_n.clone(), self.p_b)?,
            v,
        )?;
        let cut_matrix = (&q_n - &self.q_prev) * cplx(-(bit.sign() as f64), 0.0);
        let cut = Cut::new(hermitian_part(&cut_matrix), self.interval + 1)?;
        let start = nudge_into_interior(&self.cuts, &cut, &self.center)?;
        self.cuts.push(cut);
        let (center, residual) = newton_center(&self.cuts, start)?;
        self.center = center;
        self.q_prev = q_n;
        self.interval += 1;
        self.last_residual = residual;
        Ok(())
    }

    /// Checks the interior-point invariants: eigenvalues strictly inside
    /// (0, 1) and every stored cut trace strictly positive.
    pub fn validate_invariants(&self) -> Result<()> {
        let (vals, _) = hermitian_eigen(&self.center);
        if vals[0] <= 0.0 || vals[vals.len() - 1] >= 1.0 {
            return Err(Error::Infeasible(format!(
                "center eigenvalues [{:.3e}, {:.3e}] leave (0, 1)",
                vals[0],
                vals[vals.len() - 1]
            )));
        }
        for cut in &self.cuts {
            let t = inner_trace(&self.center, &cut.matrix);
            if t <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "cut {} trace {t:.3e} not strictly positive at the center",
                    cut.index
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AccpmIterate {
    pub interval: usize,
    /// Center after this interval, when recording is enabled.
    pub center: Option<CMat>,
    pub residual: f64,
    pub bits_spent: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct AccpmOptions {
    pub record_centers: bool,
}

impl Default for AccpmOptions {
    fn default() -> Self {
        AccpmOptions {
            record_centers: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AccpmRun {
    pub state: AccpmState,
    pub trace: Vec<AccpmIterate>,
}

impl AccpmRun {
    pub fn center(&self) -> &CMat {
        self.state.center()
    }
}

/// The full learning loop for one reflection pattern: interval 1 radiates the
/// isotropic covariance and bills no bit (its comparison against the silent
/// initial interval is vacuous); every later interval probes a neutral
/// rank-1 covariance and spends one bit, for `n_a - 1` bits total.
pub fn run_accpm<O: OneBitFeedback>(
    oracle: &mut O,
    v: &ReflectionConfig,
    n_a: usize,
    p_b: f64,
    m_t: usize,
    rng: &mut impl Rng,
    opts: &AccpmOptions,
) -> Result<AccpmRun> {
    if n_a < 2 {
        return Err(Error::Config(format!("need at least 2 intervals, got {n_a}")));
    }
    let mut state = AccpmState::new(m_t, p_b)?;
    oracle.observe(&TransmitConfig::isotropic(m_t, p_b), v)?;
    let mut trace = Vec::with_capacity(n_a);
    trace.push(AccpmIterate {
        interval: 1,
        center: opts.record_centers.then(|| state.center.clone()),
        residual: 0.0,
        bits_spent: oracle.bits_spent(),
    });
    for _ in 2..=n_a {
        state.step(oracle, v, rng)?;
        trace.push(AccpmIterate {
            interval: state.interval,
            center: opts.record_centers.then(|| state.center.clone()),
            residual: state.last_residual,
            bits_spent: oracle.bits_spent(),
        });
    }
    Ok(AccpmRun { state, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        hermitian_part(&a)
    }

    fn random_center(n: usize, rng: &mut impl Rng) -> CMat {
        // random unitary via QR, eigenvalues uniform in (0.05, 0.95)
        let a = CMat::from_fn(n, n, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let q = a.qr().q();
        let mut m = CMat::zeros(n, n);
        for k in 0..n {
            let lam = 0.05 + 0.9 * rng.random::<f64>();
            let u = q.column(k);
            m += (u * u.adjoint()) * cplx(lam, 0.0);
        }
        hermitian_part(&m)
    }

    fn random_psd_with_trace(n: usize, trace: f64, rng: &mut impl Rng) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| {
            cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let q = &a * a.adjoint();
        let t = trace_re(&q);
        hermitian_part(&(q * cplx(trace / t, 0.0)))
    }

    #[test]
    fn center_without_cuts_is_half_identity() {
        for m in 1..=6 {
            let c = analytic_center(&[], m).unwrap();
            let want = CMat::identity(m, m) * cplx(0.5, 0.0);
            assert!(frob(&(&c - &want)) < 1e-12);
            assert!(analytic_center_residual(&[], &c).unwrap() < 1e-9);
        }
    }

    #[test]
    fn scalar_single_cut_matches_calculus() {
        // -2/p + 2/(1-p) - 1/p = 0  =>  p = 3/5
        let cut = Cut::new(CMat::from_element(1, 1, cplx(1.0, 0.0)), 2).unwrap();
        let c = analytic_center(&[cut], 1).unwrap();
        assert!((c[(0, 0)].re - 0.6).abs() < 1e-9);
        assert!(c[(0, 0)].im.abs() < 1e-12);
    }

    /// Zooming grid search over the 4 real parameters of a 2x2 Hermitian
    /// matrix; independent of the Newton path.
    fn grid_center_2x2(cuts: &[Cut]) -> CMat {
        let f = |a: f64, b: f64, c: f64, d: f64| -> f64 {
            let off = c * c + d * d;
            let det_p = a * b - off;
            let det_ip = (1.0 - a) * (1.0 - b) - off;
            if a <= 0.0 || b <= 0.0 || a >= 1.0 || b >= 1.0 || det_p <= 0.0 || det_ip <= 0.0 {
                return f64::INFINITY;
            }
            let mut acc = -2.0 * det_p.ln() - 2.0 * det_ip.ln();
            for cut in cuts {
                let q = &cut.matrix;
                let t = a * q[(0, 0)].re
                    + b * q[(1, 1)].re
                    + 2.0 * (c * q[(1, 0)].re - d * q[(1, 0)].im);
                if t <= 0.0 {
                    return f64::INFINITY;
                }
                acc -= t.ln();
            }
            acc
        };
        let mut best = (0.5, 0.5, 0.0, 0.0);
        let mut width = 0.5;
        let mut step = 0.05_f64;
        for _ in 0..4 {
            let mut best_val = f64::INFINITY;
            let mut next = best;
            let steps = (2.0 * width / step).round() as i64;
            for ia in -steps..=steps {
                let a = best.0 + ia as f64 * step;
                for ib in -steps..=steps {
                    let b = best.1 + ib as f64 * step;
                    for ic in -steps..=steps {
                        let c = best.2 + ic as f64 * step;
                        for id in -steps..=steps {
                            let d = best.3 + id as f64 * step;
                            let v = f(a, b, c, d);
                            if v < best_val {
                                best_val = v;
                                next = (a, b, c, d);
                            }
                        }
                    }
                }
            }
            best = next;
            width = 2.0 * step;
            step *= 0.1;
        }
        CMat::from_row_slice(
            2,
            2,
            &[
                cplx(best.0, 0.0),
                cplx(best.2, best.3),
                cplx(best.2, -best.3),
                cplx(best.1, 0.0),
            ],
        )
    }

    #[test]
    fn center_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let cut = Cut::new(random_hermitian(2, &mut rng), 2).unwrap();
            // skip cut sets that have no interior on the positive side
            if analytic_center(std::slice::from_ref(&cut), 2).is_err() {
                continue;
            }
            let newton = analytic_center(std::slice::from_ref(&cut), 2).unwrap();
            let grid = grid_center_2x2(std::slice::from_ref(&cut));
            assert!(
                frob(&(&newton - &grid)) < 1e-3,
                "newton vs grid deviation {}",
                frob(&(&newton - &grid))
            );
        }
    }

    #[test]
    fn neutral_cut_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..200 {
            let m = 2 + (trial % 5);
            let p_b = 1.0;
            let center = random_center(m, &mut rng);
            let q_prev = random_psd_with_trace(m, p_b, &mut rng);
            let q = next_covariance(&center, &q_prev, p_b, &mut rng).unwrap();
            let neut = inner_trace(&center, &(&q - &q_prev)).abs();
            assert!(neut <= 1e-9 * p_b * frob(&center), "neutrality {neut}");
            assert!((trace_re(&q) - p_b).abs() < 1e-10);
            assert!(frob(&(&q - &q_prev)) > 0.0);
        }
    }

    #[test]
    fn next_covariance_rejects_scalar() {
        let c = CMat::from_element(1, 1, cplx(0.5, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            next_covariance(&c, &c, 1.0, &mut rng),
            Err(Error::UnsupportedDimension(_))
        ));
    }

    fn normal_rank(rows: &nalgebra::DMatrix<f64>, n: usize) -> usize {
        let sub = rows.rows(0, n).into_owned();
        let svd = sub.svd(false, false);
        let smax = svd.singular_values.max();
        svd.singular_values
            .iter()
            .filter(|&&s| s > 1e-10 * smax)
            .count()
    }

    #[test]
    fn probe_normals_span_the_neutral_hyperplane() {
        // over n calls from a fixed (center, q_prev) the cut normals must
        // span min(m^2 - 1, n) real dims for m >= 3. Every probe has trace
        // p_b, so normals are trace-orthogonal to the identity; the offset
        // q_prev must carry trace < p_b to contribute that last dimension,
        // and for m = 2 the probe diagonal is pinned exactly (span caps at 2).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [3usize, 4] {
            let center = random_center(m, &mut rng);
            let q_prev = random_psd_with_trace(m, 0.9, &mut rng);
            let dim = m * m;
            let basis = hermitian_basis(m);
            let n_calls = 24;
            let mut rows = nalgebra::DMatrix::<f64>::zeros(n_calls, dim);
            for call in 0..n_calls {
                let q = next_covariance(&center, &q_prev, 1.0, &mut rng).unwrap();
                let normal = &q - &q_prev;
                for (k, b) in basis.iter().enumerate() {
                    rows[(call, k)] = inner_trace(&normal, b);
                }
            }
            for n in [3usize, dim - 1, n_calls] {
                let rank = normal_rank(&rows, n);
                assert!(
                    rank >= n.min(dim - 1),
                    "m={m}: rank {rank} < {} after {n} calls",
                    n.min(dim - 1)
                );
            }
        }
    }

    #[test]
    fn accumulated_run_normals_span_everything_for_m2() {
        // across a real run the pair (center, q_prev) evolves, so even m = 2
        // explores the full 3-dim neutral geometry
        use crate::channel::{group_composite, sample_channels, Geometry};
        use crate::oracle::FeedbackOracle;

        let geom = Geometry::default_indoor();
        let ch = sample_channels(&geom, 4, 2, 12).unwrap();
        let gch = group_composite(&ch, 2).unwrap();
        let v = ReflectionConfig::from_phases(&[0.2, 1.3]);
        let mut oracle = FeedbackOracle::new(gch, 0.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let run = run_accpm(&mut oracle, &v, 20, 1.0, 2, &mut rng, &AccpmOptions::default()).unwrap();
        let basis = hermitian_basis(2);
        let cuts = run.state.cuts();
        let mut rows = nalgebra::DMatrix::<f64>::zeros(cuts.len(), 4);
        for (i, cut) in cuts.iter().enumerate() {
            let scale = frob(cut.matrix());
            for (k, b) in basis.iter().enumerate() {
                rows[(i, k)] = inner_trace(cut.matrix(), b) / scale;
            }
        }
        assert!(normal_rank(&rows, cuts.len()) >= 3);
    }

    #[test]
    fn extract_scaled_vector_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        // exact rank-1 input: recovers the vector up to global phase
        let p = CVec::from_fn(4, |_, _| cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let mat = hermitian_part(&(&p * p.adjoint()));
        let got = extract_scaled_vector(&mat).unwrap();
        assert!((got.norm() - p.norm()).abs() < 1e-10);
        let overlap = (p.adjoint() * &got)[(0, 0)].norm() / (p.norm() * got.norm());
        assert!((overlap - 1.0).abs() < 1e-10);
        // largest entry is real nonnegative
        let mut idx = 0;
        let mut best = 0.0;
        for (i, z) in got.iter().enumerate() {
            if z.norm() > best {
                best = z.norm();
                idx = i;
            }
        }
        assert!(got[idx].im.abs() < 1e-12 * best);
        assert!(got[idx].re >= 0.0);

        // diag(0.9, 0.1): direction e_1 scaled by sqrt of the full trace
        let d = CMat::from_row_slice(2, 2, &[cplx(0.9, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(0.1, 0.0)]);
        let got = extract_scaled_vector(&d).unwrap();
        assert!((got.norm() - 1.0).abs() < 1e-12);
        assert!((got[0].re - 1.0).abs() < 1e-12);
        assert!(got[1].norm() < 1e-12);

        assert!(extract_scaled_vector(&CMat::zeros(3, 3)).is_err());
    }

    struct TraceSignOracle {
        target: CMat,
        last: f64,
        bits: u64,
    }

    impl OneBitFeedback for TraceSignOracle {
        fn observe(&mut self, q: &TransmitConfig, _v: &ReflectionConfig) -> Result<()> {
            self.last = inner_trace(&self.target, &q.covariance_matrix());
            Ok(())
        }
        fn interval_feedback(
            &mut self,
            q: &TransmitConfig,
            _v: &ReflectionConfig,
        ) -> Result<crate::oracle::IntervalBit> {
            let t = inner_trace(&self.target, &q.covariance_matrix());
            let bit = if t >= self.last {
                crate::oracle::IntervalBit::Rose
            } else {
                crate::oracle::IntervalBit::Fell
            };
            self.last = t;
            self.bits += 1;
            Ok(bit)
        }
        fn best_feedback(
            &mut self,
            _q: &TransmitConfig,
            _v: &ReflectionConfig,
        ) -> Result<crate::oracle::ProbeBit> {
            unimplemented!("not used by the interval learner")
        }
        fn reset_comparison_state(&mut self) {
            self.last = 0.0;
        }
        fn bits_spent(&self) -> u64 {
            self.bits
        }
    }

    #[test]
    fn energy_oracle_and_sign_oracle_produce_identical_cuts() {
        use crate::channel::{group_composite, sample_channels, Geometry};
        use crate::oracle::FeedbackOracle;

        let geom = Geometry::default_indoor();
        let ch = sample_channels(&geom, 8, 3, 5).unwrap();
        let gch = group_composite(&ch, 2).unwrap();
        let v = ReflectionConfig::from_phases(&[0.0, 0.7, 1.4, 2.1]);
        let eta = 0.5;
        let target = crate::channel::effective_outer(&gch, &v, eta).unwrap();

        let mut energy_oracle = FeedbackOracle::new(gch, eta, 1.0).unwrap();
        let mut sign_oracle = TraceSignOracle {
            target,
            last: 0.0,
            bits: 0,
        };

        let opts = AccpmOptions {
            record_centers: false,
        };
        let mut rng_a = ChaCha8Rng::seed_from_u64(99);
        let mut rng_b = ChaCha8Rng::seed_from_u64(99);
        let run_a = run_accpm(&mut energy_oracle, &v, 20, 1.0, 3, &mut rng_a, &opts).unwrap();
        let run_b = run_accpm(&mut sign_oracle, &v, 20, 1.0, 3, &mut rng_b, &opts).unwrap();

        assert_eq!(run_a.state.cuts().len(), run_b.state.cuts().len());
        for (a, b) in run_a.state.cuts().iter().zip(run_b.state.cuts()) {
            assert!(frob(&(a.matrix() - b.matrix())) < 1e-12);
        }
        assert_eq!(energy_oracle.bits_spent(), 19);
        assert_eq!(sign_oracle.bits_spent(), 19);
    }

    #[test]
    fn loop_accounting_and_invariants() {
        use crate::channel::{group_composite, sample_channels, Geometry};
        use crate::oracle::FeedbackOracle;

        let geom = Geometry::default_indoor();
        let ch = sample_channels(&geom, 8, 2, 8).unwrap();
        let gch = group_composite(&ch, 2).unwrap();
        let v = ReflectionConfig::from_phases(&[0.0, 0.5, 1.0, 1.5]);
        let eta = 0.5;
        let target = crate::channel::effective_outer(&gch, &v, eta).unwrap();
        let mut oracle = FeedbackOracle::new(gch, eta, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);

        let run = run_accpm(&mut oracle, &v, 2, 1.0, 2, &mut rng, &AccpmOptions::default()).unwrap();
        assert_eq!(run.state.cuts().len(), 1);
        assert_eq!(oracle.bits_spent(), 1);
        run.state.validate_invariants().unwrap();

        // longer run: every iterate satisfies the nesting invariant and the
        // scaled true matrix satisfies every cut a noiseless oracle produced
        let run = run_accpm(&mut {
            let o = oracle.clone();
            o
        }, &v, 40, 1.0, 2, &mut rng, &AccpmOptions::default())
        .unwrap();
        run.state.validate_invariants().unwrap();
        let beta = 1.0 / (2.0 * crate::linalg::dominant_eigpair(&target).0);
        let scaled_true = &target * cplx(beta, 0.0);
        for cut in run.state.cuts() {
            assert!(inner_trace(&scaled_true, cut.matrix()) >= -1e-10);
        }
        for it in &run.trace {
            if let Some(center) = &it.center {
                for cut in run.state.cuts().iter().filter(|c| c.index() <= it.interval) {
                    assert!(inner_trace(center, cut.matrix()) > 0.0);
                }
            }
        }
    }
}
