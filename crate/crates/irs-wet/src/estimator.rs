//! Cascaded-channel estimation from one-bit feedback.
//!
//! One cutting-plane run per Hadamard reflection pattern recovers each
//! effective channel up to an unknown complex factor; a bisection over
//! transmit power pins the factors' amplitude ratios, a one-dimensional
//! search over a beam rotation angle pins their phase offsets (the energy in
//! that angle has a single cyclic maximum, located exactly at the offset),
//! and the Hadamard structure turns the per-pattern vectors into a
//! least-squares estimate of the whole matrix.

use rand::Rng;

use crate::accpm::{extract_scaled_vector, run_accpm, AccpmOptions};
use crate::channel::{ReflectionConfig, TransmitConfig};
use crate::error::{Error, Result};
use crate::linalg::{cplx, CMat, CVec};
use crate::oracle::{IntervalBit, OneBitFeedback, ProbeBit};

/// Columns of a Sylvester-constructed ±1 orthogonal pattern matrix.
#[derive(Debug, Clone)]
pub struct PatternSet {
    matrix: Vec<Vec<i8>>, // column-major
    order: usize,
}

impl PatternSet {
    /// Orders 1, 2, and powers of two at least 4. `V V^T = J I` holds exactly
    /// in integer arithmetic.
    pub fn hadamard(j: usize) -> Result<Self> {
        if j == 0 || (j & (j - 1)) != 0 {
            return Err(Error::Config(format!(
                "pattern order must be a power of two, got {j}"
            )));
        }
        let mut size = 1usize;
        let mut m = vec![vec![1i8]];
        while size < j {
            let next = size * 2;
            let mut grown = vec![vec![0i8; next]; next];
            for c in 0..size {
                for r in 0..size {
                    let v = m[c][r];
                    grown[c][r] = v;
                    grown[c][r + size] = v;
                    grown[c + size][r] = v;
                    grown[c + size][r + size] = -v;
                }
            }
            m = grown;
            size = next;
        }
        Ok(PatternSet { matrix: m, order: j })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entry(&self, row: usize, col: usize) -> i8 {
        self.matrix[col][row]
    }

    /// Column `i` as a unit-modulus reflection setting.
    pub fn column(&self, i: usize) -> ReflectionConfig {
        let coeffs = CVec::from_iterator(
            self.order,
            self.matrix[i].iter().map(|&e| cplx(e as f64, 0.0)),
        );
        ReflectionConfig::unit_modulus(coeffs).expect("±1 entries are unit modulus")
    }

    /// Column `i` as a real vector, for assembly.
    pub fn column_real(&self, i: usize) -> Vec<f64> {
        self.matrix[i].iter().map(|&e| e as f64).collect()
    }

    /// Half-sum of two columns, a ternary on/off pattern.
    pub fn composite(&self, i: usize, j: usize) -> ReflectionConfig {
        let entries: Vec<i8> = (0..self.order)
            .map(|r| (self.matrix[i][r] + self.matrix[j][r]) / 2)
            .collect();
        ReflectionConfig::ternary(&entries).expect("half-sums of ±1 columns are ternary")
    }
}

/// Amplitude ratios and phase offsets of the per-pattern factors relative to
/// the first pattern (whose factor is the normalization, ratio 1 offset 0).
#[derive(Debug, Clone)]
pub struct ScaleFactors {
    pub ratios: Vec<f64>,
    pub phase_offsets: Vec<f64>,
}

impl ScaleFactors {
    pub fn factor(&self, i: usize) -> crate::linalg::C64 {
        let (r, t) = (self.ratios[i], self.phase_offsets[i]);
        cplx(r * t.cos(), r * t.sin())
    }
}

/// Rotates `p_j` by a unit phase so its inner product with `p_i` becomes real
/// nonnegative. Returns the rotated vector and the applied angle.
pub fn align_phase(p_i: &CVec, p_j: &CVec) -> Result<(CVec, f64)> {
    let ip = (p_i.adjoint() * p_j)[(0, 0)];
    if ip.norm() < 1e-12 * p_i.norm() * p_j.norm() {
        return Err(Error::AlignmentUndefined(ip.norm()));
    }
    let angle = -ip.arg();
    Ok((p_j * cplx(angle.cos(), angle.sin()), angle))
}

#[derive(Debug, Clone)]
pub struct RatioSearch {
    /// Estimated amplitude ratio |γ_a| / |γ_b|.
    pub ratio: f64,
    pub bits: u64,
    /// Final bisection bracket on the searched transmit power, in watts.
    pub bracket: (f64, f64),
}

/// Finds the transmit-power balance point between two patterns by bisection
/// on one-bit comparisons, and converts it to the amplitude ratio of their
/// scale factors.
///
/// Each bisection step alternates two configurations and spends exactly one
/// bit; the initial ordering probe decides which pattern keeps full power.
pub fn amplitude_ratio_search<O: OneBitFeedback>(
    oracle: &mut O,
    pattern_a: &ReflectionConfig,
    pattern_b: &ReflectionConfig,
    p_a: &CVec,
    p_b_vec: &CVec,
    p_b: f64,
    tol_rel: f64,
) -> Result<RatioSearch> {
    if p_a.norm() == 0.0 || p_b_vec.norm() == 0.0 {
        return Err(Error::Degenerate("pattern vectors must be nonzero".into()));
    }
    if !(tol_rel > 0.0 && tol_rel < 1.0) {
        return Err(Error::Domain(format!(
            "relative tolerance must be in (0, 1), got {tol_rel}"
        )));
    }
    let beam_a = |power: f64| TransmitConfig::beam(p_a.clone(), power, p_b);
    let beam_b = |power: f64| TransmitConfig::beam(p_b_vec.clone(), power, p_b);

    let bits_before = oracle.bits_spent();

    // ordering probe: which side harvests more at full power
    oracle.observe(&beam_a(p_b)?, pattern_a)?;
    let b_is_stronger = oracle.interval_feedback(&beam_b(p_b)?, pattern_b)? == IntervalBit::Rose;

    let steps = (1.0 / tol_rel).log2().ceil() as usize;
    let (mut lo, mut hi) = (0.0_f64, p_b);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        let rose = if b_is_stronger {
            oracle.observe(&beam_a(p_b)?, pattern_a)?;
            oracle.interval_feedback(&beam_b(mid)?, pattern_b)? == IntervalBit::Rose
        } else {
            oracle.observe(&beam_b(p_b)?, pattern_b)?;
            oracle.interval_feedback(&beam_a(mid)?, pattern_a)? == IntervalBit::Rose
        };
        // rose: the reduced-power side still harvests at least the fixed side
        if rose {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let balanced = 0.5 * (lo + hi);
    let (pow_a, pow_b) = if b_is_stronger {
        (p_b, balanced)
    } else {
        (balanced, p_b)
    };
    Ok(RatioSearch {
        ratio: (pow_b / pow_a).sqrt() * p_b_vec.norm() / p_a.norm(),
        bits: oracle.bits_spent() - bits_before,
        bracket: (lo, hi),
    })
}

#[derive(Debug, Clone)]
pub struct PhaseSearch {
    /// Located phase offset in [0, 2π).
    pub offset: f64,
    pub bits: u64,
}

const GOLDEN_INV: f64 = 0.618_033_988_749_894_9;

/// Locates the phase offset between two patterns' factors: probes the
/// half-sum on/off pattern with a two-vector beam whose relative rotation is
/// swept, first on a coarse grid with best-so-far bits, then narrowed by
/// golden-section comparisons (valid because the swept energy has a single
/// cyclic maximum, which sits exactly at the offset).
///
/// Resets the oracle's comparison state on entry; the bit meter carries on.
pub fn phase_offset_search<O: OneBitFeedback>(
    oracle: &mut O,
    pattern_a: &ReflectionConfig,
    pattern_b: &ReflectionConfig,
    p_a: &CVec,
    p_b_vec: &CVec,
    ratio: f64,
    p_b: f64,
    grid_deg: f64,
) -> Result<PhaseSearch> {
    if !(ratio > 0.0) {
        return Err(Error::Domain(format!("ratio must be > 0, got {ratio}")));
    }
    if !(grid_deg > 0.0) {
        return Err(Error::Domain(format!("grid must be > 0 degrees, got {grid_deg}")));
    }
    let ip = (p_a.adjoint() * p_b_vec)[(0, 0)];
    let norms = p_a.norm() * p_b_vec.norm();
    if ip.im.abs() > 1e-6 * norms || ip.re < 0.0 {
        return Err(Error::Domain(
            "vectors must be phase-aligned before the offset search".into(),
        ));
    }
    // parallel vectors sweep a fixed beam direction: every probe energy is
    // equal and the offset cannot be observed
    if norms - ip.norm() <= 1e-12 * norms {
        return Err(Error::PhaseIndeterminate(
            "pattern vectors are parallel; the swept energy is constant".into(),
        ));
    }

    let composite = ReflectionConfig::composite(pattern_a, pattern_b)?;
    let beam = |theta: f64| -> Result<TransmitConfig> {
        let rot = cplx(ratio * theta.cos(), ratio * theta.sin());
        let dir = p_a * rot + p_b_vec;
        TransmitConfig::beam(dir, p_b, p_b)
    };

    let bits_before = oracle.bits_spent();
    oracle.reset_comparison_state();

    // coarse sweep keeps a running best via strict-improvement bits
    let step = grid_deg.max(5.0).to_radians();
    let count = (std::f64::consts::TAU / step).ceil() as usize;
    let mut best_theta = 0.0;
    let mut kept_later = 0usize;
    for k in 0..count {
        let theta = k as f64 * step;
        if oracle.best_feedback(&beam(theta)?, &composite)? == ProbeBit::Keep {
            best_theta = theta;
            if k > 0 {
                kept_later += 1;
            }
        }
    }

    // Nothing after the first probe was kept: either the maximum sits at the
    // first grid point or the energy is flat in the rotation. Two equality
    // probes at unrelated offsets tell these apart.
    if kept_later == 0 {
        let mut flat = true;
        for probe_offset in [std::f64::consts::FRAC_PI_2, 2.6] {
            let x = beam(best_theta)?;
            let y = beam(best_theta + probe_offset)?;
            oracle.observe(&x, &composite)?;
            let up = oracle.interval_feedback(&y, &composite)? == IntervalBit::Rose;
            oracle.observe(&y, &composite)?;
            let down = oracle.interval_feedback(&x, &composite)? == IntervalBit::Rose;
            if !(up && down) {
                flat = false;
                break;
            }
        }
        if flat {
            return Err(Error::PhaseIndeterminate(
                "probe energies are constant in the rotation angle".into(),
            ));
        }
    }

    // golden-section narrowing inside the bracketing grid cell pair
    let mut a = best_theta - step;
    let mut b = best_theta + step;
    let target = grid_deg.to_radians();
    while b - a > target {
        let x1 = b - GOLDEN_INV * (b - a);
        let x2 = a + GOLDEN_INV * (b - a);
        oracle.observe(&beam(x1)?, &composite)?;
        if oracle.interval_feedback(&beam(x2)?, &composite)? == IntervalBit::Rose {
            a = x1;
        } else {
            b = x2;
        }
    }

    Ok(PhaseSearch {
        offset: (0.5 * (a + b)).rem_euclid(std::f64::consts::TAU),
        bits: oracle.bits_spent() - bits_before,
    })
}

/// Least-squares assembly of the grouped-channel estimate from per-pattern
/// vectors and their relative factors: the conjugate transpose of
/// `(1/J) Σ_i γ_i p_i v_i^T`, exact when the inputs are exact thanks to the
/// pattern matrix's orthogonality.
pub fn assemble_estimate(
    p_vectors: &[CVec],
    scale: &ScaleFactors,
    patterns: &PatternSet,
) -> Result<CMat> {
    let j = patterns.order();
    if p_vectors.len() != j || scale.ratios.len() != j || scale.phase_offsets.len() != j {
        return Err(Error::Config(format!(
            "expected {j} vectors and factors, got {} and {}",
            p_vectors.len(),
            scale.ratios.len()
        )));
    }
    let m_t = p_vectors[0].len();
    if p_vectors.iter().any(|p| p.len() != m_t) {
        return Err(Error::Config("pattern vectors differ in length".into()));
    }
    let mut h_adj = CMat::zeros(m_t, j); // estimate of H^H, M_t x J
    for i in 0..j {
        let gamma = scale.factor(i);
        let col = patterns.column_real(i);
        for r in 0..m_t {
            for c in 0..j {
                h_adj[(r, c)] += gamma * p_vectors[i][r] * cplx(col[c], 0.0);
            }
        }
    }
    h_adj /= cplx(j as f64, 0.0);
    Ok(h_adj.adjoint())
}

#[derive(Debug, Clone)]
pub struct EstimatorParams {
    /// Feedback intervals per pattern in the cutting-plane stage.
    pub n_a: usize,
    /// Relative tolerance of the amplitude-ratio bisection.
    pub tol_rel: f64,
    /// Target resolution of the phase-offset search, degrees.
    pub grid_deg: f64,
    /// Coarse sweep step for the phase search, degrees.
    pub coarse_step_deg: f64,
}

impl EstimatorParams {
    pub fn new(n_a: usize) -> Self {
        EstimatorParams {
            n_a,
            tol_rel: 1e-3,
            grid_deg: 0.5,
            coarse_step_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EstimationLedger {
    /// Bits per pattern spent by the cutting-plane stage (length J).
    pub accpm_bits: Vec<u64>,
    /// Bits per ratio search against pattern 1 (length J-1).
    pub ratio_bits: Vec<u64>,
    /// Bits per phase search against pattern 1 (length J-1).
    pub phase_bits: Vec<u64>,
}

impl EstimationLedger {
    pub fn total(&self) -> u64 {
        self.accpm_bits.iter().sum::<u64>()
            + self.ratio_bits.iter().sum::<u64>()
            + self.phase_bits.iter().sum::<u64>()
    }
}

#[derive(Debug, Clone)]
pub struct CascadedEstimate {
    /// Estimated grouped channel, J x M_t, known up to one complex factor.
    pub h_bar_c: CMat,
    /// Phase-aligned per-pattern vectors.
    pub p_vectors: Vec<CVec>,
    pub scale: ScaleFactors,
    pub ledger: EstimationLedger,
}

impl CascadedEstimate {
    /// Per-pattern audit CSV: bit costs of every stage plus genie-side
    /// normalized errors of the pattern vectors and the assembled matrix.
    /// `truth` is the true grouped channel (genie-only).
    pub fn write_report_csv<W: std::io::Write>(
        &self,
        w: &mut W,
        truth: &crate::channel::GroupedChannel,
    ) -> crate::error::Result<()> {
        let j = self.p_vectors.len();
        let patterns = PatternSet::hadamard(j)?;
        let final_ne = crate::metrics::ne_cascaded(&self.h_bar_c, truth.matrix(), 0.5)?;
        writeln!(
            w,
            "pattern,accpm_bits,ratio_bits,phase_bits,genie_ne_p,final_ne"
        )?;
        for i in 0..j {
            let true_p = truth.effective_vector(&patterns.column(i))?;
            let est = CMat::from_column_slice(true_p.len(), 1, self.p_vectors[i].as_slice());
            let tru = CMat::from_column_slice(true_p.len(), 1, true_p.as_slice());
            let ne_p = crate::metrics::ne_cascaded(&est, &tru, 0.5)?;
            let (rb, pb) = if i == 0 {
                (0, 0)
            } else {
                (self.ledger.ratio_bits[i - 1], self.ledger.phase_bits[i - 1])
            };
            writeln!(
                w,
                "{},{},{},{},{:.16e},{:.16e}",
                i + 1,
                self.ledger.accpm_bits[i],
                rb,
                pb,
                ne_p,
                final_ne
            )?;
        }
        Ok(())
    }
}

/// The full estimation pipeline: one cutting-plane run per Hadamard pattern,
/// then amplitude-ratio and phase-offset searches of every pattern against
/// the first, finished by the least-squares assembly.
pub fn estimate_cascaded_channel<O: OneBitFeedback>(
    oracle: &mut O,
    j_groups: usize,
    params: &EstimatorParams,
    p_b: f64,
    m_t: usize,
    rng: &mut impl Rng,
) -> Result<CascadedEstimate> {
    let patterns = PatternSet::hadamard(j_groups)?;
    let accpm_opts = AccpmOptions {
        record_centers: false,
    };

    let mut raw_vectors = Vec::with_capacity(j_groups);
    let mut ledger = EstimationLedger::default();
    for i in 0..j_groups {
        oracle.reset_comparison_state();
        let before = oracle.bits_spent();
        let run = run_accpm(
            oracle,
            &patterns.column(i),
            params.n_a,
            p_b,
            m_t,
            rng,
            &accpm_opts,
        )?;
        ledger.accpm_bits.push(oracle.bits_spent() - before);
        raw_vectors.push(extract_scaled_vector(run.center())?);
    }

    // align every pattern's vector to the first
    let mut p_vectors = Vec::with_capacity(j_groups);
    p_vectors.push(raw_vectors[0].clone());
    for p in raw_vectors.iter().skip(1) {
        let (aligned, _) = align_phase(&p_vectors[0], p)?;
        p_vectors.push(aligned);
    }

    let mut ratios = vec![1.0];
    let mut offsets = vec![0.0];
    for i in 1..j_groups {
        oracle.reset_comparison_state();
        let rs = amplitude_ratio_search(
            oracle,
            &patterns.column(i),
            &patterns.column(0),
            &p_vectors[i],
            &p_vectors[0],
            p_b,
            params.tol_rel,
        )?;
        ledger.ratio_bits.push(rs.bits);

        let ps = phase_offset_search(
            oracle,
            &patterns.column(i),
            &patterns.column(0),
            &p_vectors[i],
            &p_vectors[0],
            rs.ratio,
            p_b,
            params.grid_deg,
        )
        .map_err(|e| match e {
            Error::PhaseIndeterminate(msg) => {
                Error::PhaseIndeterminate(format!("pattern {}: {msg}", i + 1))
            }
            other => other,
        })?;
        ledger.phase_bits.push(ps.bits);

        ratios.push(rs.ratio);
        offsets.push(ps.offset);
    }

    let scale = ScaleFactors {
        ratios,
        phase_offsets: offsets,
    };
    let h_bar_c = assemble_estimate(&p_vectors, &scale, &patterns)?;
    Ok(CascadedEstimate {
        h_bar_c,
        p_vectors,
        scale,
        ledger,
    })
}
