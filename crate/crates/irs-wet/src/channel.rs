//! Physical layer of the simulated link: geometry and path loss, Rayleigh
//! fading, the cascaded transmitter-surface-receiver channel, element
//! grouping, and the harvested-energy functional.
//!
//! Everything here is immutable after construction and pure given a seed, so
//! values can be shared freely across threads.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cplx, hermitian_eigen, is_hermitian, trace_re, C64, CMat, CVec};

/// Node placement and large-scale propagation parameters. Coordinates are
/// planar (meters); `ref_gain` is the linear channel power gain at
/// `ref_distance`.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub et: [f64; 2],
    pub irs: [f64; 2],
    pub er: [f64; 2],
    pub ref_gain: f64,
    pub ref_distance: f64,
    pub pathloss_exp: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Geometry {
    pub fn new(
        et: [f64; 2],
        irs: [f64; 2],
        er: [f64; 2],
        ref_gain: f64,
        ref_distance: f64,
        pathloss_exp: f64,
    ) -> Result<Self> {
        let g = Geometry {
            et,
            irs,
            er,
            ref_gain,
            ref_distance,
            pathloss_exp,
        };
        if !(g.et_irs_distance() > 0.0) || !(g.irs_er_distance() > 0.0) || !(dist(et, er) > 0.0) {
            return Err(Error::Domain("node positions must be pairwise distinct".into()));
        }
        if !(ref_gain > 0.0) {
            return Err(Error::Domain(format!("reference gain must be > 0, got {ref_gain}")));
        }
        if !(ref_distance > 0.0) {
            return Err(Error::Domain(format!(
                "reference distance must be > 0, got {ref_distance}"
            )));
        }
        if !(pathloss_exp >= 0.0) {
            return Err(Error::Domain(format!(
                "path loss exponent must be >= 0, got {pathloss_exp}"
            )));
        }
        Ok(g)
    }

    /// The indoor layout used throughout the bundled experiment scenarios:
    /// transmitter at the origin, surface at (5, 2) m, receiver at (5, 0) m,
    /// -30 dB reference gain at 1 m, exponent 2.2.
    pub fn default_indoor() -> Self {
        Geometry::new([0.0, 0.0], [5.0, 2.0], [5.0, 0.0], 1e-3, 1.0, 2.2)
            .expect("default geometry is valid")
    }

    pub fn et_irs_distance(&self) -> f64 {
        dist(self.et, self.irs)
    }

    pub fn irs_er_distance(&self) -> f64 {
        dist(self.irs, self.er)
    }
}

/// Large-scale power gain `ref_gain * (d / ref_distance)^(-pathloss_exp)`.
pub fn path_loss(d: f64, geom: &Geometry) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be > 0, got {d}")));
    }
    Ok(geom.ref_gain * (d / geom.ref_distance).powf(-geom.pathloss_exp))
}

/// One fading realization of the link. `g` is the transmitter-to-surface
/// matrix (N x M_t), `h_r` the surface-to-receiver vector (length N), and
/// `h_c` the cascaded matrix whose row i is conj(h_r[i]) times row i of `g`.
///
/// This is genie state: optimizers never see it, only the feedback oracle and
/// the reporting layer do.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    g: CMat,
    h_r: CVec,
    h_c: CMat,
}

impl ChannelRealization {
    /// Assembles the cascaded matrix from its two hops.
    pub fn from_parts(g: CMat, h_r: CVec) -> Result<Self> {
        if g.nrows() != h_r.len() {
            return Err(Error::Config(format!(
                "surface dimension mismatch: g has {} rows, h_r has {} entries",
                g.nrows(),
                h_r.len()
            )));
        }
        if g.nrows() == 0 || g.ncols() == 0 {
            return Err(Error::Config("channel dimensions must be at least 1".into()));
        }
        let mut h_c = g.clone();
        for i in 0..g.nrows() {
            let c = h_r[i].conj();
            for j in 0..g.ncols() {
                h_c[(i, j)] *= c;
            }
        }
        Ok(ChannelRealization { g, h_r, h_c })
    }

    pub fn n_elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.g.ncols()
    }

    pub fn et_irs(&self) -> &CMat {
        &self.g
    }

    pub fn irs_er(&self) -> &CVec {
        &self.h_r
    }

    pub fn cascaded(&self) -> &CMat {
        &self.h_c
    }

    /// Writes the realization as a flat CSV of real/imag parts, suitable for
    /// reproducibility archives. Format: `matrix,row,col,re,im` with matrix
    /// in {g, h_r}.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "matrix,row,col,re,im")?;
        for i in 0..self.g.nrows() {
            for j in 0..self.g.ncols() {
                let z = self.g[(i, j)];
                writeln!(w, "g,{},{},{:.17e},{:.17e}", i, j, z.re, z.im)?;
            }
        }
        for i in 0..self.h_r.len() {
            let z = self.h_r[i];
            writeln!(w, "h_r,{},0,{:.17e},{:.17e}", i, z.re, z.im)?;
        }
        Ok(())
    }

    /// Reads a realization written by [`ChannelRealization::write_csv`].
    pub fn read_csv<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut g_entries = Vec::new();
        let mut h_entries = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("matrix")) {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 5 {
                return Err(Error::Parse(format!(
                    "channel CSV line {}: expected 5 fields, got {}",
                    lineno + 1,
                    parts.len()
                )));
            }
            let fld = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("channel CSV line {}: {e}", lineno + 1)))
            };
            let row: usize = parts[1]
                .parse()
                .map_err(|e| Error::Parse(format!("channel CSV line {}: {e}", lineno + 1)))?;
            let col: usize = parts[2]
                .parse()
                .map_err(|e| Error::Parse(format!("channel CSV line {}: {e}", lineno + 1)))?;
            let z = cplx(fld(parts[3])?, fld(parts[4])?);
            match parts[0] {
                "g" => g_entries.push((row, col, z)),
                "h_r" => h_entries.push((row, z)),
                other => {
                    return Err(Error::Parse(format!(
                        "channel CSV line {}: unknown matrix tag '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        let n = h_entries.len();
        let m_t = g_entries
            .iter()
            .map(|&(_, c, _)| c + 1)
            .max()
            .unwrap_or(0);
        if n == 0 || m_t == 0 || g_entries.len() != n * m_t {
            return Err(Error::Parse("channel CSV is incomplete".into()));
        }
        let mut g = CMat::zeros(n, m_t);
        for (r0, c0, z) in g_entries {
            g[(r0, c0)] = z;
        }
        let mut h_r = CVec::zeros(n);
        for (r0, z) in h_entries {
            h_r[r0] = z;
        }
        ChannelRealization::from_parts(g, h_r)
    }
}

fn cscg<R: Rng>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cplx(s * re, s * im)
}

/// Draws a Rayleigh-faded realization: each entry is circularly symmetric
/// complex Gaussian with per-hop variance given by the path loss of the hop.
/// Deterministic for a fixed `(geometry, n, m_t, seed)` tuple.
pub fn sample_channels(geom: &Geometry, n: usize, m_t: usize, seed: u64) -> Result<ChannelRealization> {
    if n < 1 || m_t < 1 {
        return Err(Error::Config(format!(
            "channel dimensions must be at least 1, got n={n}, m_t={m_t}"
        )));
    }
    let var_g = path_loss(geom.et_irs_distance(), geom)?;
    let var_h = path_loss(geom.irs_er_distance(), geom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMat::from_fn(n, m_t, |_, _| cscg(&mut rng, var_g));
    let h_r = DVector::from_fn(n, |_, _| cscg(&mut rng, var_h));
    ChannelRealization::from_parts(g, h_r)
}

/// Row-block sums of the cascaded channel under equal-size element grouping:
/// row i is the sum of rows iK..(i+1)K of the cascaded matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedChannel {
    h_bar_c: CMat,
    group_size: usize,
}

impl GroupedChannel {
    pub fn matrix(&self) -> &CMat {
        &self.h_bar_c
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn group_count(&self) -> usize {
        self.h_bar_c.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.h_bar_c.ncols()
    }

    /// Effective transmitter-side channel `H^H v` for a reflection setting.
    pub fn effective_vector(&self, v: &ReflectionConfig) -> Result<CVec> {
        if v.len() != self.group_count() {
            return Err(Error::Config(format!(
                "reflection has {} groups, channel has {}",
                v.len(),
                self.group_count()
            )));
        }
        Ok(self.h_bar_c.adjoint() * v.coefficients())
    }
}

pub fn group_composite(ch: &ChannelRealization, k: usize) -> Result<GroupedChannel> {
    let n = ch.n_elements();
    if k == 0 || n % k != 0 {
        return Err(Error::Config(format!(
            "group size {k} does not divide element count {n}"
        )));
    }
    let j = n / k;
    let mut h_bar = CMat::zeros(j, ch.antennas());
    for gi in 0..j {
        for r in gi * k..(gi + 1) * k {
            for c in 0..ch.antennas() {
                h_bar[(gi, c)] += ch.cascaded()[(r, c)];
            }
        }
    }
    Ok(GroupedChannel {
        h_bar_c: h_bar,
        group_size: k,
    })
}

const HERM_TOL: f64 = 1e-12;

/// What the transmitter radiates during one interval: either a full covariance
/// or an explicit beam `sqrt(power) * direction` with unit `direction` (the
/// rank-1 covariance `power * d d^H`).
#[derive(Debug, Clone, PartialEq)]
pub enum TransmitConfig {
    Covariance(CMat),
    Beam { direction: CVec, power: f64 },
}

impl TransmitConfig {
    /// Validates Hermitian symmetry, positive semidefiniteness and the power
    /// budget, then wraps the covariance.
    pub fn covariance(q: CMat, p_b: f64) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::Domain("covariance must be square".into()));
        }
        if !is_hermitian(&q, HERM_TOL) {
            return Err(Error::Domain("covariance must be Hermitian".into()));
        }
        let tr = trace_re(&q);
        if tr > p_b * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "covariance trace {tr} exceeds power budget {p_b}"
            )));
        }
        let (vals, _) = hermitian_eigen(&q);
        if vals[0] < -1e-10 * tr.max(f64::MIN_POSITIVE) {
            return Err(Error::Domain(format!(
                "covariance has negative eigenvalue {}",
                vals[0]
            )));
        }
        Ok(TransmitConfig::Covariance(q))
    }

    /// A single beam at the given transmit power; the direction is normalized.
    pub fn beam(direction: CVec, power: f64, p_b: f64) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0) {
            return Err(Error::Degenerate("beam direction must be nonzero".into()));
        }
        if !(power >= 0.0) || power > p_b * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "beam power {power} outside [0, {p_b}]"
            )));
        }
        Ok(TransmitConfig::Beam {
            direction: direction / cplx(norm, 0.0),
            power,
        })
    }

    /// Equal power on every antenna: `(p_b / m_t) I`.
    pub fn isotropic(m_t: usize, p_b: f64) -> Self {
        TransmitConfig::Covariance(CMat::identity(m_t, m_t) * cplx(p_b / m_t as f64, 0.0))
    }

    pub fn antennas(&self) -> usize {
        match self {
            TransmitConfig::Covariance(q) => q.nrows(),
            TransmitConfig::Beam { direction, .. } => direction.len(),
        }
    }

    /// Materializes the covariance matrix.
    pub fn covariance_matrix(&self) -> CMat {
        match self {
            TransmitConfig::Covariance(q) => q.clone(),
            TransmitConfig::Beam { direction, power } => {
                (direction * direction.adjoint()) * cplx(*power, 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectionMode {
    UnitModulus,
    Ternary,
}

/// Per-group reflection coefficients: unit-modulus phases, or composite
/// patterns over {-1, 0, +1} where 0 switches the group off.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionConfig {
    coefficients: CVec,
    mode: ReflectionMode,
}

impl ReflectionConfig {
    pub fn unit_modulus(coefficients: CVec) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Config("reflection must have at least one group".into()));
        }
        for (i, z) in coefficients.iter().enumerate() {
            if (z.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "coefficient {i} has modulus {} (must be 1)",
                    z.norm()
                )));
            }
        }
        Ok(ReflectionConfig {
            coefficients,
            mode: ReflectionMode::UnitModulus,
        })
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        let coefficients = CVec::from_iterator(phases.len(), phases.iter().map(|&t| cplx(t.cos(), t.sin())));
        ReflectionConfig {
            coefficients,
            mode: ReflectionMode::UnitModulus,
        }
    }

    pub fn ternary(entries: &[i8]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("reflection must have at least one group".into()));
        }
        for (i, &e) in entries.iter().enumerate() {
            if !(-1..=1).contains(&e) {
                return Err(Error::Domain(format!(
                    "ternary entry {i} is {e}, must be -1, 0, or +1"
                )));
            }
        }
        Ok(ReflectionConfig {
            coefficients: CVec::from_iterator(entries.len(), entries.iter().map(|&e| cplx(e as f64, 0.0))),
            mode: ReflectionMode::Ternary,
        })
    }

    /// Elementwise average `(a + b)/2` of two ±1 patterns; entries land in
    /// {-1, 0, +1}.
    pub fn composite(a: &ReflectionConfig, b: &ReflectionConfig) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Config("pattern lengths differ".into()));
        }
        let mut entries = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let (x, y) = (a.coefficients[i], b.coefficients[i]);
            for z in [x, y] {
                if z.im.abs() > 1e-12 || (z.re.abs() - 1.0).abs() > 1e-12 {
                    return Err(Error::Domain(
                        "composite requires ±1 patterns as inputs".into(),
                    ));
                }
            }
            let avg = (x.re + y.re) / 2.0;
            entries.push(avg.round() as i8);
        }
        ReflectionConfig::ternary(&entries)
    }

    pub fn coefficients(&self) -> &CVec {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn mode(&self) -> ReflectionMode {
        self.mode
    }

    /// Phases in [0, 2π), for reporting.
    pub fn phases(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|z| {
                let t = z.arg();
                if t < 0.0 {
                    t + std::f64::consts::TAU
                } else {
                    t
                }
            })
            .collect()
    }

    /// Expands group coefficients to per-element coefficients (block-constant).
    pub fn expand(&self, group_size: usize) -> CVec {
        let n = self.len() * group_size;
        CVec::from_fn(n, |i, _| self.coefficients[i / group_size])
    }
}

/// Energy harvested over one interval:
/// `eta * t_s * (H^H v)^H Q (H^H v)`, clamped at zero against rounding.
pub fn harvested_energy(
    q: &TransmitConfig,
    v: &ReflectionConfig,
    gch: &GroupedChannel,
    eta: f64,
    t_s: f64,
) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("efficiency must be in (0, 1], got {eta}")));
    }
    if !(t_s > 0.0) {
        return Err(Error::Domain(format!("interval must be > 0, got {t_s}")));
    }
    if q.antennas() != gch.antennas() {
        return Err(Error::Config(format!(
            "transmit config has {} antennas, channel has {}",
            q.antennas(),
            gch.antennas()
        )));
    }
    let e = gch.effective_vector(v)?;
    let quad = match q {
        TransmitConfig::Covariance(m) => (e.adjoint() * m * &e)[(0, 0)].re,
        TransmitConfig::Beam { direction, power } => {
            let ip = (direction.adjoint() * &e)[(0, 0)];
            power * ip.norm_sqr()
        }
    };
    Ok((eta * t_s * quad).max(0.0))
}

/// Splits a PSD covariance into beams `sqrt(lambda_m) u_m`, dropping
/// eigenvalues below 1e-10 of the trace. The outer-product sum of the beams
/// reconstructs the covariance.
pub fn decompose_covariance(q: &CMat) -> Result<Vec<CVec>> {
    if q.nrows() != q.ncols() || !is_hermitian(q, HERM_TOL) {
        return Err(Error::Domain("covariance must be square Hermitian".into()));
    }
    let tr = trace_re(q);
    let (vals, vecs) = hermitian_eigen(q);
    let cutoff = 1e-10 * tr.max(f64::MIN_POSITIVE);
    let mut beams = Vec::new();
    for k in (0..vals.len()).rev() {
        if vals[k] > cutoff {
            beams.push(vecs.column(k).into_owned() * cplx(vals[k].sqrt(), 0.0));
        }
    }
    Ok(beams)
}

/// The rank-1 target `eta * (H^H v)(H^H v)^H` the cutting-plane learner sees
/// through the feedback bits. Genie-only: used by metrics and tests.
pub fn effective_outer(gch: &GroupedChannel, v: &ReflectionConfig, eta: f64) -> Result<CMat> {
    let e = gch.effective_vector(v)?;
    Ok((&e * e.adjoint()) * cplx(eta, 0.0))
}

/// The quadratic-form matrix `eta * (p_b/m_t) * H H^H` that the phase
/// perturbation scheme implicitly climbs. Genie-only diagnostic.
pub fn phase_objective_matrix(gch: &GroupedChannel, p_b: f64, eta: f64) -> CMat {
    let m_t = gch.antennas() as f64;
    (gch.matrix() * gch.matrix().adjoint()) * cplx(eta * p_b / m_t, 0.0)
}
