//! Batch experiment runner: parses a plain-text scenario file, runs seeded
//! independent trials in a worker pool, and writes deterministic CSV tables
//! with per-trial plus mean/median rows.
//!
//! The configuration format is flat `key = value` lines under `[section]`
//! headers with `#` comments. Powers may be given in dBm (`p_b_dbm`) or watts
//! (`p_b_watts`); the dBm conversion happens here at the boundary and all
//! internals are linear watts/joules.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::accpm::{run_accpm, AccpmOptions};
use crate::beamforming::joint_design_from_estimate;
use crate::channel::{
    group_composite, phase_objective_matrix, sample_channels, Geometry, ReflectionConfig,
    TransmitConfig,
};
use crate::distributed::{full_scheme, stationarity_residual, DbParams};
use crate::error::{Error, Result};
use crate::estimator::{estimate_cascaded_channel, EstimatorParams, PatternSet};
use crate::metrics::{
    baseline_beam_training, baseline_random_bf, baseline_random_irs_mrt, ne_cascaded, ne_matrix,
};
use crate::oracle::FeedbackOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Per-pattern learning curve only (normalized error versus interval).
    Accpm,
    /// Full channel-estimation pipeline plus the joint design it enables.
    Ce,
    /// Two-stage distributed scheme with traces.
    Dbf,
    /// Random phases, isotropic covariance.
    Rbf,
    /// Random phases, matched full-power beam.
    RandomIrsMrt,
    /// DFT-codebook exhaustive beam training.
    Bt,
    /// Every scheme side by side (one energy row per scheme).
    All,
}

impl Scheme {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "accpm" => Scheme::Accpm,
            "ce" => Scheme::Ce,
            "dbf" => Scheme::Dbf,
            "rbf" => Scheme::Rbf,
            "random_irs_mrt" => Scheme::RandomIrsMrt,
            "bt" => Scheme::Bt,
            "all" => Scheme::All,
            other => {
                return Err(Error::Parse(format!(
                    "scheme: unknown value '{other}' (expected accpm, ce, dbf, rbf, random_irs_mrt, bt, or all)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct CeConfig {
    pub n_a: Vec<usize>,
    pub tol_rel: f64,
    pub grid_deg: f64,
    pub coarse_step_deg: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone)]
pub struct DbfConfig {
    pub n_d: Vec<usize>,
    pub delta0_deg: Vec<f64>,
    pub n_a: usize,
    /// Emit a trace row every this many steps; 0 disables the trace file.
    pub trace_stride: usize,
    /// Emit per-group phase-versus-target rows (the convergence picture).
    pub phase_trace: bool,
    pub anneal: bool,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub scheme: Scheme,
    pub trials: usize,
    pub base_seed: u64,
    pub geometry: Geometry,
    pub n_elements: usize,
    pub m_t: Vec<usize>,
    pub group_size: Vec<usize>,
    pub p_b: f64,
    pub eta: f64,
    pub t_s: f64,
    pub ce: CeConfig,
    pub dbf: DbfConfig,
    smoke: BTreeMap<String, String>,
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::Parse(format!("[{section}] {key}: cannot parse '{raw}'")))
}

fn parse_list<T: std::str::FromStr>(section: &str, key: &str, raw: &str) -> Result<Vec<T>> {
    let items: Result<Vec<T>> = raw
        .split(',')
        .map(|piece| parse_num::<T>(section, key, piece))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Parse(format!("[{section}] {key}: empty list")));
    }
    Ok(items)
}

fn parse_pair(section: &str, key: &str, raw: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = parse_list(section, key, raw)?;
    if v.len() != 2 {
        return Err(Error::Parse(format!(
            "[{section}] {key}: expected 'x,y', got '{raw}'"
        )));
    }
    Ok([v[0], v[1]])
}

fn parse_bool(section: &str, key: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Parse(format!(
            "[{section}] {key}: expected true/false, got '{other}'"
        ))),
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

type SectionMap = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<SectionMap> {
    let mut sections: SectionMap = BTreeMap::new();
    let mut current = String::from("scenario");
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(Error::Parse(format!(
                    "line {}: malformed section header '{line}'",
                    lineno + 1
                )));
            }
            current = line[1..line.len() - 1].trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse(format!(
                "line {}: expected 'key = value', got '{line}'",
                lineno + 1
            )));
        };
        sections
            .entry(current.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let sections = parse_sections(text)?;
        Scenario::from_sections(&sections)
    }

    fn from_sections(sections: &SectionMap) -> Result<Self> {
        let empty = BTreeMap::new();
        let get = |sec: &str| sections.get(sec).unwrap_or(&empty);

        let sc = get("scenario");
        let name = sc.get("name").cloned().unwrap_or_else(|| "scenario".into());
        let scheme = Scheme::parse(
            sc.get("scheme")
                .ok_or_else(|| Error::Parse("[scenario] scheme is required".into()))?,
        )?;
        let trials = match sc.get("trials") {
            Some(v) => parse_num("scenario", "trials", v)?,
            None => 10usize,
        };
        let base_seed = match sc.get("base_seed") {
            Some(v) => parse_num("scenario", "base_seed", v)?,
            None => 1u64,
        };

        let sys = get("system");
        let n_elements = match sys.get("n_elements") {
            Some(v) => parse_num("system", "n_elements", v)?,
            None => 64usize,
        };
        let m_t = match sys.get("m_t") {
            Some(v) => parse_list("system", "m_t", v)?,
            None => vec![4usize],
        };
        let group_size = match sys.get("group_size") {
            Some(v) => parse_list("system", "group_size", v)?,
            None => vec![8usize],
        };
        let p_b = match (sys.get("p_b_watts"), sys.get("p_b_dbm")) {
            (Some(w), _) => parse_num("system", "p_b_watts", w)?,
            (None, Some(d)) => dbm_to_watts(parse_num("system", "p_b_dbm", d)?),
            (None, None) => 1.0, // 30 dBm
        };
        let eta = match sys.get("eta") {
            Some(v) => parse_num("system", "eta", v)?,
            None => 0.5,
        };
        let t_s = match sys.get("t_s") {
            Some(v) => parse_num("system", "t_s", v)?,
            None => 1.0,
        };
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Parse(format!("[system] eta must be in (0, 1], got {eta}")));
        }
        if !(p_b > 0.0) {
            return Err(Error::Parse(format!("[system] power budget must be > 0, got {p_b}")));
        }
        for &k in &group_size {
            if k == 0 || n_elements % k != 0 {
                return Err(Error::Parse(format!(
                    "[system] group_size {k} does not divide n_elements {n_elements}"
                )));
            }
            let j = n_elements / k;
            if j & (j - 1) != 0 {
                return Err(Error::Parse(format!(
                    "[system] group_size {k} gives {j} groups, which is not a power of two"
                )));
            }
        }

        let geo = get("geometry");
        let et = match geo.get("et") {
            Some(v) => parse_pair("geometry", "et", v)?,
            None => [0.0, 0.0],
        };
        let irs = match geo.get("irs") {
            Some(v) => parse_pair("geometry", "irs", v)?,
            None => [5.0, 2.0],
        };
        let er = match geo.get("er") {
            Some(v) => parse_pair("geometry", "er", v)?,
            None => [5.0, 0.0],
        };
        let ref_gain = match (geo.get("l0_linear"), geo.get("l0_db")) {
            (Some(l), _) => parse_num("geometry", "l0_linear", l)?,
            (None, Some(db)) => 10f64.powf(parse_num::<f64>("geometry", "l0_db", db)? / 10.0),
            (None, None) => 1e-3, // -30 dB
        };
        let d0 = match geo.get("d0") {
            Some(v) => parse_num("geometry", "d0", v)?,
            None => 1.0,
        };
        let alpha = match geo.get("alpha") {
            Some(v) => parse_num("geometry", "alpha", v)?,
            None => 2.2,
        };
        let geometry = Geometry::new(et, irs, er, ref_gain, d0, alpha)
            .map_err(|e| Error::Parse(format!("[geometry] {e}")))?;

        let ce_sec = get("ce");
        let ce = CeConfig {
            n_a: match ce_sec.get("n_a") {
                Some(v) => parse_list("ce", "n_a", v)?,
                None => vec![130usize],
            },
            tol_rel: match ce_sec.get("tol_rel") {
                Some(v) => parse_num("ce", "tol_rel", v)?,
                None => 1e-3,
            },
            grid_deg: match ce_sec.get("grid_deg") {
                Some(v) => parse_num("ce", "grid_deg", v)?,
                None => 0.5,
            },
            coarse_step_deg: match ce_sec.get("coarse_step_deg") {
                Some(v) => parse_num("ce", "coarse_step_deg", v)?,
                None => 5.0,
            },
            restarts: match ce_sec.get("restarts") {
                Some(v) => parse_num("ce", "restarts", v)?,
                None => 8usize,
            },
        };

        let dbf_sec = get("dbf");
        let dbf = DbfConfig {
            n_d: match dbf_sec.get("n_d") {
                Some(v) => parse_list("dbf", "n_d", v)?,
                None => vec![5000usize],
            },
            delta0_deg: match dbf_sec.get("delta0_deg") {
                Some(v) => parse_list("dbf", "delta0_deg", v)?,
                None => vec![2.0],
            },
            n_a: match dbf_sec.get("n_a") {
                Some(v) => parse_num("dbf", "n_a", v)?,
                None => 130usize,
            },
            trace_stride: match dbf_sec.get("trace_stride") {
                Some(v) => parse_num("dbf", "trace_stride", v)?,
                None => 0usize,
            },
            phase_trace: match dbf_sec.get("phase_trace") {
                Some(v) => parse_bool("dbf", "phase_trace", v)?,
                None => false,
            },
            anneal: match dbf_sec.get("anneal") {
                Some(v) => parse_bool("dbf", "anneal", v)?,
                None => false,
            },
        };

        let smoke = get("smoke").clone();

        Ok(Scenario {
            name,
            scheme,
            trials,
            base_seed,
            geometry,
            n_elements,
            m_t,
            group_size,
            p_b,
            eta,
            t_s,
            ce,
            dbf,
            smoke,
        })
    }

    /// Applies the `[smoke]` overrides (dotted keys address the ce/dbf
    /// sections, bare keys the scenario itself).
    pub fn apply_smoke(&mut self) -> Result<()> {
        let smoke = self.smoke.clone();
        for (key, value) in &smoke {
            match key.as_str() {
                "trials" => self.trials = parse_num("smoke", key, value)?,
                "ce.n_a" => self.ce.n_a = parse_list("smoke", key, value)?,
                "dbf.n_d" => self.dbf.n_d = parse_list("smoke", key, value)?,
                "dbf.n_a" => self.dbf.n_a = parse_num("smoke", key, value)?,
                "dbf.delta0_deg" => self.dbf.delta0_deg = parse_list("smoke", key, value)?,
                "dbf.trace_stride" => self.dbf.trace_stride = parse_num("smoke", key, value)?,
                "m_t" => self.m_t = parse_list("smoke", key, value)?,
                "group_size" => self.group_size = parse_list("smoke", key, value)?,
                other => {
                    return Err(Error::Parse(format!(
                        "[smoke] unknown override '{other}'"
                    )))
                }
            }
        }
        Ok(())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    Scenario::parse(&text)
}

/// One CSV value; floats are rendered with 17 significant digits so reruns
/// are byte-identical and lossless.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Str(s) => s.clone(),
        }
    }

    fn as_float(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Str(_) => None,
        }
    }
}

/// A table with `key_cols` leading group-by columns, then a `trial` column,
/// then value columns that get mean/median aggregate rows.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub key_cols: usize,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn render_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.headers.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        for agg_row in self.aggregate_rows() {
            let cells: Vec<String> = agg_row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    fn aggregate_rows(&self) -> Vec<Vec<Cell>> {
        let trial_col = self.key_cols;
        let mut groups: BTreeMap<Vec<String>, Vec<&Vec<Cell>>> = BTreeMap::new();
        for row in &self.rows {
            let key: Vec<String> = row[..self.key_cols].iter().map(Cell::render).collect();
            groups.entry(key).or_default().push(row);
        }
        let mut out = Vec::new();
        for rows in groups.values() {
            if rows.len() < 2 {
                continue;
            }
            for stat in ["mean", "median"] {
                let mut agg = rows[0][..self.key_cols].to_vec();
                agg.push(Cell::Str(stat.into()));
                for col in trial_col + 1..self.headers.len() {
                    let mut vals: Vec<f64> = rows
                        .iter()
                        .filter_map(|r| r[col].as_float())
                        .collect();
                    if vals.is_empty() {
                        agg.push(Cell::Str(String::new()));
                        continue;
                    }
                    let v = if stat == "mean" {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    } else {
                        vals.sort_by(f64::total_cmp);
                        let n = vals.len();
                        if n % 2 == 1 {
                            vals[n / 2]
                        } else {
                            0.5 * (vals[n / 2 - 1] + vals[n / 2])
                        }
                    };
                    agg.push(Cell::Float(v));
                }
                out.push(agg);
            }
        }
        out
    }
}

fn trial_channel_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

fn trial_rng(base: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_channel_seed(base, trial) ^ 0xA1607A1607)
}

struct TrialOutput {
    tables: Vec<(String, Vec<Vec<Cell>>)>,
}

fn run_trial(sc: &Scenario, trial: usize) -> Result<TrialOutput> {
    let seed = trial_channel_seed(sc.base_seed, trial);
    let mut rng = trial_rng(sc.base_seed, trial);
    let mut tables: Vec<(String, Vec<Vec<Cell>>)> = Vec::new();

    let mut accpm_rows = Vec::new();
    let mut est_rows = Vec::new();
    let mut energy_rows = Vec::new();
    let mut trace_rows = Vec::new();
    let mut phase_rows = Vec::new();
    let mut dbf_energy_rows = Vec::new();

    for &m_t in &sc.m_t {
        for &k in &sc.group_size {
            let ch = sample_channels(&sc.geometry, sc.n_elements, m_t, seed)?;
            let gch = group_composite(&ch, k)?;
            let j = gch.group_count();
            let truth = gch.matrix().clone();
            let needs_ideal = matches!(sc.scheme, Scheme::Ce | Scheme::Dbf);
            let ideal_energy = if needs_ideal {
                let mut g_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1dea);
                let design =
                    joint_design_from_estimate(&truth, sc.p_b, sc.eta, sc.ce.restarts, &mut g_rng)?;
                let oracle = FeedbackOracle::new(gch.clone(), sc.eta, sc.t_s)?;
                let q = TransmitConfig::covariance(design.covariance.clone(), sc.p_b)?;
                oracle.genie().energy(&q, &design.reflection)?
            } else {
                0.0
            };

            match sc.scheme {
                Scheme::Accpm => {
                    let n_a_max = *sc.ce.n_a.iter().max().unwrap();
                    let v = PatternSet::hadamard(j)?.column(0);
                    let p_true = crate::channel::effective_outer(&gch, &v, sc.eta)?;
                    let mut oracle = FeedbackOracle::new(gch.clone(), sc.eta, sc.t_s)?;
                    let run = run_accpm(
                        &mut oracle,
                        &v,
                        n_a_max,
                        sc.p_b,
                        m_t,
                        &mut rng,
                        &AccpmOptions::default(),
                    )?;
                    for it in &run.trace {
                        let ne = ne_matrix(it.center.as_ref().unwrap(), &p_true)?;
                        accpm_rows.push(vec![
                            Cell::Int(m_t as i64),
                            Cell::Int(k as i64),
                            Cell::Int(it.interval as i64),
                            Cell::Int(trial as i64),
                            Cell::Float(ne),
                            Cell::Float(it.residual),
                            Cell::Int(it.bits_spent as i64),
                        ]);
                    }
                }
                Scheme::Ce => {
                    for &n_a in &sc.ce.n_a {
                        let mut oracle = FeedbackOracle::new(gch.clone(), sc.eta, sc.t_s)?;
                        let params = EstimatorParams {
                            n_a,
                            tol_rel: sc.ce.tol_rel,
                            grid_deg: sc.ce.grid_deg,
                            coarse_step_deg: sc.ce.coarse_step_deg,
                        };
                        let est =
                            estimate_cascaded_channel(&mut oracle, j, &params, sc.p_b, m_t, &mut rng)?;
                        let ne = ne_cascaded(&est.h_bar_c, &truth, 0.5)?;
                        let design = joint_design_from_estimate(
                            &est.h_bar_c,
                            sc.p_b,
                            sc.eta,
                            sc.ce.restarts,
                            &mut rng,
                        )?;
                        let q = TransmitConfig::covariance(design.covariance.clone(), sc.p_b)?;
                        let energy = oracle.genie().energy(&q, &design.reflection)?;
                        let rand_mrt =
                            baseline_random_irs_mrt(&gch, sc.p_b, sc.eta, sc.t_s, seed ^ 0x3ba5e)?;
                        est_rows.push(vec![
                            Cell::Int(m_t as i64),
                            Cell::Int(k as i64),
                            Cell::Int(n_a as i64),
                            Cell::Int(trial as i64),
                            Cell::Float(ne),
                            Cell::Int(est.ledger.accpm_bits.iter().sum::<u64>() as i64),
                            Cell::Int(est.ledger.ratio_bits.iter().sum::<u64>() as i64),
                            Cell::Int(est.ledger.phase_bits.iter().sum::<u64>() as i64),
                            Cell::Int(est.ledger.total() as i64),
                            Cell::Float(energy),
                            Cell::Float(ideal_energy),
                            Cell::Float(rand_mrt),
                            Cell::Float(energy / sc.t_s),
                        ]);
                    }
                }
                Scheme::Dbf => {
                    for &delta0_deg in &sc.dbf.delta0_deg {
                        for &n_d in &sc.dbf.n_d {
                            let mut oracle = FeedbackOracle::new(gch.clone(), sc.eta, sc.t_s)?;
                            let mut params = DbParams::new(delta0_deg.to_radians());
                            params.anneal = sc.dbf.anneal;
                            params.record_trace =
                                sc.dbf.trace_stride > 0 || sc.dbf.phase_trace;
                            let res = full_scheme(
                                &mut oracle,
                                n_d,
                                &params,
                                sc.dbf.n_a,
                                sc.p_b,
                                m_t,
                                &mut rng,
                            )?;
                            let rbf =
                                baseline_random_bf(&gch, sc.p_b, m_t, sc.eta, sc.t_s, seed ^ 0x3ba5e)?;
                            dbf_energy_rows.push(vec![
                                Cell::Int(m_t as i64),
                                Cell::Int(k as i64),
                                Cell::Float(delta0_deg),
                                Cell::Int(n_d as i64),
                                Cell::Int(sc.dbf.n_a as i64),
                                Cell::Int(trial as i64),
                                Cell::Float(res.energy),
                                Cell::Float(ideal_energy),
                                Cell::Float(rbf),
                                Cell::Int((res.stage1_bits + res.stage2_bits) as i64),
                            ]);

                            if params.record_trace {
                                let phi = phase_objective_matrix(&gch, sc.p_b, sc.eta);
                                let q_iso = TransmitConfig::isotropic(m_t, sc.p_b);
                                let genie_oracle =
                                    FeedbackOracle::new(gch.clone(), sc.eta, sc.t_s)?;
                                let genie = genie_oracle.genie();
                                let stride = sc.dbf.trace_stride.max(1);
                                let mut theta = vec![0.0; j];
                                let mut y_best = 0.0_f64;
                                for row in &res.db_state.trace {
                                    let y = genie.energy(
                                        &q_iso,
                                        &ReflectionConfig::from_phases(&row.probe_theta),
                                    )?;
                                    if row.kept {
                                        theta = row.probe_theta.clone();
                                    }
                                    y_best = y_best.max(y);
                                    let emit = row.step % stride == 0 || row.step == 1;
                                    if sc.dbf.trace_stride > 0 && emit {
                                        let resid = stationarity_residual(&theta, &phi)?;
                                        trace_rows.push(vec![
                                            Cell::Int(m_t as i64),
                                            Cell::Int(k as i64),
                                            Cell::Float(delta0_deg),
                                            Cell::Int(n_d as i64),
                                            Cell::Int(trial as i64),
                                            Cell::Int(row.step as i64),
                                            Cell::Int(row.kept as i64),
                                            Cell::Float(y_best),
                                            Cell::Float(resid),
                                        ]);
                                    }
                                    if sc.dbf.phase_trace && emit {
                                        let targets =
                                            crate::distributed::db_theoretical_targets(&theta, &phi)?;
                                        for (g, (t, tgt)) in
                                            theta.iter().zip(targets.iter()).enumerate()
                                        {
                                            phase_rows.push(vec![
                                                Cell::Int(m_t as i64),
                                                Cell::Int(k as i64),
                                                Cell::Float(delta0_deg),
                                                Cell::Int(n_d as i64),
                                                Cell::Int(trial as i64),
                                                Cell::Int(row.step as i64),
                                                Cell::Int(g as i64),
                                                Cell::Float(
                                                    t.rem_euclid(std::f64::consts::TAU)
                                                        .to_degrees(),
                                                ),
                                                match tgt {
                                                    Some(v) => Cell::Float(v.to_degrees()),
                                                    None => Cell::Str(String::new()),
                                                },
                                            ]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Scheme::Rbf => {
                    let e = baseline_random_bf(&gch, sc.p_b, m_t, sc.eta, sc.t_s, seed)?;
                    energy_rows.push(vec![
                        Cell::Int(m_t as i64),
                        Cell::Int(k as i64),
                        Cell::Str("rbf".into()),
                        Cell::Int(trial as i64),
                        Cell::Float(e),
                        Cell::Float(e / sc.t_s),
                    ]);
                }
                Scheme::RandomIrsMrt => {
                    let e = baseline_random_irs_mrt(&gch, sc.p_b, sc.eta, sc.t_s, seed)?;
                    energy_rows.push(vec![
                        Cell::Int(m_t as i64),
                        Cell::Int(k as i64),
                        Cell::Str("random_irs_mrt".into()),
                        Cell::Int(trial as i64),
                        Cell::Float(e),
                        Cell::Float(e / sc.t_s),
                    ]);
                }
                Scheme::Bt => {
                    let e = baseline_beam_training(&gch, sc.p_b, sc.eta, sc.t_s)?;
                    energy_rows.push(vec![
                        Cell::Int(m_t as i64),
                        Cell::Int(k as i64),
                        Cell::Str("bt".into()),
                        Cell::Int(trial as i64),
                        Cell::Float(e),
                        Cell::Float(e / sc.t_s),
                    ]);
                }
                Scheme::All => {
                    let mut oracle = FeedbackOracle::new(gch.clone(), sc.eta, sc.t_s)?;
                    let params = EstimatorParams {
                        n_a: *sc.ce.n_a.first().unwrap(),
                        tol_rel: sc.ce.tol_rel,
                        grid_deg: sc.ce.grid_deg,
                        coarse_step_deg: sc.ce.coarse_step_deg,
                    };
                    let est =
                        estimate_cascaded_channel(&mut oracle, j, &params, sc.p_b, m_t, &mut rng)?;
                    let design = joint_design_from_estimate(
                        &est.h_bar_c,
                        sc.p_b,
                        sc.eta,
                        sc.ce.restarts,
                        &mut rng,
                    )?;
                    let q = TransmitConfig::covariance(design.covariance.clone(), sc.p_b)?;
                    let ce_energy = oracle.genie().energy(&q, &design.reflection)?;

                    let mut oracle = FeedbackOracle::new(gch.clone(), sc.eta, sc.t_s)?;
                    let mut db_params = DbParams::new(sc.dbf.delta0_deg[0].to_radians());
                    db_params.record_trace = false;
                    db_params.anneal = sc.dbf.anneal;
                    let dbf_res = full_scheme(
                        &mut oracle,
                        sc.dbf.n_d[0],
                        &db_params,
                        sc.dbf.n_a,
                        sc.p_b,
                        m_t,
                        &mut rng,
                    )?;

                    let bt = baseline_beam_training(&gch, sc.p_b, sc.eta, sc.t_s)?;
                    let rbf = baseline_random_bf(&gch, sc.p_b, m_t, sc.eta, sc.t_s, seed)?;
                    for (label, e) in [
                        ("ce", ce_energy),
                        ("dbf", dbf_res.energy),
                        ("bt", bt),
                        ("rbf", rbf),
                    ] {
                        energy_rows.push(vec![
                            Cell::Int(m_t as i64),
                            Cell::Int(k as i64),
                            Cell::Str(label.into()),
                            Cell::Int(trial as i64),
                            Cell::Float(e),
                            Cell::Float(e / sc.t_s),
                        ]);
                    }
                }
            }
        }
    }

    if !accpm_rows.is_empty() {
        tables.push(("accpm".into(), accpm_rows));
    }
    if !est_rows.is_empty() {
        tables.push(("estimation".into(), est_rows));
    }
    if !dbf_energy_rows.is_empty() {
        tables.push(("dbf_energy".into(), dbf_energy_rows));
    }
    if !trace_rows.is_empty() {
        tables.push(("dbf_trace".into(), trace_rows));
    }
    if !phase_rows.is_empty() {
        tables.push(("dbf_phases".into(), phase_rows));
    }
    if !energy_rows.is_empty() {
        tables.push(("energy".into(), energy_rows));
    }
    Ok(TrialOutput { tables })
}

fn table_spec(kind: &str) -> (Vec<&'static str>, usize) {
    match kind {
        "accpm" => (
            vec!["m_t", "k", "n_a", "trial", "ne_p", "residual", "bits"],
            3,
        ),
        "estimation" => (
            vec![
                "m_t",
                "k",
                "n_a",
                "trial",
                "ne_h",
                "accpm_bits",
                "ratio_bits",
                "phase_bits",
                "total_bits",
                "energy_real_j",
                "energy_ideal_j",
                "energy_random_irs_mrt_j",
                "power_real_w",
            ],
            3,
        ),
        "dbf_energy" => (
            vec![
                "m_t",
                "k",
                "delta0_deg",
                "n_d",
                "n_a",
                "trial",
                "energy_j",
                "energy_ideal_j",
                "energy_rbf_j",
                "total_bits",
            ],
            5,
        ),
        "dbf_trace" => (
            vec![
                "m_t", "k", "delta0_deg", "n_d", "trial", "step", "kept", "y_best_j", "residual",
            ],
            6,
        ),
        "dbf_phases" => (
            vec![
                "m_t",
                "k",
                "delta0_deg",
                "n_d",
                "trial",
                "step",
                "group",
                "theta_deg",
                "target_deg",
            ],
            7,
        ),
        "energy" => (
            vec!["m_t", "k", "scheme", "trial", "energy_j", "power_w"],
            3,
        ),
        other => unreachable!("unknown table kind {other}"),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub out_dir: Option<PathBuf>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub smoke: bool,
}

#[derive(Debug)]
pub struct RunReport {
    pub scenario: String,
    pub csv_paths: Vec<PathBuf>,
    /// (trial index, error message) for failed trials.
    pub failures: Vec<(usize, String)>,
}

/// Runs every trial of the scenario (in a worker pool), assembles the CSV
/// tables deterministically by trial order, and writes them under the output
/// directory. Failed trials are recorded in `<name>_errors.csv` alongside the
/// partial outputs.
pub fn run_scenario(path: &Path, overrides: &RunOverrides) -> Result<RunReport> {
    let mut sc = load_scenario(path)?;
    if overrides.smoke {
        sc.apply_smoke()?;
    }
    if let Some(t) = overrides.trials {
        sc.trials = t;
    }
    if let Some(s) = overrides.seed {
        sc.base_seed = s;
    }
    if sc.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }

    let out_dir = overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out_dir)?;

    let results: Vec<(usize, Result<TrialOutput>)> = (0..sc.trials)
        .into_par_iter()
        .map(|trial| (trial, run_trial(&sc, trial)))
        .collect();

    let mut tables: BTreeMap<String, Table> = BTreeMap::new();
    let mut failures = Vec::new();
    for (trial, res) in results {
        match res {
            Ok(out) => {
                for (kind, rows) in out.tables {
                    let entry = tables.entry(kind.clone()).or_insert_with(|| {
                        let (headers, key_cols) = table_spec(&kind);
                        Table {
                            name: kind.clone(),
                            headers: headers.into_iter().map(String::from).collect(),
                            key_cols,
                            rows: Vec::new(),
                        }
                    });
                    entry.rows.extend(rows);
                }
            }
            Err(e) => failures.push((trial, e.to_string())),
        }
    }

    let mut csv_paths = Vec::new();
    for table in tables.values() {
        let path = out_dir.join(format!("{}_{}.csv", sc.name, table.name));
        fs::write(&path, table.render_csv())?;
        csv_paths.push(path);
    }
    if !failures.is_empty() {
        let mut text = String::from("trial,error\n");
        for (trial, msg) in &failures {
            let _ = writeln!(text, "{},{}", trial, msg.replace(',', ";"));
        }
        let path = out_dir.join(format!("{}_errors.csv", sc.name));
        fs::write(&path, text)?;
        csv_paths.push(path);
    }

    Ok(RunReport {
        scenario: sc.name.clone(),
        csv_paths,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
[scenario]
name = demo
scheme = rbf
trials = 3
base_seed = 5
[system]
n_elements = 16
m_t = 2,3
group_size = 4
p_b_dbm = 30
eta = 0.5
[geometry]
et = 0,0
irs = 5,2
er = 5,0
l0_db = -30
d0 = 1
alpha = 2.2
[smoke]
trials = 1
";

    #[test]
    fn parses_sample_config() {
        let sc = Scenario::parse(SAMPLE).unwrap();
        assert_eq!(sc.name, "demo");
        assert_eq!(sc.scheme, Scheme::Rbf);
        assert_eq!(sc.trials, 3);
        assert_eq!(sc.m_t, vec![2, 3]);
        assert!((sc.p_b - 1.0).abs() < 1e-12);
        assert!((sc.geometry.ref_gain - 1e-3).abs() < 1e-15);
        let mut smoked = sc.clone();
        smoked.apply_smoke().unwrap();
        assert_eq!(smoked.trials, 1);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Scenario::parse("[scenario]\nscheme = nope\n").is_err());
        assert!(Scenario::parse(
            "[scenario]\nscheme = rbf\n[system]\nn_elements = 10\ngroup_size = 3\n"
        )
        .is_err());
        // 10/2 = 5 groups is not a power of two
        assert!(Scenario::parse(
            "[scenario]\nscheme = rbf\n[system]\nn_elements = 10\ngroup_size = 2\n"
        )
        .is_err());
        assert!(Scenario::parse("[scenario]\nscheme = rbf\nbad line\n").is_err());
        assert!(Scenario::parse("[scenario]\nscheme = rbf\n[system]\neta = 2.0\n").is_err());
    }

    #[test]
    fn dbm_boundary() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn scenario_run_is_deterministic() {
        let dir = std::env::temp_dir().join("irs_wet_scenario_det");
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        let cfg_path = dir.join("demo.cfg");
        fs::write(&cfg_path, SAMPLE).unwrap();

        let overrides = RunOverrides {
            out_dir: Some(dir.join("a")),
            ..Default::default()
        };
        let report = run_scenario(&cfg_path, &overrides).unwrap();
        assert!(report.failures.is_empty());
        assert_eq!(report.csv_paths.len(), 1);
        let first = fs::read(&report.csv_paths[0]).unwrap();

        let overrides = RunOverrides {
            out_dir: Some(dir.join("b")),
            ..Default::default()
        };
        let report = run_scenario(&cfg_path, &overrides).unwrap();
        let second = fs::read(&report.csv_paths[0]).unwrap();
        assert_eq!(first, second, "reruns must be byte-identical");

        let text = String::from_utf8(first).unwrap();
        assert!(text.starts_with("m_t,k,scheme,trial,energy_j,power_w\n"));
        // 2 m_t x 3 trials = 6 data rows, then mean+median per combo
        assert_eq!(text.lines().count(), 1 + 6 + 4);
        assert!(text.contains(",mean,"));
        assert!(text.contains(",median,"));
    }
}
