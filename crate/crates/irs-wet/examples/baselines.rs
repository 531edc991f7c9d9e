//! Runs every scheme on a few random channels and prints the median
//! harvested energies side by side.
//!
//! Run with: `cargo run --release --example baselines`

use irs_wet::beamforming::joint_design_from_estimate;
use irs_wet::channel::{group_composite, sample_channels, Geometry, TransmitConfig};
use irs_wet::distributed::{full_scheme, DbParams};
use irs_wet::estimator::{estimate_cascaded_channel, EstimatorParams};
use irs_wet::metrics::{baseline_beam_training, baseline_random_bf};
use irs_wet::oracle::FeedbackOracle;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn main() -> irs_wet::Result<()> {
    let geom = Geometry::default_indoor();
    let (n, m_t, k) = (64, 4, 8);
    let j = n / k;
    let (p_b, eta, t_s) = (1.0, 0.5, 1.0);
    let trials = 5;

    let (mut ce, mut dbf, mut bt, mut rbf) = (vec![], vec![], vec![], vec![]);
    for seed in 0..trials {
        let ch = sample_channels(&geom, n, m_t, seed)?;
        let gch = group_composite(&ch, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbead);

        let mut oracle = FeedbackOracle::new(gch.clone(), eta, t_s)?;
        let est =
            estimate_cascaded_channel(&mut oracle, j, &EstimatorParams::new(130), p_b, m_t, &mut rng)?;
        let design = joint_design_from_estimate(&est.h_bar_c, p_b, eta, 8, &mut rng)?;
        let q = TransmitConfig::covariance(design.covariance.clone(), p_b)?;
        ce.push(oracle.genie().energy(&q, &design.reflection)?);

        let mut oracle = FeedbackOracle::new(gch.clone(), eta, t_s)?;
        let res = full_scheme(&mut oracle, 5000, &DbParams::new(2.0_f64.to_radians()), 130, p_b, m_t, &mut rng)?;
        dbf.push(res.energy);

        bt.push(baseline_beam_training(&gch, p_b, eta, t_s)?);
        rbf.push(baseline_random_bf(&gch, p_b, m_t, eta, t_s, seed)?);
    }

    println!("median harvested energy over {trials} channels (J):");
    println!("  channel estimation + joint design  {:.4e}", median(ce));
    println!("  distributed two-stage scheme       {:.4e}", median(dbf));
    println!("  DFT beam training                  {:.4e}", median(bt));
    println!("  random beamforming                 {:.4e}", median(rbf));
    Ok(())
}
