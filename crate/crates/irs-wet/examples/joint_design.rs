//! Estimates the cascaded channel from one-bit feedback, then designs the
//! transmit covariance and reflection phases from the estimate, and compares
//! the harvested energy against the perfect-knowledge design and the
//! reference schemes.
//!
//! Run with: `cargo run --release --example joint_design`

use irs_wet::beamforming::joint_design_from_estimate;
use irs_wet::channel::{group_composite, sample_channels, Geometry, TransmitConfig};
use irs_wet::estimator::{estimate_cascaded_channel, EstimatorParams};
use irs_wet::metrics::{baseline_random_bf, baseline_random_irs_mrt, ne_cascaded};
use irs_wet::oracle::FeedbackOracle;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> irs_wet::Result<()> {
    let geom = Geometry::default_indoor();
    let (n, m_t, k) = (64, 4, 16);
    let j = n / k;
    let (p_b, eta, t_s) = (1.0, 0.5, 1.0);

    let ch = sample_channels(&geom, n, m_t, 3)?;
    let gch = group_composite(&ch, k)?;
    let truth = gch.matrix().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);

    let mut oracle = FeedbackOracle::new(gch.clone(), eta, t_s)?;
    let est = estimate_cascaded_channel(&mut oracle, j, &EstimatorParams::new(200), p_b, m_t, &mut rng)?;
    println!("estimate NE = {:.4}", ne_cascaded(&est.h_bar_c, &truth, 0.5)?);

    let design = joint_design_from_estimate(&est.h_bar_c, p_b, eta, 8, &mut rng)?;
    let q = TransmitConfig::covariance(design.covariance.clone(), p_b)?;
    let real = oracle.genie().energy(&q, &design.reflection)?;

    let ideal_design = joint_design_from_estimate(&truth, p_b, eta, 8, &mut rng)?;
    let q_ideal = TransmitConfig::covariance(ideal_design.covariance.clone(), p_b)?;
    let ideal = oracle.genie().energy(&q_ideal, &ideal_design.reflection)?;

    println!("harvested with the estimate-based design: {real:.4e} J");
    println!("harvested with perfect channel knowledge: {ideal:.4e} J");
    println!("ratio: {:.4}", real / ideal);
    println!(
        "references: random reflection + matched beam {:.4e} J, random beamforming {:.4e} J",
        baseline_random_irs_mrt(&gch, p_b, eta, t_s, 5)?,
        baseline_random_bf(&gch, p_b, m_t, eta, t_s, 5)?,
    );
    println!("feedback bits spent: {}", est.ledger.total());
    Ok(())
}
