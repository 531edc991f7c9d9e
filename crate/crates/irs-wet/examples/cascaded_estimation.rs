//! Full one-bit cascaded-channel estimation on a handful of random channels:
//! per-pattern learning, ratio and phase searches, least-squares assembly.
//! Prints the final normalized error and the feedback-bit ledger per channel.
//!
//! Run with: `cargo run --release --example cascaded_estimation`

use irs_wet::channel::{group_composite, sample_channels, Geometry};
use irs_wet::estimator::{estimate_cascaded_channel, EstimatorParams};
use irs_wet::metrics::ne_cascaded;
use irs_wet::oracle::{FeedbackOracle, OneBitFeedback};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> irs_wet::Result<()> {
    let geom = Geometry::default_indoor();
    let (n, m_t, k) = (64, 4, 16);
    let j = n / k;
    let (p_b, eta, t_s) = (1.0, 0.5, 1.0);
    let params = EstimatorParams::new(300);

    println!("estimating the {j}x{m_t} grouped channel, {} intervals per pattern", params.n_a);
    println!(
        "{:>5} {:>10} {:>8} {:>8} {:>8} {:>8}",
        "seed", "NE", "accpm", "ratio", "phase", "total"
    );
    for seed in 0..5 {
        let ch = sample_channels(&geom, n, m_t, seed)?;
        let gch = group_composite(&ch, k)?;
        let truth = gch.matrix().clone();
        let mut oracle = FeedbackOracle::new(gch, eta, t_s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let est = estimate_cascaded_channel(&mut oracle, j, &params, p_b, m_t, &mut rng)?;
        let ne = ne_cascaded(&est.h_bar_c, &truth, 0.5)?;
        let led = &est.ledger;
        println!(
            "{:>5} {:>10.5} {:>8} {:>8} {:>8} {:>8}",
            seed,
            ne,
            led.accpm_bits.iter().sum::<u64>(),
            led.ratio_bits.iter().sum::<u64>(),
            led.phase_bits.iter().sum::<u64>(),
            oracle.bits_spent()
        );
    }
    Ok(())
}
