//! Learns the scaled effective-channel matrix for one fixed reflection
//! pattern from interval feedback bits, and prints the genie-measured
//! normalized error as the cuts accumulate.
//!
//! Run with: `cargo run --release --example accpm_learning`

use irs_wet::accpm::{run_accpm, AccpmOptions};
use irs_wet::channel::{group_composite, sample_channels, Geometry, ReflectionConfig};
use irs_wet::metrics::ne_matrix;
use irs_wet::oracle::{FeedbackOracle, OneBitFeedback};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> irs_wet::Result<()> {
    let geom = Geometry::default_indoor();
    let (n, m_t, k) = (64, 4, 16);
    let (p_b, eta, t_s) = (1.0, 0.5, 1.0);
    let n_a = 150;

    let ch = sample_channels(&geom, n, m_t, 7)?;
    let gch = group_composite(&ch, k)?;
    let j = gch.group_count();
    println!("surface: {n} elements in {j} groups of {k}; transmitter: {m_t} antennas");

    // all-ones pattern; the learner sees only comparison bits for it
    let v = ReflectionConfig::from_phases(&vec![0.0; j]);
    let truth = irs_wet::channel::effective_outer(&gch, &v, eta)?;

    let mut oracle = FeedbackOracle::new(gch, eta, t_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let run = run_accpm(&mut oracle, &v, n_a, p_b, m_t, &mut rng, &AccpmOptions::default())?;

    println!("{:>6} {:>12} {:>14} {:>6}", "n", "NE", "residual", "bits");
    for it in &run.trace {
        if it.interval == 1 || it.interval % 10 == 0 {
            let ne = ne_matrix(it.center.as_ref().unwrap(), &truth)?;
            println!(
                "{:>6} {:>12.5} {:>14.3e} {:>6}",
                it.interval, ne, it.residual, it.bits_spent
            );
        }
    }
    let final_ne = ne_matrix(run.center(), &truth)?;
    println!("final normalized error after {n_a} intervals: {final_ne:.5}");
    println!("feedback bits consumed: {}", oracle.bits_spent());
    Ok(())
}
