//! Two-stage design without channel estimation: random phase perturbations
//! kept or undone from best-so-far bits, then one cutting-plane pass for the
//! transmit covariance. Prints the climb against the coordinate-descent
//! optimum of the hidden quadratic form and the stationarity diagnostic.
//!
//! Run with: `cargo run --release --example distributed_beamforming`

use irs_wet::beamforming::{bcd_default_iters, bcd_default_tol, optimize_phases_bcd};
use irs_wet::channel::{group_composite, sample_channels, Geometry, ReflectionConfig, TransmitConfig};
use irs_wet::distributed::{full_scheme, run_distributed, stationarity_residual, DbParams};
use irs_wet::oracle::{FeedbackOracle, OneBitFeedback};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> irs_wet::Result<()> {
    let geom = Geometry::default_indoor();
    let (n, m_t, k) = (64, 4, 8);
    let (p_b, eta, t_s) = (1.0, 0.5, 1.0);
    let n_d = 5000;
    let params = DbParams::new(2.0_f64.to_radians());

    println!("stage 1: {n_d} timeslots of ±2° perturbations on {} groups", n / k);
    println!(
        "{:>5} {:>12} {:>12} {:>8} {:>14} {:>14}",
        "seed", "objective", "bcd optimum", "ratio", "resid start", "resid end"
    );
    for seed in 0..5 {
        let ch = sample_channels(&geom, n, m_t, seed)?;
        let gch = group_composite(&ch, k)?;
        let j = gch.group_count();
        let phi = irs_wet::channel::phase_objective_matrix(&gch, p_b, eta);
        let mut oracle = FeedbackOracle::new(gch, eta, t_s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15);

        let theta0 = vec![0.0; j];
        let resid0 = stationarity_residual(&theta0, &phi)?;
        let (v, state) = run_distributed(&mut oracle, n_d, &params, &theta0, p_b, m_t, &mut rng)?;
        let resid = stationarity_residual(&state.theta(), &phi)?;

        let obj = (v.coefficients().adjoint() * &phi * v.coefficients())[(0, 0)].re;
        let mut bcd_best = 0.0_f64;
        for r in 0..8 {
            let init = if r == 0 {
                ReflectionConfig::from_phases(&vec![0.0; j])
            } else {
                let phases: Vec<f64> = (0..j)
                    .map(|_| rand::Rng::random::<f64>(&mut rng) * std::f64::consts::TAU)
                    .collect();
                ReflectionConfig::from_phases(&phases)
            };
            let run = optimize_phases_bcd(&phi, &init, bcd_default_iters(j), bcd_default_tol(&phi))?;
            bcd_best = bcd_best.max(run.objective);
        }
        println!(
            "{:>5} {:>12.5e} {:>12.5e} {:>8.4} {:>14.5e} {:>14.5e}",
            seed,
            obj,
            bcd_best,
            obj / bcd_best,
            resid0,
            resid
        );
    }

    // the full two-stage scheme, including the covariance pass
    println!("\nfull scheme with a 130-interval covariance pass:");
    let ch = sample_channels(&geom, n, m_t, 0)?;
    let gch = group_composite(&ch, k)?;
    let ideal_v = gch.clone();
    let mut oracle = FeedbackOracle::new(gch, eta, t_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xd15);
    let res = full_scheme(&mut oracle, 700, &params, 130, p_b, m_t, &mut rng)?;
    let e = ideal_v.effective_vector(&res.reflection)?;
    let ideal = eta * t_s * p_b * e.norm_squared();
    println!(
        "energy {:.5e} J (matched-beam bound for this reflection: {:.5e} J)",
        res.energy, ideal
    );
    println!(
        "bits: stage 1 = {}, stage 2 = {}, total = {}",
        res.stage1_bits,
        res.stage2_bits,
        oracle.bits_spent()
    );
    let _ = TransmitConfig::covariance(res.covariance.clone(), p_b)?;
    Ok(())
}
