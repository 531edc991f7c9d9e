//! Property tests for the structural invariants that must hold for any
//! dimensions, seeds, and phases.

use irs_wet::channel::{
    group_composite, harvested_energy, sample_channels, Geometry, ReflectionConfig, TransmitConfig,
};
use irs_wet::estimator::PatternSet;
use irs_wet::linalg::{cplx, frob, hermitian_part, CMat};
use irs_wet::metrics::ne_matrix;
use irs_wet::oracle::{FeedbackOracle, OneBitFeedback};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn phases(j: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..std::f64::consts::TAU, j)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Block-constant per-element phases and grouped phases give the same
    /// effective channel row: v^H H_c = v_bar^H H_bar_c to machine precision.
    #[test]
    fn grouping_consistency(seed in 0u64..5000, j in 1usize..6, k in 1usize..5, m_t in 1usize..5, ph in phases(5)) {
        let geom = Geometry::default_indoor();
        let n = j * k;
        let ch = sample_channels(&geom, n, m_t, seed).unwrap();
        let gch = group_composite(&ch, k).unwrap();
        let v_bar = ReflectionConfig::from_phases(&ph[..j]);
        let v_full = v_bar.expand(k);
        let lhs = v_full.adjoint() * ch.cascaded();
        let rhs = v_bar.coefficients().adjoint() * gch.matrix();
        let scale = frob(ch.cascaded()).max(1e-300);
        for c in 0..m_t {
            prop_assert!((lhs[(0, c)] - rhs[(0, c)]).norm() <= 1e-12 * scale);
        }
    }

    /// Harvested energy is invariant under a global phase on the reflection.
    #[test]
    fn energy_global_phase_invariance(seed in 0u64..5000, shift in 0.0..std::f64::consts::TAU, ph in phases(4)) {
        let geom = Geometry::default_indoor();
        let ch = sample_channels(&geom, 8, 3, seed).unwrap();
        let gch = group_composite(&ch, 2).unwrap();
        let q = TransmitConfig::isotropic(3, 1.0);
        let v = ReflectionConfig::from_phases(&ph);
        let shifted: Vec<f64> = ph.iter().map(|p| p + shift).collect();
        let vs = ReflectionConfig::from_phases(&shifted);
        let a = harvested_energy(&q, &v, &gch, 0.5, 1.0).unwrap();
        let b = harvested_energy(&q, &vs, &gch, 0.5, 1.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-11 * a.max(1e-300));
    }

    /// The normalized-error metric ignores positive rescaling of either side.
    #[test]
    fn ne_matrix_scale_invariance(seed in 0u64..5000, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(3, 3, |_, _| cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let b = hermitian_part(&(&a * a.adjoint()));
        let e = &b + CMat::identity(3, 3) * cplx(0.1, 0.0);
        let base = ne_matrix(&e, &b).unwrap();
        let scaled = ne_matrix(&(&e * cplx(scale, 0.0)), &b).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-10 * (1.0 + base));
    }

    /// Sylvester pattern matrices stay orthogonal with ±1 entries at every
    /// supported order.
    #[test]
    fn hadamard_orthogonality(pow in 0u32..6) {
        let j = 1usize << pow;
        let p = PatternSet::hadamard(j).unwrap();
        for a in 0..j {
            for b in 0..j {
                let dot: i64 = (0..j).map(|r| p.entry(r, a) as i64 * p.entry(r, b) as i64).sum();
                prop_assert_eq!(dot, if a == b { j as i64 } else { 0 });
            }
        }
    }

    /// The bit meter counts exactly the comparisons answered, never the
    /// unbilled observations, and survives comparison-state resets.
    #[test]
    fn oracle_bit_accounting(seed in 0u64..5000, ops in proptest::collection::vec(0u8..4, 1..40)) {
        let geom = Geometry::default_indoor();
        let ch = sample_channels(&geom, 8, 2, seed).unwrap();
        let gch = group_composite(&ch, 2).unwrap();
        let mut oracle = FeedbackOracle::new(gch, 0.5, 1.0).unwrap();
        let q = TransmitConfig::isotropic(2, 1.0);
        let v = ReflectionConfig::from_phases(&[0.1, 0.7, 1.3, 2.9]);
        let mut expected = 0u64;
        for op in ops {
            match op {
                0 => { oracle.observe(&q, &v).unwrap(); }
                1 => { oracle.interval_feedback(&q, &v).unwrap(); expected += 1; }
                2 => { oracle.best_feedback(&q, &v).unwrap(); expected += 1; }
                _ => { oracle.reset_comparison_state(); }
            }
            prop_assert_eq!(oracle.bits_spent(), expected);
        }
    }

    /// Coordinate ascent on the phase objective never decreases it.
    #[test]
    fn bcd_history_is_monotone(seed in 0u64..5000, j in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(j, j, |_, _| cplx(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = hermitian_part(&(&a * a.adjoint()));
        let init_ph: Vec<f64> = (0..j).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
        let run = irs_wet::beamforming::optimize_phases_bcd(
            &m,
            &ReflectionConfig::from_phases(&init_ph),
            irs_wet::beamforming::bcd_default_iters(j),
            irs_wet::beamforming::bcd_default_tol(&m),
        ).unwrap();
        for w in run.history.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-11 * w[0].abs().max(1e-300));
        }
        for z in run.config.coefficients().iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }
}
