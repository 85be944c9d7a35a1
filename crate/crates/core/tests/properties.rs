use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robust_mimo::harness::{radii_from_epsbar, random_system, sample_ball};
use robust_mimo::model::{frobenius, power_usage, Weights};
use robust_mimo::perfect::PowerBudget;
use robust_mimo::solver::{robust_design, SolverOptions};
use robust_mimo::worstcase::{inflate, UncertaintyRadii};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_samples_stay_inside(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..5, radius in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = sample_ball(&mut rng, rows, cols, radius);
        prop_assert_eq!((d.nrows(), d.ncols()), (rows, cols));
        prop_assert!(frobenius(&d) <= radius * (1.0 + 1e-12));
    }

    #[test]
    fn robust_design_respects_budget_and_bounds(
        seed in any::<u64>(),
        snr_db in 0.0f64..30.0,
        eps_bar in 0.0f64..0.2,
        power in 0.5f64..4.0,
    ) {
        let sys = random_system(seed, 2, 2, snr_db).unwrap();
        let r = radii_from_epsbar(eps_bar, &sys).unwrap();
        let w = Weights::uniform(2);
        let p = PowerBudget::new(power).unwrap();
        let d = robust_design(&sys, &r, &w, p, &SolverOptions::default()).unwrap();
        let (_, phi_star) = inflate(&sys, &r);
        let used = power_usage(&phi_star, &d.transceiver.f).unwrap();
        prop_assert!(used <= power * (1.0 + 1e-8), "used {} of {}", used, power);
        prop_assert!(d.objective() >= 0.0 && d.objective() <= 2.0 + 1e-9);
        let nominal = robust_design(&sys, &UncertaintyRadii::zero(), &w, p, &SolverOptions::default()).unwrap();
        prop_assert!(d.objective() >= nominal.objective() * (1.0 - 1e-6));
    }
}
