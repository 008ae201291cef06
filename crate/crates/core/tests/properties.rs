//! Property tests on random scenarios.

use nalgebra::DMatrix;
use proptest::prelude::*;

use leofim::efim_engine::{location_fim, Block, Scenario};
use leofim::linalg::{select, symmetrize};
use leofim::oracle::schur;
use leofim::reduction::InformationFactor;
use leofim::scenario::{random_scenario, stream_rng, RandomLimits};
use leofim::signal_model::{omega, SignalSpec};
use leofim::OffsetConfig;

const LIM: RandomLimits = RandomLimits {
    max_n_b: 3,
    max_n_k: 3,
    max_n_u: 4,
};

fn scenario(seed: u64) -> Scenario {
    random_scenario(&mut stream_rng(seed, 0), LIM).unwrap()
}

fn offsets() -> impl Strategy<Value = OffsetConfig> {
    prop::sample::select(OffsetConfig::ALL.to_vec())
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn omega_is_nonnegative(f_c in 1e6f64..1e11, a1 in 0.0f64..1e9, a2 in -1.0f64..=1.0, nu in -1e-4f64..1e-4, eps in -1e4f64..1e4) {
        let spec = SignalSpec::new(f_c, a1, a2, 0.0, 1e-3).unwrap();
        let f_ob = f_c * (1.0 - nu) + eps;
        prop_assert!(omega(&spec, f_ob) >= -1e-12 * (a1 * a1 + f_ob * f_ob));
    }

    #[test]
    fn efim_is_linear_in_snr(seed in any::<u64>(), s in 1e-3f64..1e3, off in offsets()) {
        let sc = scenario(seed);
        let Ok(base) = location_fim(&sc, off) else { return Ok(()) };
        let scaled = location_fim(&sc.with_spec(sc.spec.scaled_snr(s)).unwrap(), off).unwrap();
        prop_assert!(rel(&scaled.f, &(&base.f * s)) < 1e-12);
        prop_assert!(rel(&scaled.g, &(&base.g * s)) < 1e-12);
        let a = InformationFactor::new(&sc, off).unwrap().efim();
        let b = InformationFactor::new(&sc.with_spec(sc.spec.scaled_snr(s)).unwrap(), off).unwrap().efim();
        prop_assert!((b - &a * s).norm() <= 1e-12 * s * base.f.norm());
    }

    #[test]
    fn matrices_are_symmetric(seed in any::<u64>(), off in offsets()) {
        let sc = scenario(seed);
        let Ok(lf) = location_fim(&sc, off) else { return Ok(()) };
        prop_assert!(rel(&lf.f, &lf.f.transpose()) < 1e-14);
        prop_assert!(rel(&lf.g, &lf.g.transpose()) < 1e-14);
        let fac = InformationFactor::new(&sc, off).unwrap();
        let j = fac.efim();
        prop_assert_eq!(&j, &j.transpose());
    }

    #[test]
    fn unknown_offsets_never_add_information(seed in any::<u64>()) {
        // Loewner order: F >= F - G(time), F - G(time) >= F - G(both).
        let sc = scenario(seed);
        let f = InformationFactor::new(&sc, OffsetConfig::NONE).unwrap().efim();
        for (weak, strong) in [(OffsetConfig::TIME, OffsetConfig::NONE), (OffsetConfig::FREQ, OffsetConfig::NONE), (OffsetConfig::BOTH, OffsetConfig::TIME), (OffsetConfig::BOTH, OffsetConfig::FREQ)] {
            let (Ok(w), Ok(s)) = (InformationFactor::new(&sc, weak), InformationFactor::new(&sc, strong)) else { continue };
            let d = s.efim() - w.efim();
            prop_assert!(min_eig(&d) >= -1e-9 * f.norm());
        }
    }

    #[test]
    fn more_slots_never_lose_information(seed in any::<u64>()) {
        let sc = scenario(seed);
        let mut cs = sc.cs.clone();
        cs.n_k += 1;
        let mut spec = sc.spec.clone();
        spec.snr_per_link = None;
        let bigger = Scenario::new(sc.rx.clone(), cs, spec.clone()).unwrap();
        let smaller = sc.with_spec(spec).unwrap();
        let a = InformationFactor::new(&smaller, OffsetConfig::BOTH);
        let b = InformationFactor::new(&bigger, OffsetConfig::BOTH);
        if let (Ok(a), Ok(b)) = (a, b) {
            let d = b.efim() - a.efim();
            prop_assert!(min_eig(&d) >= -1e-9 * b.efim().norm());
        }
    }

    #[test]
    fn schur_matches_inverse_sub_block(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 1);
        let g = DMatrix::from_fn(9, 14, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let a = &g * g.transpose() + DMatrix::identity(9, 9) * 0.1;
        let keep = [0usize, 1, 2];
        let s = schur(&a, &keep).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        let want = select(&inv, &keep, &keep).try_inverse().unwrap();
        prop_assert!(rel(&s, &want) < 1e-10);
    }

    #[test]
    fn factor_reduction_matches_closed_form_efim(seed in any::<u64>(), off in offsets()) {
        let sc = scenario(seed);
        let Ok(lf) = location_fim(&sc, off) else { return Ok(()) };
        let fac = InformationFactor::new(&sc, off).unwrap();
        let closed = lf.efim();
        let fact = fac.efim();
        for a in Block::ALL {
            for b in Block::ALL {
                let r = a.rows();
                let c = b.rows();
                // F - G cancels, so its error scales with F.
                let scale = (select(&lf.f, &r, &r).norm() * select(&lf.f, &c, &c).norm()).sqrt();
                let d = (select(&closed, &r, &c) - select(&fact, &r, &c)).norm();
                prop_assert!(d <= 1e-10 * scale);
            }
        }
    }
}
