use nalgebra::Vector3;
use proptest::prelude::*;
use somiv::sim::{design_input, run_experiment, step, Experiment, InputDesign, NoiseConfig};
use somiv::vessel::{ShipParams, VesselState};

fn design() -> impl Strategy<Value = InputDesign> {
    (any::<bool>(), any::<bool>()).prop_map(|(mirror, zigzag)| {
        let d = InputDesign::default();
        let d = if mirror { d.mirrored() } else { d };
        if zigzag {
            d.zigzag()
        } else {
            d
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_seed_same_experiment(seed in any::<u64>(), d in design(), wind in 0.0..10.0f64) {
        let noise = NoiseConfig::with_wind(wind);
        let a = run_experiment(&ShipParams::TRUE, &d, &noise, 200, seed).unwrap();
        let b = run_experiment(&ShipParams::TRUE, &d, &noise, 200, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf, false).unwrap();
        let back = Experiment::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, a.measured());
    }

    #[test]
    fn inputs_depend_on_the_seed_only(seed in any::<u64>(), d in design()) {
        prop_assert_eq!(design_input(&d, 500, seed).unwrap(), design_input(&d, 500, seed).unwrap());
    }

    #[test]
    fn undriven_motion_decays(
        u in -2.0..2.0f64,
        v in -1.0..1.0f64,
        r in -0.05..0.05f64,
        psi in -3.0..3.0f64,
    ) {
        let zero = Vector3::zeros();
        let mut s = VesselState { nu: Vector3::new(u, v, r), eta: Vector3::new(0.0, 0.0, psi) };
        for _ in 0..200 {
            let next = step(&ShipParams::TRUE, &s, &[0.0; 3], &zero, &zero, &zero).unwrap();
            prop_assert!(next.nu.norm() <= s.nu.norm() * (1.0 + 1e-12), "{} -> {}", s.nu.norm(), next.nu.norm());
            s = next;
        }
    }

    #[test]
    fn measured_rotation_is_orthogonal(seed in any::<u64>()) {
        let e = run_experiment(&ShipParams::TRUE, &InputDesign::default(), &NoiseConfig::default(), 100, seed).unwrap();
        for k in 0..e.len() {
            let m = e.y_r(k);
            let g = m.transpose() * m;
            prop_assert!((g - nalgebra::Matrix2::identity()).amax() < 1e-12);
        }
    }
}
