use num_complex::Complex64;
use otacal::config::{parse_config, RunConfig};
use otacal::coupling::{build_coupling, CouplingConfig};
use otacal::dpd_inverse::{build_inverse, default_v_max, DpdMode};
use otacal::experiment::Variant;
use otacal::hardware::{apply_tx_array, sample_bs_hardware, HardwareConfig};
use otacal::ota_dpd::{q_factors, ThetaEstimate};
use otacal::reciprocity::{estimate_calibration, simulate_cal_measurements};
use proptest::prelude::*;

fn complex(mag: f64, phase: f64) -> Complex64 {
    Complex64::from_polar(mag, phase)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_commutes_with_phase_rotation(
        seed in any::<u64>(),
        frac in 0.0f64..1.0,
        phase in -3.0f64..3.0,
        rot in -3.0f64..3.0,
        lut in prop::bool::ANY,
    ) {
        let hw = sample_bs_hardware(&HardwareConfig::default(), 4, seed).unwrap();
        let q = q_factors(hw.rx());
        let th = ThetaEstimate::exact(&hw.tx()[2], q[2]);
        let v_max = default_v_max(&th, 1.2);
        let mode = if lut { DpdMode::Lut } else { DpdMode::Exact };
        let inv = build_inverse(th, mode, 64, v_max).unwrap();
        let u = complex(frac * v_max, phase);
        let spin = complex(1.0, rot);
        let lhs = inv.apply(u * spin);
        let rhs = inv.apply(u) * spin;
        prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()), "{lhs} vs {rhs}");
    }

    #[test]
    fn tx_array_is_componentwise(seed in any::<u64>(), amps in prop::collection::vec(0.0f64..1.2, 6), phases in prop::collection::vec(-3.0f64..3.0, 6)) {
        let hw = sample_bs_hardware(&HardwareConfig::default(), 6, seed).unwrap();
        let x: Vec<Complex64> = amps.iter().zip(&phases).map(|(&a, &p)| complex(a, p)).collect();
        let out = apply_tx_array(&hw, &x).unwrap();
        for (m, (&o, &xm)) in out.iter().zip(&x).enumerate() {
            prop_assert_eq!(o, hw.tx()[m].apply(xm));
        }
    }

    #[test]
    fn calibration_ignores_common_tx_scale(seed in any::<u64>(), mag in 0.1f64..10.0, phase in -3.0f64..3.0) {
        let m = 6;
        let hw = sample_bs_hardware(&HardwareConfig::default(), m, seed).unwrap();
        let h = build_coupling(&CouplingConfig::default(), m, seed ^ 1).unwrap();
        let t: Vec<Complex64> = q_factors(hw.rx()).iter().map(|q| 1.0 / q).collect();
        let alpha = complex(mag, phase);
        let scaled: Vec<Complex64> = t.iter().map(|v| v * alpha).collect();
        let a = estimate_calibration(&simulate_cal_measurements(&t, hw.rx(), &h, 4, 0.25, 0.0, 3).unwrap(), &h).unwrap();
        let b = estimate_calibration(&simulate_cal_measurements(&scaled, hw.rx(), &h, 4, 0.25, 0.0, 3).unwrap(), &h).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).norm() < 1e-10 * x.norm());
        }
    }

    #[test]
    fn config_round_trips(
        antennas in 2usize..512,
        users in 1usize..8,
        seed in any::<u64>(),
        n_cal in 2usize..5000,
        snr in -20.0f64..40.0,
        ota in prop::option::of(-20.0f64..40.0),
        lut_size in 2usize..4096,
        variants in prop::sample::subsequence(Variant::ALL.to_vec(), 1..=4),
    ) {
        let mut cfg = RunConfig::default();
        cfg.array.antennas = antennas;
        cfg.array.users = users.min(antennas);
        cfg.seed = seed;
        cfg.calibration.n_cal = n_cal;
        cfg.calibration.ota_snr_db = ota;
        cfg.downlink.snr_db = snr;
        cfg.dpd.lut_size = lut_size;
        cfg.experiment.rate_variants = variants;
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
