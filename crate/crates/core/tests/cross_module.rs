use num_complex::Complex64;
use proptest::prelude::*;
use reslab_core::complex_utils::Rect;
use reslab_core::continuation::{wronskian, wronskian_value, SolveOptions};
use reslab_core::model::builtin_model;
use reslab_core::quasimodes::{build_quasimode, dirichlet_eigensolve, Cutoff, QuasimodeOptions};
use reslab_core::resonance_search::{scan_resonances_in, ScanOptions};

/// Right turning point of `gauss_barrier(2, 2, 0.5)` at unit energy.
fn turning() -> f64 {
    2.0 + 0.5 * 2f64.ln().sqrt()
}

#[test]
fn quasimode_sits_next_to_a_single_resonance() {
    let model = builtin_model("gauss_barrier", &[2.0, 2.0, 0.5]).unwrap();
    let h = 0.1;
    let modes = dirichlet_eigensolve(&model, turning(), h, 20, None).unwrap();
    let mode = modes.iter().min_by(|a, b| (a.energy - 1.0).abs().total_cmp(&(b.energy - 1.0).abs())).unwrap();
    let q = build_quasimode(&model, mode, Cutoff::new(2.05, 0.3).unwrap(), &QuasimodeOptions::default()).unwrap();
    let rect = Rect::new(q.lambda - 0.01, q.lambda + 0.01, -0.5 * model.gamma * h, 0.02).unwrap();
    let scan = scan_resonances_in(&model, rect, h, &SolveOptions::default(), &ScanOptions::default(), None).unwrap();
    assert_eq!(scan.total_winding, 1, "{scan:?}");
    let r = &scan.resonances[0];
    assert_eq!(r.multiplicity, 1);
    assert!(r.lambda.im < 0.0, "{}", r.lambda);
    // |λ² - r²| is controlled by the quasimode accuracy up to tunneling corrections
    let gap = (r.lambda * r.lambda - q.lambda * q.lambda).norm();
    assert!(gap < 1e-4, "gap {gap:e}, accuracy {:e}", q.accuracy);
}

#[test]
fn resonances_are_zeros_of_the_pointwise_wronskian() {
    let model = builtin_model("square_well", &[10.0, 1.0]).unwrap();
    let so = SolveOptions::default();
    let rect = Rect::new(1.0, 8.0, -1.9, 0.2).unwrap();
    let scan = scan_resonances_in(&model, rect, 1.0, &so, &ScanOptions::default(), None).unwrap();
    assert_eq!(scan.resonances.len(), 2);
    for r in &scan.resonances {
        let near = wronskian_value(&model, r.lambda + 0.05, 1.0, &so).unwrap().norm();
        let at = wronskian(&model, r.lambda, 1.0, &so).unwrap();
        assert!(at.value.norm() < 1e-8 * near, "{} vs {near}", at.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wronskian_is_real_symmetric(re in 0.6f64..1.6, im in -0.04f64..0.04) {
        let model = builtin_model("gauss_barrier", &[2.0, 2.0, 0.5]).unwrap();
        let so = SolveOptions::default();
        let z = Complex64::new(re, im);
        let w = wronskian_value(&model, z, 0.1, &so).unwrap();
        // outgoing normalization pairs λ with -λ̄
        let w_bar = wronskian_value(&model, -z.conj(), 0.1, &so).unwrap();
        prop_assert!((w_bar - w.conj()).norm() <= 1e-8 * w.norm().max(1e-300), "{} vs {}", w_bar, w.conj());
    }

    #[test]
    fn wronskian_is_constant_in_x_for_every_model(which in 0usize..4, re in 0.5f64..2.0, im in -0.3f64..0.3) {
        let (name, params, h): (&str, Vec<f64>, f64) = match which {
            0 => ("free", vec![], 1.0),
            1 => ("square_well", vec![10.0, 1.0], 1.0),
            2 => ("gauss_barrier", vec![2.0, 2.0, 0.5], 0.5),
            _ => ("ads_like", vec![4.0], 0.25),
        };
        let model = builtin_model(name, &params).unwrap();
        let z = Complex64::new(re, im * model.gamma * h);
        let w = wronskian(&model, z, h, &SolveOptions::default()).unwrap();
        prop_assert!(w.relative_spread < 1e-9, "{name} at {z}: {}", w.relative_spread);
    }
}
