use lyapspec_core::acceptance::random_field;
use lyapspec_core::approxeig::{make_profiles, BetaVariant};
use lyapspec_core::fields::{curl, curl_inverse, Mode, TrigVelocityField};
use lyapspec_core::flow::{flow_lifted, tangent_flow, StepControl};
use lyapspec_core::fields::TorusPoint;
use lyapspec_core::operators::{assemble_a, assemble_k, sort_eigenvalues};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Real stream function from a handful of low modes.
fn field(modes: &[(i64, i64, f64, f64)], mean: [f64; 2]) -> TrigVelocityField {
    let mut stream = Vec::new();
    for &(k1, k2, re, im) in modes {
        if k1 == 0 && k2 == 0 {
            continue;
        }
        stream.push((Mode::new(k1, k2), C64::new(re, im)));
        stream.push((Mode::new(-k1, -k2), C64::new(re, -im)));
    }
    TrigVelocityField::new(mean, stream).unwrap()
}

fn modes() -> impl Strategy<Value = Vec<(i64, i64, f64, f64)>> {
    prop::collection::vec((-2i64..=2, -2i64..=2, -0.5f64..0.5, -0.5f64..0.5), 1..4)
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    [0.0..std::f64::consts::TAU, 0.0..std::f64::consts::TAU]
}

const CTRL: StepControl = StepControl::Fixed { h: 1e-3 };

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn curl_inverts_curl_inverse(seed in any::<u64>(), m in 1usize..12) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let w = random_field(m, &mut r);
        let back = curl(&curl_inverse(&w));
        prop_assert!(back.axpy(C64::new(-1.0, 0.0), &w).l2_norm() <= 1e-12 * w.l2_norm());
    }

    #[test]
    fn advection_is_skew_adjoint(ms in modes(), mean in [-1.0f64..1.0, -1.0f64..1.0], m in 1usize..5) {
        let u = field(&ms, mean);
        prop_assert!(assemble_a(&u, m).skew_defect() <= 1e-12);
    }

    #[test]
    fn compact_part_has_no_diagonal(ms in modes(), m in 1usize..5) {
        let u = field(&ms, [0.0, 0.0]);
        let k = assemble_k(&u, m);
        for &(r, c, _) in &k.entries {
            prop_assert_ne!(r, c);
        }
    }

    #[test]
    fn flow_preserves_area(ms in modes(), x in point(), t in 0.1f64..3.0) {
        let u = field(&ms, [0.0, 0.0]);
        let c = tangent_flow(&u, &TorusPoint::from_array(x), t, CTRL).unwrap();
        prop_assert!((c.det() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn stream_function_is_conserved(ms in modes(), x in point(), t in 0.1f64..3.0) {
        let u = field(&ms, [0.0, 0.0]);
        let y = flow_lifted(&u, x, t, CTRL).unwrap();
        prop_assert!((u.stream_value(&y) - u.stream_value(&x)).abs() <= 1e-9);
    }

    #[test]
    fn flow_is_a_group(ms in modes(), x in point(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let u = field(&ms, [0.3, -0.2]);
        let a = flow_lifted(&u, flow_lifted(&u, x, t, CTRL).unwrap(), s, CTRL).unwrap();
        let b = flow_lifted(&u, x, s + t, CTRL).unwrap();
        prop_assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() <= 1e-9);
    }

    #[test]
    fn time_profile_is_supported_and_bounded(n in 1.0f64..20.0, w in 0.0f64..1.0, t in -25.0f64..25.0) {
        let p = make_profiles(n, 0.01, 1, BetaVariant::Tent, Some(w * 0.1 * n.min(10.0) / 10.0)).unwrap();
        let [g, _, _] = p.gamma(t);
        if t.abs() >= n {
            prop_assert_eq!(g, 0.0);
        }
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&g));
    }

    #[test]
    fn eigenvalue_order_is_total(v in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..30)) {
        let mut a: Vec<C64> = v.iter().map(|&(x, y)| C64::new(x, y)).collect();
        let mut b = a.clone();
        b.reverse();
        sort_eigenvalues(&mut a);
        sort_eigenvalues(&mut b);
        prop_assert_eq!(a, b);
    }
}
