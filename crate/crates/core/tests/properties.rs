use magedge::field::{ConstantField, FieldSpec, SineModulatedField, SinePotential};
use magedge::io::{read_sweep_csv, sweep_from_rows, write_sweep_csv};
use magedge::lattice::{bare_matrix, build_peierls_matrix, HoppingSymbol, LatticeBox};
use magedge::phase::{cocycle_defect, peierls_phase};
use magedge::quadrature::QuadratureRule;
use magedge::regularization::{mollified_kernel, mollified_schur_norm, Mollifier};
use magedge::scaling::{fit_power_points, midconvex_defect, nenciu_modulus, EdgeSweep};
use magedge::spectral::{dense_eigenvalues, EdgeResult, Method, Which};
use num_complex::Complex64;
use proptest::prelude::*;

fn rule() -> &'static QuadratureRule {
    QuadratureRule::shared_default()
}

fn coord() -> impl Strategy<Value = f64> {
    -4.0..4.0f64
}

fn point2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(coord(), 2)
}

fn constant_field() -> impl Strategy<Value = FieldSpec> {
    (-2.0..2.0f64).prop_map(|b| {
        FieldSpec::Constant(ConstantField::new(&[vec![0.0, b], vec![-b, 0.0]]).unwrap())
    })
}

fn any_field() -> impl Strategy<Value = FieldSpec> {
    prop_oneof![
        constant_field(),
        (0.0..0.9f64, 0.2..2.0f64).prop_map(|(a, k)| FieldSpec::general(SineModulatedField {
            amplitude: a,
            wavenumber: k
        })),
        Just(FieldSpec::slowly_varying(SinePotential)),
    ]
}

/// Self-adjoint symbol on offsets with `|h_i| <= 2`: values on one half of the
/// offsets, conjugates mirrored onto the other.
fn symbol2() -> impl Strategy<Value = HoppingSymbol> {
    let half: Vec<Vec<i64>> = (-2..=2i64)
        .flat_map(|a| (-2..=2i64).map(move |b| vec![a, b]))
        .filter(|h| h[0] > 0 || (h[0] == 0 && h[1] > 0))
        .collect();
    let n = half.len();
    (
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, any::<bool>()), n),
        -1.0..1.0f64,
    )
        .prop_map(move |(vals, diag)| {
            let mut entries = vec![(vec![0, 0], Complex64::new(diag, 0.0))];
            for (h, (re, im, keep)) in half.iter().zip(vals) {
                if keep {
                    let v = Complex64::new(re, im);
                    entries.push((h.clone(), v));
                    entries.push((h.iter().map(|c| -c).collect(), v.conj()));
                }
            }
            HoppingSymbol::new(2, entries).unwrap()
        })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phase_is_antisymmetric(field in any_field(), x in point2(), y in point2(), eps in -0.5..0.5f64) {
        let p = peierls_phase(&field, eps, &x, &y, rule()).unwrap();
        let q = peierls_phase(&field, eps, &y, &x, rule()).unwrap();
        prop_assert!((p + q).abs() <= 1e-12);
    }

    #[test]
    fn phase_is_linear_in_eps(field in prop_oneof![constant_field(), any_field()], x in point2(), y in point2(),
                              eps in -0.5..0.5f64, s in -1.0..1.0f64) {
        prop_assume!(!matches!(field, FieldSpec::SlowlyVarying(_)));
        let p = peierls_phase(&field, eps, &x, &y, rule()).unwrap();
        let q = peierls_phase(&field, s * eps, &x, &y, rule()).unwrap();
        prop_assert!((q - s * p).abs() <= 1e-12 * (1.0 + p.abs()));
    }

    #[test]
    fn constant_field_cocycle_vanishes(field in constant_field(), x in point2(), y in point2(), z in point2(),
                                       eps in -0.5..0.5f64) {
        let d = cocycle_defect(&field, eps, &x, &y, &z, rule()).unwrap();
        prop_assert!(d.abs() <= 1e-13);
    }

    #[test]
    fn peierls_matrix_is_hermitian_with_bare_pattern(symbol in symbol2(), field in any_field(), eps in -0.5..0.5f64) {
        let lattice = LatticeBox::new(2, 3);
        let m = build_peierls_matrix(&symbol, &field, eps, &lattice, rule()).unwrap();
        let bare = bare_matrix(&symbol, &lattice).unwrap();
        prop_assert_eq!(m.hermiticity_defect(), 0.0);
        prop_assert_eq!(m.pattern(), bare.pattern());
        for (a, b) in m.values().iter().zip(bare.values()) {
            prop_assert!((a.norm() - b.norm()).abs() <= 1e-14 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn spectrum_is_gauge_invariant(symbol in symbol2(), field in any_field(), eps in -0.5..0.5f64,
                                   chi in prop::collection::vec(0.0..std::f64::consts::TAU, 25)) {
        let m = build_peierls_matrix(&symbol, &field, eps, &LatticeBox::new(2, 2), rule()).unwrap();
        let a = dense_eigenvalues(&m, 100).unwrap();
        let b = dense_eigenvalues(&m.conjugate_by_phases(&chi), 100).unwrap();
        let scale = 1.0 + max_abs(&a);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn edges_respect_schur_bound(symbol in symbol2(), field in any_field(), eps in -0.5..0.5f64) {
        let m = build_peierls_matrix(&symbol, &field, eps, &LatticeBox::new(2, 3), rule()).unwrap();
        let ev = dense_eigenvalues(&m, 100).unwrap();
        let bound = symbol.schur_alpha_norm(0.0) + symbol.tail_bound(0.0);
        prop_assert!(max_abs(&ev) <= bound * (1.0 + 1e-12));
        prop_assert!(max_abs(&ev) <= m.schur_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn compression_is_monotone(symbol in symbol2(), field in any_field(), eps in -0.5..0.5f64) {
        let small = build_peierls_matrix(&symbol, &field, eps, &LatticeBox::new(2, 2), rule()).unwrap();
        let large = build_peierls_matrix(&symbol, &field, eps, &LatticeBox::new(2, 3), rule()).unwrap();
        let a = dense_eigenvalues(&small, 100).unwrap();
        let b = dense_eigenvalues(&large, 100).unwrap();
        let tol = 1e-12 * (1.0 + max_abs(&b));
        prop_assert!(b[b.len() - 1] >= a[a.len() - 1] - tol);
        prop_assert!(b[0] <= a[0] + tol);
    }

    #[test]
    fn mollified_kernel_is_dominated(symbol in symbol2(), delta in 0.05..1.5f64, alpha in 0.0..2.5f64) {
        let moll = Mollifier::with_default_step(2, delta).unwrap();
        let k = mollified_kernel(&symbol, &moll).unwrap();
        prop_assert!(k.ratios.values().all(|r| (0.0..=1.0).contains(r)));
        prop_assert!(mollified_schur_norm(&k, alpha) <= symbol.schur_alpha_norm(alpha) * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn convex_samples_have_zero_defect(a in 0.1..5.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
                                       start in -2.0..0.0f64, n in 5usize..40, beta in 0.5..1.0f64) {
        let h = 1.0 / 32.0;
        let samples: Vec<(f64, f64)> =
            (0..n).map(|i| { let x = start + i as f64 * h; (x, a * x * x + b * x + c + (x * b).exp()) }).collect();
        prop_assert_eq!(midconvex_defect(&samples, beta).unwrap(), 0.0);
    }

    #[test]
    fn power_fit_recovers_exponent(p in 0.5..1.0f64, c in 0.1..10.0f64) {
        let pts: Vec<(f64, f64)> = (3..=10).map(|k| { let e = 0.5f64.powi(k); (e, c * e.powf(p)) }).collect();
        let fit = fit_power_points(&pts).unwrap();
        prop_assert!((fit.p - p).abs() <= 1e-10);
        prop_assert!((fit.c - c).abs() <= 1e-9 * c);
    }

    #[test]
    fn modulus_dominates_smooth_samples(amp in 0.1..2.0f64, k in 0.1..3.0f64, shift in -1.0..1.0f64) {
        let h = 1.0 / 64.0;
        let xs: Vec<f64> = (-64..=64).map(|i| i as f64 * h).collect();
        let samples: Vec<(f64, f64)> = xs.iter().map(|&x| (x, amp * (k * x + shift).sin())).collect();
        let m = midconvex_defect(&samples, 1.0).unwrap();
        let s = samples.iter().fold(0.0f64, |a, p| a.max(p.1.abs()));
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                let eta = (j - i) as f64 * h;
                if eta >= 0.5 {
                    break;
                }
                let bound = nenciu_modulus(m, s, 1.0, eta).unwrap();
                prop_assert!((samples[j].1 - samples[i].1).abs() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn sweep_csv_round_trips(raw in prop::collection::vec((1e-6..0.5f64, -10.0..10.0f64, 0.0..1e-9f64), 1..12),
                             base in -10.0..10.0f64) {
        let mut eps: Vec<f64> = raw.iter().map(|r| r.0).collect();
        eps.sort_by(f64::total_cmp);
        eps.dedup();
        let result = |value: f64, residual: f64| EdgeResult { value, which: Which::Sup, residual, matvecs: 0, method: Method::Dense };
        let points: Vec<(f64, EdgeResult)> = eps.iter().zip(&raw).map(|(&e, r)| (e, result(r.1, r.2))).collect();
        let sweep = EdgeSweep::from_edges(Which::Sup, result(base, 0.0), points, 1e-7, None, 4.0);
        let mut buf = Vec::new();
        write_sweep_csv(&sweep, &mut buf).unwrap();
        let back = sweep_from_rows(&read_sweep_csv(buf.as_slice()).unwrap(), Which::Sup).unwrap();
        prop_assert_eq!(&back.eps, &sweep.eps);
        prop_assert_eq!(&back.edges, &sweep.edges);
        prop_assert_eq!(&back.deltas, &sweep.deltas);
        prop_assert_eq!(&back.flagged, &sweep.flagged);
        prop_assert_eq!(back.base, sweep.base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symbol_json_round_trips(symbol in symbol2()) {
        let back = HoppingSymbol::from_json(&symbol.to_json()).unwrap();
        prop_assert_eq!(back.support_len(), symbol.support_len());
        for (h, v) in symbol.iter() {
            prop_assert_eq!(back.get(h), *v);
        }
    }
}
