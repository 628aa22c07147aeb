use mkdv_orbit::abelmat::{
    basis_identity_residual, det_closed_form, matKM, matL, transform_D, transform_D_inverse, CMat3, CVec3,
    PhaseState, C64,
};
use mkdv_orbit::curve::{ktilde, ktilde_hat, make_curve, Case, CurveParams, CurvePointHat};
use mkdv_orbit::observe::{abel_increment, gauge_a, psi_r, trapezoid_cumulative};
use mkdv_orbit::orbit::{rhs, step, IntegratorConfig};
use proptest::prelude::*;

fn curve_strategy() -> impl Strategy<Value = CurveParams> {
    (1.001f64..1.2, 1.001f64..1.2, 1.001f64..1.2).prop_filter_map("need distinct moduli", |(a, b, c)| {
        let mut k = [a, b, c];
        k.sort_by(|x, y| y.partial_cmp(x).unwrap());
        if k[0] - k[1] < 1e-4 || k[1] - k[2] < 1e-4 {
            return None;
        }
        make_curve(k[0], k[1], k[2], Case::A).ok()
    })
}

/// Curve plus a state whose angles are in `0.95` of the arc and pairwise apart.
fn curve_and_state() -> impl Strategy<Value = (CurveParams, PhaseState)> {
    curve_strategy().prop_flat_map(|c| {
        let lim = 0.95;
        (
            Just(c),
            proptest::array::uniform3(-lim..lim),
            proptest::array::uniform3(prop_oneof![Just(1i8), Just(-1i8)]),
        )
            .prop_filter_map("separated angles", |(c, u, g)| {
                let phi: [f64; 3] = u.map(|x: f64| x * c.phi_b_plus);
                let sep = [(0, 1), (0, 2), (1, 2)]
                    .iter()
                    .map(|&(a, b)| (phi[a] - phi[b]).sin().abs())
                    .fold(f64::INFINITY, f64::min);
                if sep < 0.05 {
                    return None;
                }
                PhaseState::new(&c, phi, g).ok().map(|s| (c, s))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lambda6_matches_closed_form(c in curve_strategy()) {
        prop_assert!((c.lambda6 - c.lambda6_closed_form()).abs() < 1e-12);
        prop_assert!(c.phi_b_plus > 0.0 && c.phi_b_plus < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn ktilde_is_even_and_bounded(c in curve_strategy(), u in -1.0f64..1.0) {
        let phi = u * c.phi_b_plus;
        let k = ktilde(&c, phi).unwrap();
        prop_assert!(k >= 0.0);
        prop_assert!(k <= 1.0 / c.kprod + 1e-15);
        prop_assert!((k - ktilde(&c, -phi).unwrap()).abs() <= 1e-15);
    }

    #[test]
    fn curve_points_satisfy_the_equation((c, s) in curve_and_state()) {
        for a in 0..3 {
            let p = CurvePointHat { phi: s.phi[a], sheet: s.sheet[a] };
            prop_assert!(p.curve_residual(&c).unwrap() < 1e-10);
            prop_assert!(((p.x(&c) - c.b0).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn branch_chart_factor_matches(c in curve_strategy(), t in 1e-3f64..0.3) {
        let phi = c.phi_b_plus - t * t;
        prop_assume!(phi > 0.0);
        let t = (c.phi_b_plus - phi).sqrt();
        let direct = ktilde(&c, phi).unwrap();
        prop_assert!((direct - t * ktilde_hat(&c, t)).abs() <= 1e-12 * direct.max(1e-6));
    }

    #[test]
    fn pullback_identities((c, s) in curve_and_state()) {
        prop_assert!(basis_identity_residual(&c, &s).unwrap() < 1e-10);
        let l = matL(&c, &s).unwrap();
        prop_assert!((matKM(&c, &s).unwrap() * l - CMat3::identity()).camax() < 1e-10);
        let det = det_closed_form(&c, &s).unwrap();
        prop_assert!((l.determinant() - det).norm() <= 1e-10 * det.norm());
        let du = abel_increment(&c, &s, 1e-3).unwrap();
        prop_assert!(du.iter().all(|z| z.im.abs() < 1e-13));
    }

    #[test]
    fn rhs_is_permutation_equivariant((c, s) in curve_and_state()) {
        let r = rhs(&c, &s).unwrap();
        let perm = [2, 0, 1];
        let rp = rhs(&c, &s.permuted(perm)).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert!((rp[i] - r[p]).abs() <= 1e-12 * (1.0 + r[p].abs()));
        }
        prop_assert!((psi_r(&s) - psi_r(&s.permuted(perm))).abs() < 1e-15);
    }

    #[test]
    fn sheet_flip_reverses_the_field((c, s) in curve_and_state()) {
        let mut f = s;
        f.sheet = s.sheet.map(|g| -g);
        let r = rhs(&c, &s).unwrap();
        let rf = rhs(&c, &f).unwrap();
        for a in 0..3 {
            prop_assert_eq!(rf[a], -r[a]);
        }
        prop_assert!((gauge_a(&c, &s).unwrap() - gauge_a(&c, &f).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn steps_stay_on_the_arc((c, s) in curve_and_state()) {
        let cfg = IntegratorConfig { ds: 1e-4, ..Default::default() };
        let mut st = s;
        for _ in 0..20 {
            match step(&c, &st, &cfg) {
                Ok(o) => st = o.state,
                Err(_) => break,
            }
            prop_assert!(st.phi.iter().all(|p| c.contains(*p, 1e-9)));
        }
    }

    #[test]
    fn transform_d_round_trip(re in proptest::array::uniform3(-10.0f64..10.0), im in proptest::array::uniform3(-10.0f64..10.0)) {
        let v = CVec3::new(C64::new(re[0], im[0]), C64::new(re[1], im[1]), C64::new(re[2], im[2]));
        prop_assert!((transform_D_inverse(&transform_D(&v)) - v).camax() < 1e-13);
        prop_assert!((transform_D(&transform_D_inverse(&v)) - v).camax() < 1e-13);
    }

    #[test]
    fn trapezoid_of_a_constant(cst in -5.0f64..5.0, steps in proptest::collection::vec(1e-3f64..1.0, 1..50)) {
        let mut s = vec![0.0];
        for d in &steps {
            s.push(s.last().unwrap() + d);
        }
        let f = vec![cst; s.len()];
        let out = trapezoid_cumulative(&s, &f);
        prop_assert_eq!(out[0], 0.0);
        let last = *s.last().unwrap();
        prop_assert!((out.last().unwrap() - cst * last).abs() <= 1e-12 * (1.0 + (cst * last).abs()));
    }
}
