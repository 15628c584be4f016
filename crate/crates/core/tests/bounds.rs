use proptest::prelude::*;
use vgstein::bounds::{d2_bound, gamma_coefficients, vg_bound, BoundVariant};
use vgstein::stein::{bound_constants, HNorms};
use vgstein::vgdist::MomentBundle;

fn norms() -> HNorms {
    HNorms { centered: 2.0, d1: 1.0, d2: 1.0, d3: 1.0 }
}

#[test]
fn d2_reference_values() {
    let d = d2_bound(100, 100, &norms()).unwrap();
    let k = (std::f64::consts::PI / 2.0).sqrt() + 1.0;
    let (m3, m4) = (61.0 * k, 432.0 * k);
    assert!((d.report.m3 - m3).abs() < 1e-12 * m3);
    assert!((d.report.m4 - m4).abs() < 1e-12 * m4);
    assert!((d.min - (0.09 * m3 + 0.01 * m4)).abs() < 1e-12 * d.min);
    assert_eq!(d.a, d.b);
}

#[test]
fn generic_path_reproduces_d2_bitwise() {
    let rad = MomentBundle::rademacher();
    for (m, n) in [(1, 1), (2, 8), (8, 2), (37, 101), (1000, 3)] {
        for nm in [norms(), HNorms { centered: 1.3, d1: 0.2, d2: 4.0, d3: 0.7 }] {
            let d = d2_bound(m, n, &nm).unwrap();
            let generic = vg_bound(&rad, &rad, m, n, 1, &nm, true).unwrap();
            assert_eq!(generic.total.to_bits(), d.min.to_bits(), "({m},{n})");
            assert_eq!(generic.as_stated_total.to_bits(), d.a.to_bits());
            assert_eq!(generic.swapped_total.unwrap().to_bits(), d.b.to_bits());
        }
    }
}

#[test]
fn d2_limit_in_m() {
    let d = d2_bound(1 << 50, 5, &norms()).unwrap();
    assert!((d.a - d.report.m4 / 5.0).abs() < 1e-10 * d.a);
}

#[test]
fn r_prefactor() {
    let rad = MomentBundle::rademacher();
    let (g1, g2, g3) = gamma_coefficients(&rad, &rad, 30, 12).unwrap();
    for r in [1u32, 2, 3, 5] {
        let rep = vg_bound(&rad, &rad, 30, 12, r, &norms(), false).unwrap();
        let mk = bound_constants(r, 1.0, &norms()).unwrap();
        let expect = r as f64 * ((g1 * mk[2] + g2 * mk[3]) + g3 * mk[4]);
        assert_eq!(rep.total.to_bits(), expect.to_bits());
        assert_eq!(rep.variant, BoundVariant::AsStated);
    }
}

#[test]
fn gammas_vanish_for_large_samples() {
    let u = MomentBundle::uniform_pm();
    let (g1, g2, g3) = gamma_coefficients(&u, &u, 1 << 40, 1 << 40).unwrap();
    assert!(g1 < 1e-9 && g2 < 1e-9 && g3 < 1e-9);
}

fn law(i: u8) -> MomentBundle {
    match i % 3 {
        0 => MomentBundle::rademacher(),
        1 => MomentBundle::gaussian(),
        _ => MomentBundle::uniform_pm(),
    }
}

proptest! {
    #[test]
    fn gammas_nonincreasing(lx in 0u8..3, ly in 0u8..3, m in 1u64..500, n in 1u64..500, dm in 0u64..50, dn in 0u64..50) {
        let (a, b) = (law(lx), law(ly));
        let g = gamma_coefficients(&a, &b, m, n).unwrap();
        let h = gamma_coefficients(&a, &b, m + dm, n + dn).unwrap();
        prop_assert!(h.0 <= g.0 && h.1 <= g.1 && h.2 <= g.2);
        let t = vg_bound(&a, &b, m, n, 2, &norms(), true).unwrap().total;
        let u = vg_bound(&a, &b, m + dm, n + dn, 2, &norms(), true).unwrap().total;
        prop_assert!(u <= t);
    }

    #[test]
    fn symmetrized_is_smaller(lx in 0u8..3, ly in 0u8..3, m in 1u64..500, n in 1u64..500, r in 1u32..6) {
        let (a, b) = (law(lx), law(ly));
        let sym = vg_bound(&a, &b, m, n, r, &norms(), true).unwrap();
        let one = vg_bound(&a, &b, m, n, r, &norms(), false).unwrap();
        let other = vg_bound(&b, &a, n, m, r, &norms(), false).unwrap();
        prop_assert!(sym.total <= one.total && sym.total <= other.total);
        prop_assert_eq!(sym.total, one.total.min(other.total));
    }
}
