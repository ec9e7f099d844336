use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srb_core::lattice::{
    angle_diff, apply_s0, cat_power_fixed, apply_s_eps, differential_ds_eps, free_map_power, from_w_basis, lambda, metric, to_w_basis,
    torus_dist, v_minus, v_plus, wrap_angle,
};
use srb_core::{Lattice, LatticeState, SineCoupling, TrigPolynomialCoupling, ZeroCoupling};
use std::f64::consts::{PI, TAU};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn cat_map_on_special_points() {
    assert_eq!(apply_s0([0.0, 0.0]), [0.0, 0.0]);
    let q = apply_s0([PI, PI]);
    assert!(torus_dist(q, [0.0, PI]) < 1e-15, "{q:?}");
}

#[test]
fn cat_map_squared_is_a_squared() {
    let mut r = rng(1);
    for _ in 0..100 {
        let st = LatticeState::random(Lattice::new(1, 1).unwrap(), &mut r);
        let p = st.psi[0];
        let twice = apply_s0(apply_s0(p));
        // A² = [[2,3],[3,5]]
        let direct = [wrap_angle(2.0 * p[0] + 3.0 * p[1]), wrap_angle(3.0 * p[0] + 5.0 * p[1])];
        assert!(torus_dist(twice, direct) < 1e-13);
    }
}

#[test]
fn zero_eps_is_sitewise_cat_map() {
    let lat = Lattice::new(2, 1).unwrap();
    let st = LatticeState::random(lat, &mut rng(2));
    let a = apply_s_eps(&st, &SineCoupling, 0.0);
    for s in 0..lat.len() {
        assert_eq!(a.psi[s], apply_s0(st.psi[s]));
    }
}

#[test]
fn sine_coupling_ignores_uniform_states() {
    let lat = Lattice::new(1, 3).unwrap();
    let st = LatticeState::uniform(lat, [1.3, 4.4]);
    let a = apply_s_eps(&st, &SineCoupling, 0.3);
    let b = apply_s_eps(&st, &SineCoupling, 0.0);
    assert!(a.max_site_dist(&b) < 1e-14);
}

#[test]
fn hand_coded_d1_n1_step() {
    let lat = Lattice::new(1, 1).unwrap();
    let st = LatticeState::random(lat, &mut rng(3));
    let eps = 0.1;
    let out = apply_s_eps(&st, &SineCoupling, eps);
    let s5 = 5f64.sqrt();
    let vp = {
        let v = [1.0, (1.0 + s5) / 2.0];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    };
    let p = &st.psi;
    for x in 0..3 {
        let l = (x + 2) % 3;
        let r = (x + 1) % 3;
        let f = (p[x][0] - p[l][0]).sin() + (p[x][0] - p[r][0]).sin();
        let want = [
            (p[x][0] + p[x][1] + eps * f * vp[0]).rem_euclid(TAU),
            (p[x][0] + 2.0 * p[x][1] + eps * f * vp[1]).rem_euclid(TAU),
        ];
        assert!(torus_dist(out.psi[x], want) < 1e-13, "site {x}");
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let lat = Lattice::new(1, 2).unwrap();
    let coupling = TrigPolynomialCoupling::standard(1);
    let st = LatticeState::random(lat, &mut rng(4));
    let eps = 0.2;
    let dense = differential_ds_eps(&st, &coupling, eps).to_dense();
    let h = 1e-5;
    for col in 0..2 * lat.len() {
        let mut plus = st.clone();
        let mut minus = st.clone();
        plus.psi[col / 2][col % 2] += h;
        minus.psi[col / 2][col % 2] -= h;
        let fp = apply_s_eps(&plus, &coupling, eps);
        let fm = apply_s_eps(&minus, &coupling, eps);
        for row in 0..2 * lat.len() {
            let fd = angle_diff(fp.psi[row / 2][row % 2], fm.psi[row / 2][row % 2]) / (2.0 * h);
            assert!((fd - dense[(row, col)]).abs() < 1e-8, "({row},{col}) fd {fd} vs {}", dense[(row, col)]);
        }
    }
}

#[test]
fn jacobian_sparsity_and_free_blocks() {
    for (d, n) in [(1, 1), (1, 3), (2, 1), (2, 2), (3, 1)] {
        let lat = Lattice::new(d, n).unwrap();
        let st = LatticeState::random(lat, &mut rng(5));
        let j = differential_ds_eps(&st, &SineCoupling, 0.1);
        assert_eq!(j.nonzero_blocks(), lat.len() * (2 * d + 1));
        let j0 = differential_ds_eps(&st, &SineCoupling, 0.0);
        for xi in 0..lat.len() {
            assert_eq!(j0.block(xi, xi), [[1.0, 1.0], [1.0, 2.0]]);
        }
        for (xi, row) in j0.rows.iter().enumerate() {
            assert!(row.iter().all(|(eta, b)| *eta == xi || *b == [[0.0; 2]; 2]));
        }
    }
}

#[test]
fn free_jacobian_preserves_volume() {
    let lat = Lattice::new(1, 2).unwrap();
    let st = LatticeState::random(lat, &mut rng(6));
    let det = differential_ds_eps(&st, &TrigPolynomialCoupling::standard(1), 0.0).to_dense().determinant();
    assert!((det.abs() - 1.0).abs() < 1e-12, "{det}");
}

#[test]
fn w_basis_unit_vectors() {
    let mut u = vec![[0.0; 2]; 3];
    u[1] = v_plus();
    let c = to_w_basis(&u);
    assert!((c[1][0] - 1.0).abs() < 1e-15 && c[1][1].abs() < 1e-15);
    assert!(c[0] == [0.0; 2] && c[2] == [0.0; 2]);
    u[1] = v_minus();
    let c = to_w_basis(&u);
    assert!(c[1][0].abs() < 1e-15 && (c[1][1] - 1.0).abs() < 1e-15);
    assert!(v_plus()[0] > 0.0);
    // A v_+ = λ^{-1} v_+
    let vp = v_plus();
    let av = [vp[0] + vp[1], vp[0] + 2.0 * vp[1]];
    assert!((av[0] - vp[0] / lambda()).abs() < 1e-14);
}

#[test]
fn free_power_is_exact_group_action() {
    let lat = Lattice::new(1, 2).unwrap();
    let st = LatticeState::random(lat, &mut rng(7));
    for q in st.to_fixed() {
        assert_eq!(cat_power_fixed(cat_power_fixed(q, 37), -37), q);
    }
    let b = free_map_power(&st, 1);
    let c = apply_s_eps(&st, &ZeroCoupling, 0.0);
    assert_eq!(b, c);
}

fn state_strategy(lat: Lattice) -> impl Strategy<Value = LatticeState> {
    prop::collection::vec((0.0..TAU, 0.0..TAU), lat.len())
        .prop_map(move |v| LatticeState::new(lat, v.into_iter().map(|(a, b)| [a, b]).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w_basis_round_trip(v in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..20)) {
        let u: Vec<[f64; 2]> = v.into_iter().map(|(a, b)| [a, b]).collect();
        let back = from_w_basis(&to_w_basis(&u));
        for (x, y) in u.iter().zip(&back) {
            prop_assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_covariance(st in state_strategy(Lattice::new(2, 1).unwrap()), dx in -2i64..3, dy in -2i64..3, eps in -0.3..0.3f64) {
        let c = TrigPolynomialCoupling::standard(2);
        let off = [dx, dy];
        let lhs = apply_s_eps(&st.translate(&off), &c, eps);
        let rhs = apply_s_eps(&st, &c, eps).translate(&off);
        prop_assert!(lhs.max_site_dist(&rhs) < 1e-13);
    }

    #[test]
    fn locality(st in state_strategy(Lattice::new(1, 3).unwrap()), site in 0usize..7, kick in 0.1..6.0f64) {
        let c = TrigPolynomialCoupling::standard(1);
        let lat = st.lattice;
        let mut moved = st.clone();
        moved.psi[site][0] = wrap_angle(moved.psi[site][0] + kick);
        moved.psi[site][1] = wrap_angle(moved.psi[site][1] - kick);
        let a = apply_s_eps(&st, &c, 0.2);
        let b = apply_s_eps(&moved, &c, 0.2);
        for xi in 0..lat.len() {
            if lat.dist(xi, site) > 1 {
                prop_assert_eq!(a.psi[xi], b.psi[xi]);
            }
        }
    }

    #[test]
    fn metric_contract(
        a in state_strategy(Lattice::new(1, 2).unwrap()),
        b in state_strategy(Lattice::new(1, 2).unwrap()),
        c in state_strategy(Lattice::new(1, 2).unwrap()),
    ) {
        prop_assert_eq!(metric(&a, &a), 0.0);
        prop_assert!(metric(&a, &b) > 0.0);
        prop_assert!((metric(&a, &b) - metric(&b, &a)).abs() < 1e-13);
        prop_assert!(metric(&a, &c) <= metric(&a, &b) + metric(&b, &c) + 1e-12);
    }
}
