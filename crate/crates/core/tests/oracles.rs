mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rruc_core::dispatch::{economic_dispatch, DispatchUnit};
use rruc_core::hydro::{balance, brute_force_optimum, check_theorem1, BalanceProblem};

use common::*;

#[test]
fn hydro_oracles_agree_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..60 {
        let (d, u) = random_hydro(&mut rng, 3, 7);
        let memo = hydro_optimum(&d, &u);
        let literal = hydro_enumerate(&d, &u);
        assert!((memo - literal).abs() <= 1e-9 * (1.0 + literal), "{memo} vs {literal}");
    }
}

#[test]
fn library_optimum_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let (d, u) = random_hydro(&mut rng, 4, 10);
        let p = BalanceProblem::new(d.clone(), u.clone()).unwrap();
        let lib = brute_force_optimum(&p).unwrap().variance;
        let oracle = hydro_optimum(&d, &u);
        assert!((lib - oracle).abs() <= 1e-9 * (1.0 + oracle), "{lib} vs {oracle}");
    }
}

#[test]
fn heap_placement_respects_gap_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (d, u) = random_hydro(&mut rng, 4, 9);
        let p = BalanceProblem::new(d.clone(), u.clone()).unwrap();
        let alg = balance(&p).variance;
        let opt = hydro_optimum(&d, &u);
        let k = u.iter().map(|h| h.capacity).fold(0.0, f64::max);
        assert!(alg >= opt - 1e-9);
        assert!(alg - opt <= k * k + 2.0 * k * opt.sqrt() + 1e-9);
        assert!(check_theorem1(&p).unwrap().holds);
    }
}

#[test]
fn hand_checked_hydro_instance() {
    // One 4 MW unit for one of [10, 6, 6]: placing it at 10 leaves [6, 6, 6].
    let u = vec![rruc_core::fleet::HydroUnit { id: "a".into(), capacity: 4.0, period_budget: 1 }];
    let d = vec![10.0, 6.0, 6.0];
    assert_eq!(hydro_optimum(&d, &u), 0.0);
    assert_eq!(hydro_enumerate(&d, &u), 0.0);
    let p = BalanceProblem::new(d, u).unwrap();
    assert_eq!(balance(&p).residual, vec![6.0, 6.0, 6.0]);
}

#[test]
fn dispatch_matches_kkt_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..150 {
        let (units, demand) = random_dispatch(&mut rng, 6);
        let r = economic_dispatch(&units, demand).unwrap();
        let (oracle, p) = dispatch_oracle(&units, demand);
        assert!(
            (r.running_cost - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "{} vs {oracle} ({p:?} vs {:?})",
            r.running_cost,
            r.p
        );
    }
}

#[test]
fn dispatch_oracle_hand_case() {
    // Equal curves split 100 MW evenly at λ = 2·0.1·50 + 1 = 11.
    let u = DispatchUnit { a: 0.1, b: 1.0, c: 0.0, lo: 0.0, hi: 100.0, penalty: 0.0 };
    let (cost, p) = dispatch_oracle(&[u, u], 100.0);
    assert!((p[0] - 50.0).abs() < 1e-9 && (p[1] - 50.0).abs() < 1e-9);
    assert!((cost - 2.0 * (0.1 * 2500.0 + 50.0)).abs() < 1e-9);
    let r = economic_dispatch(&[u, u], 100.0).unwrap();
    assert!((r.lambda - 11.0).abs() < 1e-6);
}
