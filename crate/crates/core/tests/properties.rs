//! Randomized properties behind A2, A4 and A8, plus the fast acceptance
//! checks as plain tests.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ray_invariants_hold(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Err(e) = common::a4_case(&mut rng) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn unbiased_weight_maximum() {
    let v = common::a1_unbiasedness();
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn udf_density_matches_sdf_density_with_oracle_visibility() {
    let v = common::a2_sdf_equivalence();
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn invariants_on_a_thousand_rays() {
    let v = common::a4_invariants();
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn open_and_closed_extraction() {
    let v = common::a5_extraction();
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn analytic_fields_are_eikonal() {
    let v = common::a8_analytic_eikonal();
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn sampling_budget_and_concentration() {
    let v = common::a9_sampling();
    assert!(v.pass, "{}", v.detail);
}
