mod common;

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let v = common::a3_gradient_check();
    assert!(v.pass, "{}", v.detail);
    println!("{}", v.detail);
}
