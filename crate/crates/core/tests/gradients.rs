mod support;

#[test]
fn analytic_gradients_match_central_differences() {
    let r = support::gradient_check(10, 12, 64, 1e-3, 2024);
    assert!(r.checked >= 100, "{r:?}");
    assert!(r.max_rel < 1e-4, "{r:?}");
}

#[test]
fn small_dimensions() {
    let r = support::gradient_check(20, 6, 3, 1e-3, 7);
    assert!(r.max_rel < 1e-4, "{r:?}");
}
