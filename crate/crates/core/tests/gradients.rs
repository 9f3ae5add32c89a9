mod common;

use common::grad::gradient_suite;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..20 {
        let r = gradient_suite(seed);
        eprintln!("seed {seed}: checked {} non-smooth {} worst {:.2e}", r.checked, r.non_smooth, r.worst);
        assert!(r.failures.is_empty(), "seed {seed}: {:#?}", r.failures);
        assert!(r.non_smooth * 20 < r.checked, "seed {seed}: too many kinks {r:?}");
    }
}
