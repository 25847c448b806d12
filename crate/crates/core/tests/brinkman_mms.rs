//! Manufactured solution for the Brinkman subproblem on the unit square.
//!
//! `v = (sin πx sin²πy, sin πy sin²πx)` with `p = (2η + λ) div v` has zero
//! traction on every side, and `f = -η Δv + η ∇div v + ν v`.

mod common;

use common::brinkman_errors;

#[test]
fn second_order_velocity_and_exact_constraint() {
    let e: Vec<_> = [16, 32, 64].iter().map(|&n| brinkman_errors(n)).collect();
    for w in e.windows(2) {
        let rate_v = (w[0].0 / w[1].0).log2();
        let rate_p = (w[0].1 / w[1].1).log2();
        assert!(rate_v >= 1.5, "velocity rate {rate_v}: {e:?}");
        assert!(rate_p >= 1.0, "pressure rate {rate_p}: {e:?}");
    }
    for (_, _, res) in &e {
        assert!(*res <= 1e-9, "{e:?}");
    }
}
