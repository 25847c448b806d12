//! First-order self-convergence in the time step.

mod common;

use chb_core::discretization::TimeSpec;
use chb_core::forward::StateSolver;
use chb_core::objective::ControlField;

#[test]
fn terminal_phase_field_converges_first_order_in_tau() {
    let mut cfg = common::reference();
    cfg.nx = 12;
    cfg.ny = 12;
    let g = cfg.grid().unwrap();
    let phi0 = cfg.disc_field(g, 2.0);
    let terminal = |nt: usize| {
        let t = TimeSpec::new(0.5, nt).unwrap();
        let s = StateSolver::new(g, t, cfg.params, cfg.potential, cfg.solver).unwrap();
        let u = ControlField::constant(g, t, 0.5);
        s.solve_forward(&u, &phi0).unwrap().last().phi.clone()
    };
    let reference = terminal(640);
    let errs: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&nt| terminal(nt).zip_map(&reference, |a, b| a - b).unwrap().norm_l2())
        .collect();
    for w in errs.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((0.8..=1.3).contains(&rate), "rate {rate} from {errs:?}");
    }
}
