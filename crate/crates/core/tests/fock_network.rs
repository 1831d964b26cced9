use memspin::fock::{cz_input, cz_network, run_with_feedforward, GateStage, Policy, StageRole, CZ_ANCILLA};
use memspin::unitary::UnitarySpec;
use num_complex::Complex64 as C64;

fn basis(q: usize) -> [C64; 4] {
    let mut v = [C64::new(0.0, 0.0); 4];
    v[q] = C64::new(1.0, 0.0);
    v
}

#[test]
fn failure_branches_carry_the_rest() {
    let stages = cz_network().unwrap();
    let r = run_with_feedforward(&stages, &cz_input(basis(3)).unwrap(), &Policy::herald(&CZ_ANCILLA)).unwrap();
    assert!((r.success_probability - 1.0 / 16.0).abs() < 1e-10);
    assert!((r.failure_probability - 15.0 / 16.0).abs() < 1e-10);
    assert!(!r.rejected.is_empty());
    assert!(r.rejected.iter().all(|(patterns, _)| patterns.last() != Some(&CZ_ANCILLA.to_vec())));
    assert!((r.rejected.iter().map(|(_, p)| p).sum::<f64>() - 15.0 / 16.0).abs() < 1e-10);
}

#[test]
fn qubit_swap_symmetry() {
    let stages = cz_network().unwrap();
    let policy = Policy::herald(&CZ_ANCILLA);
    let run = |q| run_with_feedforward(&stages, &cz_input(basis(q)).unwrap(), &policy).unwrap();
    let (a, b) = (run(1), run(2));
    assert!((a.success_probability - b.success_probability).abs() < 1e-12);
    let fid = |r: &memspin::fock::FeedForwardResult, q| {
        let target = memspin::fock::cz_target(basis(q)).unwrap();
        r.accepted[0].conditioned_state.fidelity(&target)
    };
    assert!((fid(&a, 1) - fid(&b, 2)).abs() < 1e-12);
}

#[test]
fn identity_stages_always_succeed() {
    let stages = vec![GateStage::new("id", StageRole::Write, UnitarySpec::identity(4), vec![0, 1, 2, 3])];
    let plus = [C64::new(0.5, 0.0); 4];
    let input = memspin::fock::dual_rail_state(plus, &[]).unwrap();
    let r = run_with_feedforward(&stages, &input, &Policy::accept_all()).unwrap();
    assert!((r.success_probability - 1.0).abs() < 1e-12);
    assert!((r.accepted[0].conditioned_state.fidelity(&input) - 1.0).abs() < 1e-12);
}
