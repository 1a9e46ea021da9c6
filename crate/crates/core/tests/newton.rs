use std::sync::Arc;

use cnpdg::assembly::{Assembler, DgParams, Problem};
use cnpdg::fespace::{BlockState, FeSpace};
use cnpdg::linalg::{GmgLevels, LinearOperator, SmootherConfig};
use cnpdg::mesh::{BoundaryTag, Mesh, MeshHierarchy};
use cnpdg::nonlinear::{
    initial_guess, newton_solve, solve_problem, BlockPc, LinearConfig, LinearSolver, NewtonConfig, NonlinearError,
};
use cnpdg::physics::MmsCase;

fn mms_setup(dim: usize, coarse: usize, refinements: usize, p: usize) -> (Assembler, LinearSolver) {
    let mut h = MeshHierarchy::new(Mesh::unit_box(dim, &vec![coarse; dim]).unwrap());
    for _ in 0..refinements {
        h = h.refine_uniform();
    }
    let asm = Assembler::multilevel(&h, p, Arc::new(Problem::mms(&MmsCase::new())), DgParams::default()).unwrap();
    let space = asm.space().clone();
    let levels = Arc::new(GmgLevels::new(&h, space.basis(), SmootherConfig::default()).unwrap());
    let lin = LinearSolver::new(space.mesh(), space.dofs_per_element(), Some(levels), LinearConfig::default()).unwrap();
    (asm, lin)
}

#[test]
fn mms_newton_converges_monotonically() {
    let (asm, lin) = mms_setup(2, 2, 2, 1);
    let x0 = initial_guess(&asm, &lin, 1e-2).unwrap();
    let (x, rep) = solve_problem(&asm, x0, &lin, &NewtonConfig::default()).unwrap();
    assert!(rep.converged);
    assert!(rep.iterations() <= 10, "{}", rep.summary());
    for w in rep.residual_norms.windows(2) {
        assert!(w[1] <= w[0]);
    }
    assert_eq!(rep.total_outer_iterations(), rep.outer_iterations.iter().sum::<usize>());
    let space = asm.space();
    let ep = space.l2_error(x.field(0), MmsCase::potential);
    let ec = space.l2_error(x.field(1), MmsCase::concentration);
    assert!(ep < 1e-2 && ec < 1e-2, "{ep} {ec}");
}

#[test]
fn exact_solution_is_near_fixed_point() {
    let (asm, lin) = mms_setup(2, 2, 2, 2);
    let space = asm.space();
    let x0 = BlockState::from_fields(&[space.interpolate(MmsCase::potential), space.interpolate(MmsCase::concentration)]).unwrap();
    let (_, rep) = solve_problem(&asm, x0, &lin, &NewtonConfig::default()).unwrap();
    assert!(rep.iterations() <= 2, "{}", rep.summary());
}

#[test]
fn affine_residual_takes_one_step() {
    let (asm, _) = mms_setup(2, 2, 1, 1);
    let space = asm.space().clone();
    let xs = BlockState::from_fields(&[space.interpolate(MmsCase::potential), space.interpolate(MmsCase::concentration)]).unwrap();
    let jac = asm.jacobian(&xs).unwrap();
    let target: Vec<f64> = (0..xs.as_slice().len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let op = jac.operator().clone();
    let res = |x: &BlockState| {
        let d: Vec<f64> = x.as_slice().iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut y = vec![0.0; d.len()];
        op.apply(&d, &mut y);
        Ok(BlockState::from_vec(2, x.block_len(), y).unwrap())
    };
    let mut cfg = LinearConfig::default();
    cfg.outer.rtol = 1e-10;
    cfg.concentration.pc = BlockPc::Asm;
    cfg.potential.pc = BlockPc::Asm;
    let lin = LinearSolver::new(space.mesh(), space.dofs_per_element(), None, cfg).unwrap();
    let (x, rep) = newton_solve(res, |_| Ok(jac.clone()), asm.zero_state(), &lin, &NewtonConfig::default()).unwrap();
    assert_eq!(rep.iterations(), 1);
    for (a, b) in x.as_slice().iter().zip(&target) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn newton_direction_matches_difference_jacobian() {
    let (asm, _) = mms_setup(2, 2, 0, 1);
    let space = asm.space().clone();
    let mut cfg = LinearConfig::default();
    cfg.outer.rtol = 1e-12;
    cfg.potential.pc = BlockPc::Asm;
    cfg.concentration.pc = BlockPc::Asm;
    let lin = LinearSolver::new(space.mesh(), space.dofs_per_element(), None, cfg).unwrap();
    let x = initial_guess(&asm, &lin, 1e-2).unwrap();
    let r = asm.residual(&x).unwrap();
    let n = r.as_slice().len();
    let mut delta = vec![0.0; n];
    let b: Vec<f64> = r.as_slice().iter().map(|v| -v).collect();
    lin.solve(&asm.jacobian(&x).unwrap(), &b, &mut delta).unwrap();
    // dense difference Jacobian
    let eps = 1e-7;
    let mut jfd = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.as_mut_slice()[j] += eps;
        xm.as_mut_slice()[j] -= eps;
        let (rp, rm) = (asm.residual(&xp).unwrap(), asm.residual(&xm).unwrap());
        for i in 0..n {
            jfd[(i, j)] = (rp.as_slice()[i] - rm.as_slice()[i]) / (2.0 * eps);
        }
    }
    let dfd = jfd.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
    let err = dfd.iter().zip(&delta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let nrm = dfd.norm();
    assert!(err < 1e-4 * nrm, "{err} vs {nrm}");
}

#[test]
fn neumann_initial_guess_is_constant_potential() {
    // inlet/outlet/walls, no electrodes: constant concentrations solve the charge equation with Φ = 0
    let mesh = Mesh::unit_box(2, &[4, 2]).unwrap().retag(|f, x| match f.local_face / 2 {
        0 if x[0] < 0.5 => BoundaryTag::Inlet,
        0 => BoundaryTag::Outlet,
        _ => BoundaryTag::Wall,
    });
    let space = Arc::new(FeSpace::new(Arc::new(mesh), 1).unwrap());
    let mut pr = Problem::mms(&MmsCase::new());
    pr.dirichlet = None;
    pr.species_source = None;
    pr.charge_source = None;
    let asm = Assembler::new(space.clone(), Arc::new(pr), DgParams::default()).unwrap();
    let mut cfg = LinearConfig::default();
    cfg.potential.pc = BlockPc::Asm;
    cfg.concentration.pc = BlockPc::Asm;
    let lin = LinearSolver::new(space.mesh(), space.dofs_per_element(), None, cfg).unwrap();
    let x = initial_guess(&asm, &lin, 1e-2).unwrap();
    assert!(x.field(0).iter().all(|&v| v == 0.0));
    assert!(x.field(1).iter().all(|&v| v == 1.0));
    assert!(asm.residual(&x).unwrap().as_slice().iter().all(|v| v.abs() < 1e-13));
}

#[test]
fn gmg_without_hierarchy_is_rejected() {
    let mesh = Mesh::unit_box(2, &[2, 2]).unwrap();
    let err = LinearSolver::new(&mesh, 4, None, LinearConfig::default()).err().unwrap();
    assert!(matches!(err, NonlinearError::Config(_)));
}
