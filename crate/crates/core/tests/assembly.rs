use std::sync::Arc;

use cnpdg::assembly::{Assembler, DgParams, Problem};
use cnpdg::fespace::{BlockState, FeSpace};
use cnpdg::linalg::{solve, Jacobi, KrylovConfig, KrylovMethod, LinearOperator};
use cnpdg::mesh::{BoundaryTag, Mesh};
use cnpdg::physics::{ButlerVolmer, ElectrodeKinetics, IonSystem, MmsCase, Nondimensionalization, ParabolicFlow, MOLAR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cuso4_kinetics(scales: Nondimensionalization) -> ElectrodeKinetics {
    let sys = IonSystem::bortels_cuso4();
    ElectrodeKinetics {
        bv: ButlerVolmer {
            gamma: 1.0,
            alpha_anodic: 0.5,
            alpha_cathodic: 0.5,
            electrons: 2.0,
            c_ox_star: 10.0,
            c_red_star: None,
            temperature: sys.temperature,
        },
        oxidant: 0,
        reductant: None,
        phi_app_anode: 0.0,
        phi_app_cathode: 0.03,
        j0_mean: 30.0,
        width: 0.01,
        scales,
        c_in: sys.species.iter().map(|s| s.c_in).collect(),
    }
}

/// Unit box with x-faces inlet/outlet, y = 0 cathode, y = 1 anode, rest walls.
fn small_reactor(n: usize, electrodes: bool) -> (Arc<FeSpace>, Arc<Problem>) {
    let mesh = Mesh::unit_box(3, &[n, n, n]).unwrap().retag(|f, x| {
        let ax = f.local_face / 2;
        match ax {
            0 if x[0] < 0.5 => BoundaryTag::Inlet,
            0 => BoundaryTag::Outlet,
            1 if electrodes && x[1] < 0.5 => BoundaryTag::ElectrodeCathode,
            1 if electrodes => BoundaryTag::ElectrodeAnode,
            _ => BoundaryTag::Wall,
        }
    });
    let sys = IonSystem::bortels_cuso4();
    let scales = Nondimensionalization::new(0.01, 0.03, 2.0 * MOLAR, sys.temperature).unwrap();
    let flow = ParabolicFlow { gap: 0.01, u_avg: 0.03 };
    let pr = Problem::reactor(scales.scale(&sys).unwrap(), flow, cuso4_kinetics(scales));
    (Arc::new(FeSpace::new(Arc::new(mesh), 1).unwrap()), Arc::new(pr))
}

fn random_state(asm: &Assembler, rng: &mut ChaCha8Rng, phi_scale: f64) -> BlockState {
    let mut s = asm.zero_state();
    for v in s.field_mut(0) {
        *v = phi_scale * rng.gen_range(-1.0..1.0);
    }
    for f in 1..asm.n_fields() {
        for v in s.field_mut(f) {
            *v = 1.0 + 0.2 * rng.gen_range(-1.0..1.0);
        }
    }
    s
}

/// Max over random directions of |J d − FD(d)| / max|FD(d)|.
fn fd_mismatch(asm: &Assembler, state: &BlockState, rng: &mut ChaCha8Rng) -> f64 {
    let jac = asm.jacobian(state).unwrap();
    let n = state.as_slice().len();
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps = 1e-6;
        let shift = |sgn: f64| {
            let mut s = state.clone();
            for (x, di) in s.as_mut_slice().iter_mut().zip(&d) {
                *x += sgn * eps * di;
            }
            asm.residual(&s).unwrap().into_vec()
        };
        let (rp, rm) = (shift(1.0), shift(-1.0));
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let mut jd = vec![0.0; n];
        jac.operator().apply(&d, &mut jd);
        let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = fd.iter().zip(&jd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / scale);
    }
    worst
}

#[test]
fn jacobian_matches_differences_mms() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (dim, p) in [(2, 1), (2, 2), (3, 1)] {
        let counts = [3, 3, 2];
        let mesh = Arc::new(Mesh::unit_box(dim, &counts[..dim]).unwrap());
        let space = Arc::new(FeSpace::new(mesh, p).unwrap());
        let asm = Assembler::new(space, Arc::new(Problem::mms(&MmsCase::new())), DgParams::default()).unwrap();
        let s = random_state(&asm, &mut rng, 3.0);
        let e = fd_mismatch(&asm, &s, &mut rng);
        assert!(e < 1e-6, "dim {dim} p {p}: {e}");
    }
}

#[test]
fn jacobian_matches_differences_reactor() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (space, pr) = small_reactor(2, true);
    let asm = Assembler::new(space, pr, DgParams::default()).unwrap();
    let s = random_state(&asm, &mut rng, 1.0);
    let e = fd_mismatch(&asm, &s, &mut rng);
    assert!(e < 1e-6, "{e}");

    // electrode terms dominant
    let (space, pr) = small_reactor(2, true);
    let mut pr = (*pr).clone();
    pr.kinetics.as_mut().unwrap().j0_mean = 3e6;
    let asm = Assembler::new(space, Arc::new(pr), DgParams::default()).unwrap();
    let e = fd_mismatch(&asm, &s, &mut rng);
    assert!(e < 1e-6, "{e}");
    // Cu couples to itself at the electrodes only; SO4 has no kinetic coupling
    assert!(asm.block_present(1, 1) && !asm.block_present(1, 2) && !asm.block_present(2, 1));
}

#[test]
fn constant_state_has_zero_residual() {
    let (space, pr) = small_reactor(3, false);
    let asm = Assembler::new(space, pr, DgParams::default()).unwrap();
    let mut s = asm.zero_state();
    s.field_mut(0).fill(0.7);
    for f in 1..asm.n_fields() {
        s.field_mut(f).fill(1.0);
    }
    let r = asm.residual(&s).unwrap();
    let m = r.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(m < 1e-13, "{m}");
}

#[test]
fn pure_diffusion_block_is_symmetric() {
    let mesh = Mesh::unit_box(2, &[4, 3]).unwrap().retag(|_, _| BoundaryTag::Exterior);
    let space = Arc::new(FeSpace::new(Arc::new(mesh), 2).unwrap());
    let mut pr = Problem::mms(&MmsCase::new());
    pr.velocity = Arc::new(|_| [0.0; 3]);
    let asm = Assembler::new(space, Arc::new(pr), DgParams::default()).unwrap();
    let mut s = asm.zero_state();
    s.field_mut(0).fill(1.5);
    s.field_mut(1).fill(2.0);
    let j = asm.jacobian(&s).unwrap();
    for f in 0..2 {
        let b = j.block(f, f).unwrap();
        assert!(b.asymmetry() < 1e-12, "block {f}: {}", b.asymmetry());
    }
    // potential block with Dirichlet data is SPD: CG converges
    let a = j.block(0, 0).unwrap();
    let rhs = vec![1.0; a.nrows()];
    let mut x = vec![0.0; a.nrows()];
    let res = solve(a.as_ref(), &Jacobi::new(a).unwrap(), &rhs, &mut x, &KrylovConfig::new(KrylovMethod::Cg, 1e-10)).unwrap();
    assert!(res.converged);
}

#[test]
fn charge_equation_is_weighted_species_sum() {
    // continuous fields on a box with walls and electrodes only
    let (space0, pr) = small_reactor(2, true);
    let mesh = space0.mesh().retag(|f, x| match f.local_face / 2 {
        1 if x[1] < 0.5 => BoundaryTag::ElectrodeCathode,
        1 => BoundaryTag::ElectrodeAnode,
        _ => BoundaryTag::Wall,
    });
    let space = Arc::new(FeSpace::new(Arc::new(mesh), 2).unwrap());
    let asm = Assembler::new(space.clone(), pr.clone(), DgParams::default()).unwrap();
    let s = BlockState::from_fields(&[
        space.interpolate(|x| 0.3 * x[0] - 0.2 * x[1] * x[2] + 0.5),
        space.interpolate(|x| 1.0 + 0.2 * (x[0] + x[1]).sin() * x[2]),
        space.interpolate(|x| 1.0 - 0.1 * x[0] * x[1] + 0.05 * (2.0 * x[2]).cos()),
    ])
    .unwrap();
    let r = asm.residual(&s).unwrap();
    let sys = &pr.system;
    let mut sum = vec![0.0; asm.block_len()];
    for k in 0..sys.n_species() {
        let c: Vec<f64> = match sys.retained().iter().position(|&kk| kk == k) {
            Some(j) => s.field(1 + j).to_vec(),
            None => asm.recover_eliminated(&s),
        };
        let rk = asm.species_residual(k, &c, &s).unwrap();
        for (a, b) in sum.iter_mut().zip(rk) {
            *a += sys.z[k] * sys.w[k] * b;
        }
    }
    let scale = r.field(0).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = r.field(0).iter().zip(&sum).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-10 * scale.max(1e-3), "{err} vs {scale}");
    // retained species residuals agree with the full assembly
    for j in 0..sys.n_retained() {
        let rk = asm.species_residual(sys.retained()[j], s.field(1 + j), &s).unwrap();
        assert_eq!(rk, r.field(1 + j));
    }
}

#[test]
fn volume_terms_obey_identity_on_discontinuous_states() {
    // without faces contributing (single element, walls), the identity is exact
    let mesh = Mesh::unit_box(3, &[1, 1, 1]).unwrap().retag(|_, _| BoundaryTag::Wall);
    let (_, pr) = small_reactor(1, false);
    let space = Arc::new(FeSpace::new(Arc::new(mesh), 2).unwrap());
    let asm = Assembler::new(space, pr.clone(), DgParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_state(&asm, &mut rng, 2.0);
    let r = asm.residual(&s).unwrap();
    let sys = &pr.system;
    let mut sum = vec![0.0; asm.block_len()];
    for k in 0..sys.n_species() {
        let c: Vec<f64> = match sys.retained().iter().position(|&kk| kk == k) {
            Some(j) => s.field(1 + j).to_vec(),
            None => asm.recover_eliminated(&s),
        };
        for (a, b) in sum.iter_mut().zip(asm.species_residual(k, &c, &s).unwrap()) {
            *a += sys.z[k] * sys.w[k] * b;
        }
    }
    for (a, b) in r.field(0).iter().zip(&sum) {
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn upwinding_on_two_elements() {
    // pure advection of piecewise constants: outflow is the upwind value
    let mesh = Mesh::unit_box(2, &[2, 1]).unwrap().retag(|f, x| match f.local_face / 2 {
        0 if x[0] < 0.5 => BoundaryTag::Inlet,
        0 => BoundaryTag::Outlet,
        _ => BoundaryTag::Wall,
    });
    let space = Arc::new(FeSpace::new(Arc::new(mesh), 1).unwrap());
    let mut pr = Problem::mms(&MmsCase::new());
    pr.velocity = Arc::new(|_| [1.0, 0.0, 0.0]);
    pr.species_source = None;
    pr.charge_source = None;
    pr.dirichlet = None;
    pr.system.dhat = vec![1e-300, 1e-300];
    let asm = Assembler::new(space, Arc::new(pr), DgParams::default()).unwrap();
    let mut s = asm.zero_state();
    let (ca, cb) = (2.0, 5.0);
    s.field_mut(1)[..4].fill(ca);
    s.field_mut(1)[4..].fill(cb);
    let r = asm.residual(&s).unwrap();
    // v = 1 on the left element: inflow −1·1·h + outflow ca·h, h = 1 (face length)
    let left: f64 = r.field(1)[..4].iter().sum();
    let right: f64 = r.field(1)[4..].iter().sum();
    assert!((left - (-1.0 + ca)).abs() < 1e-12, "{left}");
    assert!((right - (-ca + cb)).abs() < 1e-12, "{right}");
}

#[test]
fn multilevel_coarse_jacobians_match_direct_assembly() {
    let mut h = cnpdg::mesh::MeshHierarchy::new(Mesh::unit_box(2, &[2, 2]).unwrap());
    h = h.refine_uniform().refine_uniform();
    let pr = Arc::new(Problem::mms(&MmsCase::new()));
    let ml = Assembler::multilevel(&h, 2, pr.clone(), DgParams::default()).unwrap();
    assert_eq!(ml.n_levels(), 3);
    let constant = |asm: &Assembler| {
        let mut s = asm.zero_state();
        s.field_mut(0).fill(0.3);
        s.field_mut(1).fill(1.2);
        s
    };
    let jac = ml.jacobian(&constant(&ml)).unwrap();
    assert_eq!(jac.coarse_levels().len(), 2);
    for (l, cj) in jac.coarse_levels().iter().enumerate() {
        let asm = Assembler::new(Arc::new(FeSpace::new(h.level(l).clone(), 2).unwrap()), pr.clone(), DgParams::default()).unwrap();
        let dj = asm.jacobian(&constant(&asm)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let (a, b) = (cj.block(i, j).unwrap(), dj.block(i, j).unwrap());
                let m = a.values().iter().zip(b.values()).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                assert!(m < 1e-12, "level {l} block ({i},{j}): {m}");
            }
        }
    }
}

#[test]
fn pure_diffusion_concentration_block_is_positive_definite() {
    let mut pr = Problem::mms(&MmsCase::new());
    pr.velocity = Arc::new(|_| [0.0; 3]);
    let space = Arc::new(FeSpace::new(Arc::new(Mesh::unit_box(2, &[4, 4]).unwrap()), 1).unwrap());
    let asm = Assembler::new(space.clone(), Arc::new(pr), DgParams::default()).unwrap();
    let mut s = asm.zero_state();
    s.field_mut(1).fill(1.0);
    let a = asm.jacobian(&s).unwrap().block(1, 1).unwrap().to_dense();
    let n = a.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a[i][j] + a[j][i]));
    let lmin = m.symmetric_eigenvalues().min();
    assert!(lmin > 0.0, "{lmin}");
}
