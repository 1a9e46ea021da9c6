//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p cnpdg-cli --test acceptance`; pass criterion numbers as
//! arguments to run a subset.

use std::sync::Arc;
use std::time::Instant;

use cnpdg::assembly::{Assembler, DgParams, Problem};
use cnpdg::fespace::{BlockState, FeSpace};
use cnpdg::linalg::{
    solve, BlockOperator, CsrMatrix, DenseLu, Fieldsplit, Gmg, GmgLevels, Ilu0, InnerSolver, KrylovConfig, KrylovMethod,
    LinearOperator, SmootherConfig,
};
use cnpdg::mesh::{BoundaryTag, Mesh, MeshHierarchy};
use cnpdg::physics::{MmsCase, ParabolicFlow};
use cnpdg_cli::config::{PcChoice, RunConfig};
use cnpdg_cli::mms::{run_mms, MmsResult};
use cnpdg_cli::reactor::{kinetics, run_reactor, scales};
use cnpdg_cli::solvecheck::run_solvecheck;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "MMS potential rate", mms_potential),
        (2, "MMS concentration rate", mms_concentration),
        (3, "Jacobian correctness", jacobian_fd),
        (4, "charge-construction identity", charge_identity),
        (5, "reactor solve", reactor),
        (6, "preconditioner contrast", preconditioners),
        (7, "solver-stack unit properties", solver_units),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!ok);
        println!(
            "criterion {id} [{name}]: {} ({:.0} s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criteria failed");
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

fn in_range(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn mms_study(dim: usize, order: usize, levels: usize) -> Result<MmsResult, String> {
    let cfg = RunConfig::from_toml(&format!(
        "kind = \"mms\"\norder = {order}\n[mms]\ndim = {dim}\ncoarse = 4\nlevels = {levels}\n[solver.newton]\nrtol = 1e-11\n"
    ))
    .map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let r = run_mms(&cfg, dir.path()).map_err(err)?;
    for row in &r.rows {
        eprintln!("  {dim}D p{order} {:>6} elements: errors [{}] rates {:.3?}", row.elements, sci(&row.errors), row.rates);
    }
    Ok(r)
}

fn rate(r: &MmsResult, l: usize, f: usize) -> Result<f64, String> {
    r.rate(l, f).ok_or_else(|| format!("no rate at level {l}"))
}

fn mms_potential() -> Outcome {
    let p1 = mms_study(3, 1, 4)?;
    let p2 = mms_study(3, 2, 3)?;
    let (r1, r2) = (rate(&p1, 3, 0)?, rate(&p2, 2, 0)?);
    let ok = in_range(r1, 1.8, 2.2) && in_range(r2, 2.7, 3.3);
    Ok((ok, format!("p=1 rate {r1:.3} (want [1.8, 2.2]), p=2 rate {r2:.3} (want [2.7, 3.3])")))
}

fn mms_concentration() -> Outcome {
    let d3 = mms_study(3, 1, 4)?;
    let coarse: Vec<f64> = (1..3).map(|l| rate(&d3, l, 1)).collect::<Result<_, _>>()?;
    let last3 = rate(&d3, 3, 1)?;
    let d2 = mms_study(2, 1, 7)?;
    let fine = rate(&d2, 6, 1)?;
    let ok = coarse.iter().all(|&r| in_range(r, 1.7, 2.2)) && in_range(fine, 1.3, 1.9);
    Ok((
        ok,
        format!(
            "3D coarse pairs {coarse:.3?} (want [1.7, 2.2]), 3D finest {last3:.3}; 2D finest pair ({} elements) {fine:.3} (want [1.3, 1.9])",
            d2.rows[6].elements
        ),
    ))
}

fn smooth_field(rng: &mut ChaCha8Rng, base: f64, amp: f64) -> impl Fn([f64; 3]) -> f64 {
    let modes: Vec<([f64; 3], f64, f64)> = (0..4)
        .map(|_| {
            let k = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            (k, rng.gen_range(0.0..6.3), amp * rng.gen_range(-1.0..1.0) / 4.0)
        })
        .collect();
    move |x| base + modes.iter().map(|(k, ph, a)| a * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + ph).sin()).sum::<f64>()
}

fn smooth_state(space: &FeSpace, n_fields: usize, rng: &mut ChaCha8Rng) -> BlockState {
    let mut fields = vec![space.interpolate(smooth_field(rng, 0.0, 2.0))];
    for _ in 1..n_fields {
        fields.push(space.interpolate(smooth_field(rng, 1.0, 0.4)));
    }
    BlockState::from_fields(&fields).expect("equal field lengths")
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn jacobian_fd() -> Outcome {
    let mesh = Arc::new(Mesh::unit_box(3, &[2, 2, 2]).map_err(err)?);
    let space = Arc::new(FeSpace::new(mesh, 1).map_err(err)?);
    let asm = Assembler::new(space.clone(), Arc::new(Problem::mms(&MmsCase::new())), DgParams::default()).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let nf = asm.n_fields();
    let state = smooth_state(&space, nf, &mut rng);
    let jac = asm.jacobian(&state).map_err(err)?;
    let (n, bl) = (state.as_slice().len(), asm.block_len());
    let mut worst = vec![0.0f64; nf * nf];
    for dir in 0..10 {
        // each direction perturbs one field, cycling through all of them
        let j = dir % nf;
        let mut d = vec![0.0; n];
        for v in &mut d[j * bl..(j + 1) * bl] {
            *v = rng.gen_range(-1.0..1.0);
        }
        // the Φ-columns of the species rows carry the small diffusivities,
        // so the step is sized for their round-off
        let eps = 1e-4;
        let shifted = |s: f64| -> Result<Vec<f64>, String> {
            let mut x = state.clone();
            for (a, b) in x.as_mut_slice().iter_mut().zip(&d) {
                *a += s * eps * b;
            }
            Ok(asm.residual(&x).map_err(err)?.into_vec())
        };
        let (rp, rm) = (shifted(1.0)?, shifted(-1.0)?);
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let mut jd = vec![0.0; n];
        jac.operator().apply(&d, &mut jd);
        for i in 0..nf {
            let r = i * bl..(i + 1) * bl;
            let diff: Vec<f64> = fd[r.clone()].iter().zip(&jd[r.clone()]).map(|(a, b)| a - b).collect();
            let scale = norm(&fd[r]);
            if asm.block_present(i, j) && scale == 0.0 {
                return Err(format!("block ({i},{j}) has a vanishing derivative"));
            }
            if scale > 0.0 {
                worst[i * nf + j] = worst[i * nf + j].max(norm(&diff) / scale);
            }
        }
    }
    let all_present = (0..nf).all(|i| (0..nf).all(|j| asm.block_present(i, j)));
    let max = worst.iter().cloned().fold(0.0, f64::max);
    Ok((
        all_present && max <= 1e-5,
        format!("worst block relative mismatch {max:.2e} over 10 directions, per block [{}] (want <= 1e-5)", sci(&worst)),
    ))
}

fn charge_identity() -> Outcome {
    let cfg = RunConfig::from_toml("kind = \"reactor\"").map_err(err)?;
    let r = &cfg.reactor;
    let sys = r.ions.system().map_err(err)?;
    let sc = scales(r, &sys).map_err(err)?;
    let kin = kinetics(r, &sys, sc).map_err(err)?;
    let flow = ParabolicFlow { gap: r.channel.gap, u_avg: r.u_avg };
    let problem = Arc::new(Problem::reactor(sc.scale(&sys).map_err(err)?, flow, kin));
    // insulating walls and both electrodes
    let mesh = Mesh::unit_box(3, &[2, 2, 2]).map_err(err)?.retag(|f, x| match f.local_face / 2 {
        1 if x[1] < 0.5 => BoundaryTag::ElectrodeCathode,
        1 => BoundaryTag::ElectrodeAnode,
        _ => BoundaryTag::Wall,
    });
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for p in [1, 2] {
        let space = Arc::new(FeSpace::new(Arc::new(mesh.clone()), p).map_err(err)?);
        let asm = Assembler::new(space.clone(), problem.clone(), DgParams::default()).map_err(err)?;
        let ss = &problem.system;
        for _ in 0..5 {
            let s = smooth_state(&space, asm.n_fields(), &mut rng);
            let charge = asm.residual(&s).map_err(err)?;
            let mut sum = vec![0.0; asm.block_len()];
            for k in 0..ss.n_species() {
                let c = match ss.retained().iter().position(|&q| q == k) {
                    Some(j) => s.field(1 + j).to_vec(),
                    None => asm.recover_eliminated(&s),
                };
                for (a, b) in sum.iter_mut().zip(asm.species_residual(k, &c, &s).map_err(err)?) {
                    *a += ss.z[k] * ss.w[k] * b;
                }
            }
            let diff: Vec<f64> = charge.field(0).iter().zip(&sum).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&diff) / norm(charge.field(0)));
        }
    }
    Ok((worst <= 1e-10, format!("max relative deviation {worst:.2e} over 10 states, p = 1 and 2 (want <= 1e-10)")))
}

fn reactor() -> Outcome {
    let mut cfg = RunConfig::from_toml("kind = \"reactor\"\n[reactor]\nvtk = false").map_err(err)?;
    cfg.solver.make_deterministic();
    let dir = tempfile::tempdir().map_err(err)?;
    let r = run_reactor(&cfg, dir.path()).map_err(err)?;
    let its = r.report.iterations();
    let (lo, hi) = r.inlet_eliminated;
    let inlet_dev = (lo - 2.0).abs().max((hi - 2.0).abs());
    let rel = r.report.final_residual() / r.report.residual_norms[0];
    let ok = r.report.converged && its <= 10 && r.current_balance <= 1e-6 && inlet_dev <= 1e-8;
    Ok((
        ok,
        format!(
            "{} elements: Newton {its} iterations (relative residual {rel:.1e}), I_a = {:.6e} A, I_c = {:.6e} A, balance {:.2e} (want <= 1e-6), inlet c_{} deviation {inlet_dev:.1e} M (want <= 1e-8)",
            r.elements, r.anode_current, r.cathode_current, r.current_balance, r.eliminated
        ),
    ))
}

fn preconditioners() -> Outcome {
    // contrast on the reference mesh
    let mut cfg = RunConfig::from_toml("kind = \"solvecheck\"\n[solvecheck]\nsizes = 1\nnested = false\nsubdomains = [4, 16, 64]")
        .map_err(err)?;
    cfg.solver.make_deterministic();
    let dir = tempfile::tempdir().map_err(err)?;
    let c = run_solvecheck(&cfg, dir.path()).map_err(err)?;
    let elements = c.sizes()[0];
    let gmg = c.find(elements, PcChoice::Gmg, 0).ok_or("missing multigrid row")?.concentration_mean();
    let mut ratios = Vec::new();
    for n in [4, 16, 64] {
        let asm = c.find(elements, PcChoice::Asm, n).ok_or("missing ASM row")?.concentration_mean();
        ratios.push((n, asm, asm / gmg));
    }
    let contrast = gmg <= 10.0 && ratios.iter().all(|&(_, _, q)| q >= 3.0);

    // outer iterations over two uniform refinements of the halved-twice channel
    let mut cfg = RunConfig::from_toml("kind = \"solvecheck\"\n[solvecheck]\nsizes = 3\nnested = true\nsubdomains = []").map_err(err)?;
    cfg.solver.make_deterministic();
    let h = run_solvecheck(&cfg, dir.path()).map_err(err)?;
    let outer: Vec<(usize, usize)> = h
        .sizes()
        .iter()
        .map(|&e| h.find(e, PcChoice::Gmg, 0).map(|r| (e, r.outer_iterations)))
        .collect::<Option<_>>()
        .ok_or("missing multigrid row")?;
    let growth = outer[2].1 as f64 / outer[0].1 as f64;
    let robust = growth < 2.0;
    Ok((
        contrast && robust,
        format!(
            "{elements} elements: GMG concentration inner mean {gmg:.2} (want <= 10), ASM (subdomains, mean, ratio) {:.2?} (want ratio >= 3); GMG outer iterations (elements, its) {outer:?}, growth {growth:.2} (want < 2)",
            ratios
        ),
    ))
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn solver_units() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // ILU0 on tridiagonal systems
    let mut ilu_res: f64 = 0.0;
    for n in [10, 100, 1000] {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + rng.gen::<f64>()));
            if i > 0 {
                t.push((i, i - 1, rng.gen_range(-1.5..1.5)));
            }
            if i + 1 < n {
                t.push((i, i + 1, rng.gen_range(-1.5..1.5)));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).map_err(err)?;
        let ilu = Ilu0::new(&a).map_err(err)?;
        let b = random_vec(n, &mut rng);
        let mut x = b.clone();
        ilu.solve_in_place(&mut x);
        let mut ax = vec![0.0; n];
        a.spmv(&x, &mut ax).map_err(err)?;
        ilu_res = ilu_res.max(ax.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
    }

    // V-cycle contraction on the SIPG Laplacian of the unit square
    let mut rhos = Vec::new();
    for refinements in [2, 3] {
        let mut h = MeshHierarchy::new(Mesh::unit_box(2, &[4, 4]).map_err(err)?);
        for _ in 0..refinements {
            h = h.refine_uniform();
        }
        let mut pr = Problem::mms(&MmsCase::new());
        pr.velocity = Arc::new(|_| [0.0; 3]);
        let asm = Assembler::multilevel(&h, 1, Arc::new(pr), DgParams::default()).map_err(err)?;
        let n = asm.block_len();
        let x = BlockState::from_fields(&[vec![0.0; n], vec![1.0; n]]).map_err(err)?;
        let jac = asm.jacobian(&x).map_err(err)?;
        let mut ops: Vec<_> = jac.coarse_levels().iter().map(|c| c.block(0, 0).cloned()).collect::<Option<_>>().ok_or("no block")?;
        ops.push(jac.block(0, 0).cloned().ok_or("no block")?);
        let levels = Arc::new(GmgLevels::new(&h, asm.space().basis(), SmootherConfig::default()).map_err(err)?);
        let gmg = Gmg::with_operators(levels, ops).map_err(err)?;
        let b = random_vec(n, &mut rng);
        let mut u = vec![0.0; n];
        let hist = gmg.iterate(&b, &mut u, 30).map_err(err)?;
        rhos.push((refinements + 1, (hist[30] / hist[20]).powf(0.1)));
    }

    // fieldsplit with exact inner solves on a block upper-triangular matrix
    let (n, m) = (20, 4);
    let mut blocks = Vec::new();
    for i in 0..m {
        for j in 0..m {
            blocks.push(match (i, j) {
                _ if i == j => {
                    let rows: Vec<Vec<f64>> = (0..n)
                        .map(|r| (0..n).map(|c| if r == c { n as f64 } else { rng.gen_range(-1.0..1.0) }).collect())
                        .collect();
                    Some(Arc::new(CsrMatrix::from_dense(&rows)))
                }
                _ if j > i => Some(Arc::new(CsrMatrix::from_dense(
                    &(0..n).map(|_| random_vec(n, &mut rng)).collect::<Vec<_>>(),
                ))),
                _ => None,
            });
        }
    }
    let op = Arc::new(BlockOperator::new(m, n, blocks).map_err(err)?);
    let inner = (0..m)
        .map(|i| -> Result<InnerSolver, String> {
            let lu = DenseLu::from_csr(op.block(i, i).ok_or("missing diagonal block")?).map_err(err)?;
            Ok(InnerSolver::new(format!("f{i}"), KrylovConfig::new(KrylovMethod::Gmres, 1e-13), Box::new(lu)))
        })
        .collect::<Result<_, _>>()?;
    let fs = Fieldsplit::new(op.clone(), inner).map_err(err)?;
    let b = random_vec(n * m, &mut rng);
    let mut x = vec![0.0; n * m];
    let res = solve(op.as_ref(), &fs, &b, &mut x, &KrylovConfig::new(KrylovMethod::Fgmres, 1e-10)).map_err(err)?;

    let ok = ilu_res <= 1e-12 && rhos.iter().all(|&(_, r)| r <= 0.5) && res.converged && res.iterations <= m;
    Ok((
        ok,
        format!(
            "ILU0 tridiagonal residual {ilu_res:.1e} (want <= 1e-12); V-cycle contraction (levels, rho) {rhos:.3?} (want <= 0.5); fieldsplit {} outer iterations for m = {m}",
            res.iterations
        ),
    ))
}
