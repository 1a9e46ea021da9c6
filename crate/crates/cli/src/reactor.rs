//! Parallel-plate reactor with Butler–Volmer electrodes.

use std::path::Path;
use std::sync::Arc;

use cnpdg::assembly::{Assembler, DgParams, Problem};
use cnpdg::fespace::BlockState;
use cnpdg::mesh::{build_channel_mesh, BoundaryTag, MeshHierarchy};
use cnpdg::nonlinear::{initial_guess, solve_problem, LinearSolver, SolveReport};
use cnpdg::physics::{ButlerVolmer, ElectrodeKinetics, IonSystem, Nondimensionalization, ParabolicFlow, MOLAR};

use crate::config::{ReactorSection, RunConfig};
use crate::output::{create, csv_writer, linear_solver, vtk_name};
use crate::{solver_err, CliError};

/// Assembled reactor problem with its mesh hierarchy.
pub struct ReactorSetup {
    pub system: IonSystem,
    pub scales: Nondimensionalization,
    pub hierarchy: MeshHierarchy,
    pub assembler: Assembler,
}

pub fn scales(r: &ReactorSection, sys: &IonSystem) -> Result<Nondimensionalization, CliError> {
    let length = r.length_scale.unwrap_or(r.channel.gap);
    let c_ref = r.c_ref.map_or(sys.species[sys.eliminated].c_in, |c| c * MOLAR);
    Nondimensionalization::new(length, r.u_avg, c_ref, sys.temperature).map_err(|e| CliError::Config(e.to_string()))
}

/// Butler–Volmer data of the configured electrode reaction.
pub fn kinetics(r: &ReactorSection, sys: &IonSystem, scales: Nondimensionalization) -> Result<ElectrodeKinetics, CliError> {
    let e = &r.electrodes;
    let find = |name: &str| sys.index_of(name).ok_or_else(|| CliError::Config(format!("unknown species `{name}`")));
    let oxidant = find(&e.oxidant)?;
    let reductant = e.reductant.as_deref().map(find).transpose()?;
    for k in std::iter::once(oxidant).chain(reductant) {
        if k == sys.eliminated {
            return Err(CliError::Config(format!(
                "electrode species `{}` is the eliminated species",
                sys.species[k].name
            )));
        }
    }
    let kin = ElectrodeKinetics {
        bv: ButlerVolmer {
            gamma: e.gamma,
            alpha_anodic: e.alpha_anodic,
            alpha_cathodic: e.alpha_cathodic,
            electrons: e.electrons,
            c_ox_star: e.c_ox_star * MOLAR,
            c_red_star: e.c_red_star.map(|c| c * MOLAR),
            temperature: sys.temperature,
        },
        oxidant,
        reductant,
        phi_app_anode: e.phi_app_anode,
        phi_app_cathode: e.phi_app_cathode,
        j0_mean: e.j0_mean,
        width: r.channel.width,
        scales,
        c_in: sys.species.iter().map(|s| s.c_in).collect(),
    };
    kin.bv.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(kin)
}

/// Reactor on the configured channel mesh with `coarsen` halvings of every
/// element count applied first (0 = configured mesh), then the configured
/// uniform refinements plus `refine` more.
pub fn setup(cfg: &RunConfig, coarsen: usize, refine: usize) -> Result<ReactorSetup, CliError> {
    let r = &cfg.reactor;
    let system = r.ions.system()?;
    let scales = scales(r, &system)?;
    let kin = kinetics(r, &system, scales)?;
    let mut spec = r.channel.spec();
    for _ in 0..coarsen {
        if spec.nx % 16 != 0 || spec.ny % 2 != 0 || spec.nz % 2 != 0 {
            return Err(CliError::Config(format!(
                "channel {}x{}x{} cannot be halved again",
                spec.nx, spec.ny, spec.nz
            )));
        }
        spec.nx /= 2;
        spec.ny /= 2;
        spec.nz /= 2;
    }
    let mesh = build_channel_mesh(&spec.scaled(scales.length)).map_err(|e| CliError::Config(e.to_string()))?;
    let mut hierarchy = MeshHierarchy::by_coarsening(Arc::new(mesh), 16, cfg.solver.coarse_elements);
    for _ in 0..r.refinements + refine {
        hierarchy = hierarchy.refine_uniform();
    }
    let flow = ParabolicFlow { gap: r.channel.gap, u_avg: r.u_avg };
    let scaled = scales.scale(&system).map_err(|e| CliError::Config(e.to_string()))?;
    let problem = Arc::new(Problem::reactor(scaled, flow, kin));
    let assembler = Assembler::multilevel(&hierarchy, cfg.order, problem, DgParams { penalty: cfg.dg.penalty })
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(ReactorSetup {
        system,
        scales,
        hierarchy,
        assembler,
    })
}

impl ReactorSetup {
    pub fn linear_solver(&self, cfg: &RunConfig) -> Result<LinearSolver, CliError> {
        linear_solver(&self.hierarchy, &self.assembler, &cfg.solver)
    }

    /// Coefficients of every species in mol/L, in system order.
    pub fn concentrations(&self, x: &BlockState) -> Vec<Vec<f64>> {
        let sys = &self.system;
        let retained = sys.retained();
        let eliminated = self.assembler.recover_eliminated(x);
        (0..sys.n_species())
            .map(|k| {
                let hat = match retained.iter().position(|&r| r == k) {
                    Some(j) => x.field(1 + j),
                    None => &eliminated,
                };
                hat.iter().map(|c| c * sys.species[k].c_in / MOLAR).collect()
            })
            .collect()
    }

    /// Values of `coeffs` at the nodes lying on inlet faces.
    pub fn inlet_trace(&self, coeffs: &[f64]) -> Vec<f64> {
        let space = self.assembler.space();
        let basis = space.basis();
        let nd = space.dofs_per_element();
        let mut out = Vec::new();
        for f in space.mesh().boundary_faces().filter(|f| f.tag == BoundaryTag::Inlet) {
            let (ax, side) = (f.local_face / 2, (f.local_face % 2) as f64);
            for i in 0..nd {
                if basis.node(i)[ax] == side {
                    out.push(coeffs[f.element * nd + i]);
                }
            }
        }
        out
    }
}

/// Smallest value of a species with the physical position (m) of the node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesMinimum {
    pub species: String,
    pub value: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct ReactorResult {
    pub elements: usize,
    pub dofs: usize,
    pub report: SolveReport,
    /// A
    pub anode_current: f64,
    pub cathode_current: f64,
    /// |I_a + I_c| / max(|I_a|, |I_c|)
    pub current_balance: f64,
    pub eliminated: String,
    /// Range of the recovered species on the inlet face, mol/L.
    pub inlet_eliminated: (f64, f64),
    pub minima: Vec<SpeciesMinimum>,
    /// V
    pub potential_range: (f64, f64),
}

pub fn run_reactor(cfg: &RunConfig, out: &Path) -> Result<ReactorResult, CliError> {
    let rs = setup(cfg, 0, 0)?;
    let asm = &rs.assembler;
    let lin = rs.linear_solver(cfg)?;
    let x0 = initial_guess(asm, &lin, cfg.solver.initial_guess_rtol).map_err(solver_err)?;
    let solved = solve_problem(asm, x0, &lin, &cfg.solver.newton());
    let (x, report) = match solved {
        Ok(v) => v,
        Err(f) => {
            let (_, w) = create(out, "solver_log.csv")?;
            f.report.write_csv(w)?;
            return Err(CliError::Solver(format!("{}\n{}", f.error, f.report.summary())));
        }
    };
    let (_, w) = create(out, "solver_log.csv")?;
    report.write_csv(w)?;

    let area = rs.scales.length * rs.scales.length;
    let ia = asm.electrode_current(&x, BoundaryTag::ElectrodeAnode).map_err(solver_err)? * area;
    let ic = asm.electrode_current(&x, BoundaryTag::ElectrodeCathode).map_err(solver_err)? * area;
    let current_balance = (ia + ic).abs() / ia.abs().max(ic.abs()).max(f64::MIN_POSITIVE);
    let conc = rs.concentrations(&x);
    let sys = &rs.system;
    let trace = rs.inlet_trace(&conc[sys.eliminated]);
    let inlet_eliminated = trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let space = asm.space();
    let nd = space.dofs_per_element();
    let node_position = |i: usize| {
        let g = space.mesh().geometry(i / nd);
        let p = g.map(&space.basis().node(i % nd));
        [p[0] * rs.scales.length, p[1] * rs.scales.length, p[2] * rs.scales.length]
    };
    let minima: Vec<SpeciesMinimum> = conc
        .iter()
        .zip(&sys.species)
        .map(|(c, s)| {
            let (i, &v) = c.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty field");
            SpeciesMinimum {
                species: s.name.clone(),
                value: v,
                position: node_position(i),
            }
        })
        .collect();
    for m in &minima {
        if m.value < 0.0 {
            eprintln!(
                "warning: negative {} concentration {:.3e} M at ({:.4e}, {:.4e}, {:.4e}) m",
                m.species, m.value, m.position[0], m.position[1], m.position[2]
            );
        }
    }
    let phi: Vec<f64> = x.field(0).iter().map(|&p| rs.scales.potential_dim(p)).collect();
    let potential_range = phi
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    let result = ReactorResult {
        elements: space.mesh().n_elements(),
        dofs: x.as_slice().len(),
        report,
        anode_current: ia,
        cathode_current: ic,
        current_balance,
        eliminated: sys.species[sys.eliminated].name.clone(),
        inlet_eliminated,
        minima,
        potential_range,
    };
    write_summary(&result, out)?;

    if cfg.reactor.vtk {
        let level = cfg.reactor.refinements;
        let names: Vec<String> = sys.species.iter().map(|s| format!("c_{}", vtk_name(&s.name))).collect();
        let mut fields: Vec<(&str, &[f64])> = vec![("phi", &phi)];
        fields.extend(names.iter().map(String::as_str).zip(conc.iter().map(Vec::as_slice)));
        let (_, w) = create(out, &format!("fields_level{level}.vtk"))?;
        cnpdg::vtk::write_fields(w, space, rs.scales.length, &fields, &[])?;
        let density: Vec<f64> = asm
            .face_currents(&x)
            .map_err(solver_err)?
            .iter()
            .map(|&(i, a)| if a > 0.0 { i / a } else { 0.0 })
            .collect();
        let (_, w) = create(out, &format!("electrodes_level{level}.vtk"))?;
        cnpdg::vtk::write_boundary(w, space.mesh(), rs.scales.length, &[("current_density", &density)])?;
    }
    Ok(result)
}

fn write_summary(r: &ReactorResult, out: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(out, "summary.csv")?;
    w.write_record(["quantity", "value", "unit"])?;
    let mut row = |q: &str, v: String, u: &str| w.write_record([q, &v, u]);
    row("elements", r.elements.to_string(), "")?;
    row("dofs", r.dofs.to_string(), "")?;
    row("newton_converged", (r.report.converged as u8).to_string(), "")?;
    row("newton_iterations", r.report.iterations().to_string(), "")?;
    row("initial_residual", format!("{:.6e}", r.report.residual_norms[0]), "")?;
    row("final_residual", format!("{:.6e}", r.report.final_residual()), "")?;
    row("outer_iterations", r.report.total_outer_iterations().to_string(), "")?;
    row("anode_current", format!("{:.9e}", r.anode_current), "A")?;
    row("cathode_current", format!("{:.9e}", r.cathode_current), "A")?;
    row("current_balance", format!("{:.3e}", r.current_balance), "")?;
    row(&format!("inlet_min_c_{}", r.eliminated), format!("{:.12}", r.inlet_eliminated.0), "M")?;
    row(&format!("inlet_max_c_{}", r.eliminated), format!("{:.12}", r.inlet_eliminated.1), "M")?;
    for m in &r.minima {
        row(&format!("min_c_{}", m.species), format!("{:.6e}", m.value), "M")?;
    }
    row("potential_min", format!("{:.6e}", r.potential_range.0), "V")?;
    row("potential_max", format!("{:.6e}", r.potential_range.1), "V")?;
    w.flush()?;
    Ok(())
}
