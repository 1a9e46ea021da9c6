//! Run configuration, read from TOML. Unknown keys are rejected.

use std::path::Path;

use cnpdg::linalg::{KrylovConfig, KrylovMethod, SmootherConfig};
use cnpdg::mesh::ChannelSpec;
use cnpdg::nonlinear::{BlockPc, InnerConfig, LinearConfig, NewtonConfig};
use cnpdg::physics::{IonSystem, Species, MOLAR};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Mms,
    Reactor,
    Solvecheck,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    /// Polynomial order of the DG space.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub dg: DgSection,
    #[serde(default)]
    pub mms: MmsSection,
    #[serde(default)]
    pub reactor: ReactorSection,
    #[serde(default)]
    pub solvecheck: SolvecheckSection,
    #[serde(default)]
    pub solver: SolverSection,
}

fn default_order() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgSection {
    pub penalty: f64,
}

impl Default for DgSection {
    fn default() -> Self {
        DgSection { penalty: 4.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmsSection {
    pub dim: usize,
    /// Elements per axis on the coarsest level.
    pub coarse: usize,
    /// Number of uniformly refined levels solved.
    pub levels: usize,
    /// Start Newton from the interpolated exact solution.
    pub exact_initial_guess: bool,
    pub vtk: bool,
}

impl Default for MmsSection {
    fn default() -> Self {
        MmsSection {
            dim: 3,
            coarse: 4,
            levels: 4,
            exact_initial_guess: false,
            vtk: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Lengths in metres.
    pub inlet_length: f64,
    pub electrode_length: f64,
    pub outlet_length: f64,
    pub gap: f64,
    pub width: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub grading_strength: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let c = ChannelSpec::reference_reactor();
        ChannelSection {
            inlet_length: c.inlet_length,
            electrode_length: c.electrode_length,
            outlet_length: c.outlet_length,
            gap: c.gap,
            width: c.width,
            nx: c.nx,
            ny: c.ny,
            nz: c.nz,
            grading_strength: c.grading_strength,
        }
    }
}

impl ChannelSection {
    pub fn spec(&self) -> ChannelSpec {
        ChannelSpec {
            inlet_length: self.inlet_length,
            electrode_length: self.electrode_length,
            outlet_length: self.outlet_length,
            gap: self.gap,
            width: self.width,
            nx: self.nx,
            ny: self.ny,
            nz: self.nz,
            grading_strength: self.grading_strength,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesEntry {
    pub name: String,
    pub z: i32,
    /// m²/s
    pub d: f64,
    /// Inlet concentration in mol/L.
    pub c_in: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IonsSection {
    /// Named ion system; `bortels-cuso4` when neither this nor `species` is given.
    pub preset: Option<String>,
    pub species: Vec<SpeciesEntry>,
    /// Name of the species removed by electroneutrality.
    pub eliminated: Option<String>,
    /// K
    pub temperature: f64,
}

impl Default for IonsSection {
    fn default() -> Self {
        IonsSection {
            preset: None,
            species: Vec::new(),
            eliminated: None,
            temperature: 298.15,
        }
    }
}

impl IonsSection {
    pub fn system(&self) -> Result<IonSystem, CliError> {
        let sys = match (&self.preset, self.species.is_empty()) {
            (p, true) => {
                let mut sys = IonSystem::preset(p.as_deref().unwrap_or("bortels-cuso4")).map_err(|e| CliError::Config(e.to_string()))?;
                sys.temperature = self.temperature;
                if let Some(name) = &self.eliminated {
                    sys.eliminated = sys.index_of(name).ok_or_else(|| CliError::Config(format!("unknown species `{name}`")))?;
                }
                sys
            }
            (None, false) => {
                let species: Vec<Species> = self
                    .species
                    .iter()
                    .map(|s| Species::new(&s.name, s.z, s.d, s.c_in * MOLAR))
                    .collect();
                let name = self
                    .eliminated
                    .as_ref()
                    .ok_or_else(|| CliError::Config("ions.eliminated is required with an inline species table".into()))?;
                let eliminated = species
                    .iter()
                    .position(|s| &s.name == name)
                    .ok_or_else(|| CliError::Config(format!("unknown species `{name}`")))?;
                IonSystem {
                    species,
                    eliminated,
                    temperature: self.temperature,
                }
            }
            (Some(_), false) => return Err(CliError::Config("ions: give either `preset` or a `species` table, not both".into())),
        };
        sys.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(sys)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectrodeSection {
    pub oxidant: String,
    /// Dissolved reductant; absent for a metal deposit.
    pub reductant: Option<String>,
    pub electrons: f64,
    pub alpha_anodic: f64,
    pub alpha_cathodic: f64,
    pub gamma: f64,
    /// Reference concentrations in mol/L.
    pub c_ox_star: f64,
    pub c_red_star: Option<f64>,
    /// Applied potentials in V.
    pub phi_app_anode: f64,
    pub phi_app_cathode: f64,
    /// Width-averaged exchange current density in A/m².
    pub j0_mean: f64,
}

impl Default for ElectrodeSection {
    fn default() -> Self {
        ElectrodeSection {
            oxidant: "Cu2+".into(),
            reductant: None,
            electrons: 2.0,
            alpha_anodic: 0.5,
            alpha_cathodic: 0.5,
            gamma: 1.0,
            c_ox_star: 0.01,
            c_red_star: None,
            phi_app_anode: 0.0,
            phi_app_cathode: 0.03,
            j0_mean: 30.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactorSection {
    pub channel: ChannelSection,
    /// Uniform refinements of the channel mesh.
    pub refinements: usize,
    /// Mean inflow velocity in m/s.
    pub u_avg: f64,
    /// Length scale of the nondimensionalization in m (default: plate gap).
    pub length_scale: Option<f64>,
    /// Reference concentration in mol/L (default: inlet of the eliminated species).
    pub c_ref: Option<f64>,
    pub ions: IonsSection,
    pub electrodes: ElectrodeSection,
    pub vtk: bool,
}

impl Default for ReactorSection {
    fn default() -> Self {
        ReactorSection {
            channel: ChannelSection::default(),
            refinements: 0,
            u_avg: 0.03,
            length_scale: None,
            c_ref: None,
            ions: IonsSection::default(),
            electrodes: ElectrodeSection::default(),
            vtk: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolvecheckSection {
    /// Number of mesh sizes.
    pub sizes: usize,
    /// Refine one coarse channel uniformly instead of rebuilding the channel
    /// with halved element counts.
    pub nested: bool,
    /// ASM subdomain counts compared against multigrid.
    pub subdomains: Vec<usize>,
}

impl Default for SolvecheckSection {
    fn default() -> Self {
        SolvecheckSection {
            sizes: 3,
            nested: true,
            subdomains: vec![1, 4, 16, 64],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcChoice {
    Gmg,
    Asm,
}

impl From<PcChoice> for BlockPc {
    fn from(p: PcChoice) -> Self {
        match p {
            PcChoice::Gmg => BlockPc::Gmg,
            PcChoice::Asm => BlockPc::Asm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KspChoice {
    Cg,
    Gmres,
    Fgmres,
}

impl From<KspChoice> for KrylovMethod {
    fn from(k: KspChoice) -> Self {
        match k {
            KspChoice::Cg => KrylovMethod::Cg,
            KspChoice::Gmres => KrylovMethod::Gmres,
            KspChoice::Fgmres => KrylovMethod::Fgmres,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KspSection {
    pub ksp_type: KspChoice,
    pub rtol: f64,
    #[serde(default = "default_max_it")]
    pub max_it: usize,
    #[serde(default = "default_restart")]
    pub restart: usize,
}

fn default_max_it() -> usize {
    500
}

fn default_restart() -> usize {
    100
}

impl KspSection {
    fn krylov(&self) -> KrylovConfig {
        KrylovConfig {
            max_iters: self.max_it,
            restart: self.restart,
            ..KrylovConfig::new(self.ksp_type.into(), self.rtol)
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSection {
    pub ksp_type: KspChoice,
    pub rtol: f64,
    #[serde(default = "default_max_it")]
    pub max_it: usize,
    #[serde(default = "default_restart")]
    pub restart: usize,
    pub pc_type: PcChoice,
}

impl BlockSection {
    fn ksp(&self) -> KspSection {
        KspSection {
            ksp_type: self.ksp_type,
            rtol: self.rtol,
            max_it: self.max_it,
            restart: self.restart,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSection {
    pub rtol: f64,
    pub atol: f64,
    pub max_it: usize,
    pub ls_decrease: f64,
    pub ls_ratio: f64,
    pub ls_max_backtracks: usize,
}

impl Default for NewtonSection {
    fn default() -> Self {
        let n = NewtonConfig::default();
        NewtonSection {
            rtol: n.rtol,
            atol: n.atol,
            max_it: n.max_iters,
            ls_decrease: n.ls_decrease,
            ls_ratio: n.ls_ratio,
            ls_max_backtracks: n.ls_max_backtracks,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmootherSection {
    /// Richardson damping; absent means estimated per level.
    pub damping: Option<f64>,
    /// 0 uses the worker thread count.
    pub subdomains: usize,
    pub overlap: usize,
    pub restricted: bool,
    pub sweeps: usize,
}

impl Default for SmootherSection {
    fn default() -> Self {
        let s = SmootherConfig::default();
        SmootherSection {
            damping: s.damping,
            subdomains: s.subdomains,
            overlap: s.overlap,
            restricted: s.restricted,
            sweeps: s.pre_sweeps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub newton: NewtonSection,
    pub outer: KspSection,
    /// Inner solver of the potential block (`fieldsplit_0`).
    pub potential: BlockSection,
    /// Inner solver of every concentration block.
    pub concentration: BlockSection,
    /// Schwarz subdomains of the block ASM preconditioner; 0 uses the thread count.
    pub asm_subdomains: usize,
    pub asm_overlap: usize,
    pub smoother: SmootherSection,
    /// CG tolerance of the potential solve in the initial guess.
    pub initial_guess_rtol: f64,
    /// Coarsest multigrid level has at most this many elements.
    pub coarse_elements: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let l = LinearConfig::default();
        let ksp = |k: &KrylovConfig| KspSection {
            ksp_type: match k.method {
                KrylovMethod::Cg => KspChoice::Cg,
                KrylovMethod::Gmres => KspChoice::Gmres,
                KrylovMethod::Fgmres => KspChoice::Fgmres,
            },
            rtol: k.rtol,
            max_it: k.max_iters,
            restart: k.restart,
        };
        let block = |k: KspSection| BlockSection {
            ksp_type: k.ksp_type,
            rtol: k.rtol,
            max_it: k.max_it,
            restart: k.restart,
            pc_type: PcChoice::Gmg,
        };
        SolverSection {
            newton: NewtonSection::default(),
            outer: ksp(&l.outer),
            potential: block(ksp(&l.potential.ksp)),
            concentration: block(ksp(&l.concentration.ksp)),
            asm_subdomains: l.asm_subdomains,
            asm_overlap: l.asm_overlap,
            smoother: SmootherSection::default(),
            initial_guess_rtol: 1e-2,
            coarse_elements: 8,
        }
    }
}

impl SolverSection {
    pub fn newton(&self) -> NewtonConfig {
        let n = &self.newton;
        NewtonConfig {
            rtol: n.rtol,
            atol: n.atol,
            max_iters: n.max_it,
            ls_decrease: n.ls_decrease,
            ls_ratio: n.ls_ratio,
            ls_max_backtracks: n.ls_max_backtracks,
        }
    }

    pub fn linear(&self) -> LinearConfig {
        LinearConfig {
            outer: self.outer.krylov(),
            potential: InnerConfig {
                ksp: self.potential.ksp().krylov(),
                pc: self.potential.pc_type.into(),
            },
            concentration: InnerConfig {
                ksp: self.concentration.ksp().krylov(),
                pc: self.concentration.pc_type.into(),
            },
            asm_subdomains: self.asm_subdomains,
            asm_overlap: self.asm_overlap,
        }
    }

    pub fn smoother(&self) -> SmootherConfig {
        let s = &self.smoother;
        SmootherConfig {
            damping: s.damping,
            subdomains: s.subdomains,
            overlap: s.overlap,
            restricted: s.restricted,
            pre_sweeps: s.sweeps,
            post_sweeps: s.sweeps,
        }
    }

    /// Pins every thread-count dependent default so results do not depend
    /// on the worker pool.
    pub fn make_deterministic(&mut self) {
        if self.asm_subdomains == 0 {
            self.asm_subdomains = 1;
        }
        if self.smoother.subdomains == 0 {
            self.smoother.subdomains = 1;
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(1..=3).contains(&self.order) {
            return bad(format!("order must be 1, 2 or 3 (got {})", self.order));
        }
        if !(self.dg.penalty > 0.0) {
            return bad("dg.penalty must be positive".into());
        }
        let m = &self.mms;
        if !(2..=3).contains(&m.dim) || m.coarse == 0 || m.levels == 0 {
            return bad("mms: dim must be 2 or 3, coarse and levels at least 1".into());
        }
        let r = &self.reactor;
        r.channel.spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(r.u_avg > 0.0) || r.length_scale.is_some_and(|l| !(l > 0.0)) || r.c_ref.is_some_and(|c| !(c > 0.0)) {
            return bad("reactor: u_avg, length_scale and c_ref must be positive".into());
        }
        r.ions.system()?;
        if self.solvecheck.sizes == 0 || self.solvecheck.subdomains.iter().any(|&s| s == 0) {
            return bad("solvecheck: sizes and subdomain counts must be positive".into());
        }
        self.solver.newton().validate().map_err(|e| CliError::Config(e.to_string()))?;
        let s = &self.solver;
        for (name, k) in [("outer", s.outer.clone()), ("potential", s.potential.ksp()), ("concentration", s.concentration.ksp())] {
            if !(k.rtol > 0.0) || k.max_it == 0 || k.restart == 0 {
                return bad(format!("solver.{name}: rtol, max_it and restart must be positive"));
            }
        }
        if s.outer.ksp_type != KspChoice::Fgmres {
            return bad("solver.outer.ksp_type must be fgmres (the block preconditioner varies between applications)".into());
        }
        if s.smoother.damping.is_some_and(|w| !(w > 0.0)) || s.smoother.sweeps == 0 {
            return bad("solver.smoother: damping and sweeps must be positive".into());
        }
        if !(s.initial_guess_rtol > 0.0) || s.coarse_elements == 0 {
            return bad("solver: initial_guess_rtol and coarse_elements must be positive".into());
        }
        Ok(())
    }
}
