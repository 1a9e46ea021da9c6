//! Ion systems, the charge-conservation reduction, scaling, electrode
//! kinetics and the two model problems (manufactured solution, flow reactor).

use thiserror::Error;

/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96485.33212;
/// Molar gas constant, J/(mol·K).
pub const GAS_CONSTANT: f64 = 8.314462618;
/// mol/m³ per mol/L.
pub const MOLAR: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("inlet composition is not electroneutral: sum z_k c_k = {residual}")]
    ElectroneutralityViolated { residual: f64 },
    #[error("eliminated species {0} has zero valence")]
    EliminatedSpeciesNeutral(String),
    #[error("an ion system needs at least two species, got {0}")]
    TooFewSpecies(usize),
    #[error("species {0}: {1}")]
    BadSpecies(String, String),
    #[error("unknown ion-system preset `{0}`")]
    UnknownPreset(String),
    #[error("scales must be positive (L = {length}, u = {velocity}, c_ref = {c_ref})")]
    BadScales { length: f64, velocity: f64, c_ref: f64 },
    #[error("invalid Butler-Volmer parameters: {0}")]
    BadKinetics(String),
    #[error("Butler-Volmer derivative is singular at zero concentration for gamma = {0} < 1")]
    KineticsSingular(f64),
    #[error("width coordinate {z} outside [0, {w}]")]
    OutsideWidth { z: f64, w: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    pub z: i32,
    /// Diffusivity, m²/s.
    pub d: f64,
    /// Inlet concentration, mol/m³.
    pub c_in: f64,
}

impl Species {
    pub fn new(name: &str, z: i32, d: f64, c_in: f64) -> Self {
        Species {
            name: name.to_string(),
            z,
            d,
            c_in,
        }
    }

    /// Nernst–Einstein mobility D/(RT).
    pub fn mobility(&self, temperature: f64) -> f64 {
        self.d / (GAS_CONSTANT * temperature)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IonSystem {
    pub species: Vec<Species>,
    pub eliminated: usize,
    pub temperature: f64,
}

impl IonSystem {
    /// Cu²⁺ / SO₄²⁻ / H⁺ from 0.01 M CuSO₄ in 1.0 M H₂SO₄, H⁺ eliminated.
    pub fn bortels_cuso4() -> Self {
        IonSystem {
            species: vec![
                Species::new("Cu2+", 2, 7.20e-10, 0.01 * MOLAR),
                Species::new("SO4 2-", -2, 10.65e-10, 1.01 * MOLAR),
                Species::new("H+", 1, 93.12e-10, 2.0 * MOLAR),
            ],
            eliminated: 2,
            temperature: 298.15,
        }
    }

    pub fn preset(name: &str) -> Result<Self, PhysicsError> {
        match name {
            "bortels-cuso4" => Ok(Self::bortels_cuso4()),
            _ => Err(PhysicsError::UnknownPreset(name.to_string())),
        }
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Indices of the species kept as unknowns, in field order.
    pub fn retained(&self) -> Vec<usize> {
        (0..self.species.len()).filter(|&k| k != self.eliminated).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let m = self.species.len();
        if m < 2 {
            return Err(PhysicsError::TooFewSpecies(m));
        }
        for s in &self.species {
            if !(s.d > 0.0) || !s.d.is_finite() {
                return Err(PhysicsError::BadSpecies(s.name.clone(), "diffusivity must be positive".into()));
            }
            if !(s.c_in >= 0.0) || !s.c_in.is_finite() {
                return Err(PhysicsError::BadSpecies(s.name.clone(), "inlet concentration must be non-negative".into()));
            }
        }
        if self.eliminated >= m {
            return Err(PhysicsError::BadSpecies(
                format!("#{}", self.eliminated),
                "eliminated index out of range".into(),
            ));
        }
        if !(self.temperature > 0.0) {
            return Err(PhysicsError::BadSpecies("system".into(), "temperature must be positive".into()));
        }
        let residual: f64 = self.species.iter().map(|s| s.z as f64 * s.c_in).sum();
        let scale: f64 = self.species.iter().map(|s| (s.z as f64 * s.c_in).abs()).sum();
        if residual.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(PhysicsError::ElectroneutralityViolated { residual });
        }
        if self.species[self.eliminated].z == 0 {
            return Err(PhysicsError::EliminatedSpeciesNeutral(self.species[self.eliminated].name.clone()));
        }
        Ok(())
    }

    /// Dimensional coefficients of the charge equation.
    pub fn eliminate(&self) -> Result<CnpCoefficients, PhysicsError> {
        self.validate()?;
        let sm = &self.species[self.eliminated];
        let zm = sm.z as f64;
        let mu_m = sm.mobility(self.temperature);
        let mut a = Vec::new();
        let mut kappa = Vec::new();
        let mut recovery = Vec::new();
        for k in self.retained() {
            let s = &self.species[k];
            let zk = s.z as f64;
            a.push(FARADAY * zk * (s.d - sm.d));
            kappa.push(zk * (zk * s.mobility(self.temperature) - zm * mu_m) * FARADAY * FARADAY);
            recovery.push(-zk / zm);
        }
        Ok(CnpCoefficients { a, kappa, recovery })
    }
}

/// Charge-equation coefficients in physical units, indexed by retained species.
#[derive(Debug, Clone, PartialEq)]
pub struct CnpCoefficients {
    /// a_k = F z_k (D_k − D_m)
    pub a: Vec<f64>,
    /// κ(c) = Σ kappa[k] c_k
    pub kappa: Vec<f64>,
    /// c_m = Σ recovery[k] c_k
    pub recovery: Vec<f64>,
}

impl CnpCoefficients {
    pub fn conductivity(&self, c: &[f64]) -> f64 {
        self.kappa.iter().zip(c).map(|(k, c)| k * c).sum()
    }

    pub fn recover(&self, c: &[f64]) -> f64 {
        self.recovery.iter().zip(c).map(|(r, c)| r * c).sum()
    }
}

/// Reference scales of the nondimensional model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nondimensionalization {
    pub length: f64,
    pub velocity: f64,
    /// mol/m³
    pub c_ref: f64,
    pub temperature: f64,
}

impl Nondimensionalization {
    pub fn new(length: f64, velocity: f64, c_ref: f64, temperature: f64) -> Result<Self, PhysicsError> {
        if !(length > 0.0 && velocity > 0.0 && c_ref > 0.0 && temperature > 0.0) {
            return Err(PhysicsError::BadScales { length, velocity, c_ref });
        }
        Ok(Nondimensionalization {
            length,
            velocity,
            c_ref,
            temperature,
        })
    }

    /// RT/F in volts.
    pub fn thermal_voltage(&self) -> f64 {
        GAS_CONSTANT * self.temperature / FARADAY
    }

    pub fn diffusivity(&self, d: f64) -> f64 {
        d / (self.length * self.velocity)
    }

    pub fn diffusivity_dim(&self, dhat: f64) -> f64 {
        dhat * self.length * self.velocity
    }

    pub fn potential(&self, phi: f64) -> f64 {
        phi / self.thermal_voltage()
    }

    pub fn potential_dim(&self, phi_hat: f64) -> f64 {
        phi_hat * self.thermal_voltage()
    }

    pub fn position(&self, x: f64) -> f64 {
        x / self.length
    }

    pub fn position_dim(&self, x_hat: f64) -> f64 {
        x_hat * self.length
    }

    /// Nondimensional exchange-current prefactor Ĵ0 = J0 c_in^{γ−1} / (u F c*^γ).
    pub fn exchange_current(&self, j0: f64, c_in: f64, c_star: f64, gamma: f64) -> f64 {
        j0 * c_in.powf(gamma - 1.0) / (self.velocity * FARADAY * c_star.powf(gamma))
    }

    /// Scaled coefficients of `sys`.
    pub fn scale(&self, sys: &IonSystem) -> Result<ScaledSystem, PhysicsError> {
        sys.validate()?;
        let z = sys.species.iter().map(|s| s.z as f64).collect();
        let dhat = sys.species.iter().map(|s| self.diffusivity(s.d)).collect();
        let w = sys.species.iter().map(|s| s.c_in / self.c_ref).collect();
        ScaledSystem::new(z, dhat, w, sys.eliminated)
    }
}

/// Nondimensional transport coefficients of all species.
///
/// Unknowns are ĉ_k = c_k / c_k^in. With weights w_k = c_k^in / c_ref the
/// charge equation reads −∇·(Σ a_k ∇ĉ_k) − ∇·(κ ∇Φ̂) − f = 0 where
/// a_k = z_k w_k (D̂_k − D̂_m), κ = Σ κ_k ĉ_k, κ_k = z_k w_k (z_k D̂_k − z_m D̂_m).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSystem {
    pub z: Vec<f64>,
    pub dhat: Vec<f64>,
    pub w: Vec<f64>,
    pub eliminated: usize,
    retained: Vec<usize>,
    a: Vec<f64>,
    kappa: Vec<f64>,
    recovery: Vec<f64>,
}

impl ScaledSystem {
    pub fn new(z: Vec<f64>, dhat: Vec<f64>, w: Vec<f64>, eliminated: usize) -> Result<Self, PhysicsError> {
        let m = z.len();
        if m < 2 {
            return Err(PhysicsError::TooFewSpecies(m));
        }
        if dhat.len() != m || w.len() != m || eliminated >= m {
            return Err(PhysicsError::BadSpecies("system".into(), "inconsistent coefficient lengths".into()));
        }
        if z[eliminated] == 0.0 || w[eliminated] == 0.0 {
            return Err(PhysicsError::EliminatedSpeciesNeutral(format!("#{eliminated}")));
        }
        if dhat.iter().any(|&d| !(d > 0.0)) {
            return Err(PhysicsError::BadSpecies("system".into(), "diffusivity must be positive".into()));
        }
        let retained: Vec<usize> = (0..m).filter(|&k| k != eliminated).collect();
        let (zm, dm, wm) = (z[eliminated], dhat[eliminated], w[eliminated]);
        let a = retained.iter().map(|&k| z[k] * w[k] * (dhat[k] - dm)).collect();
        let kappa = retained
            .iter()
            .map(|&k| z[k] * w[k] * (z[k] * dhat[k] - zm * dm))
            .collect();
        let recovery = retained.iter().map(|&k| -z[k] * w[k] / (zm * wm)).collect();
        Ok(ScaledSystem {
            z,
            dhat,
            w,
            eliminated,
            retained,
            a,
            kappa,
            recovery,
        })
    }

    pub fn n_species(&self) -> usize {
        self.z.len()
    }

    /// Number of concentration unknowns (m − 1).
    pub fn n_retained(&self) -> usize {
        self.retained.len()
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    /// Cross-diffusion coefficient of retained species `j`.
    pub fn a(&self, j: usize) -> f64 {
        self.a[j]
    }

    /// Conductivity slope of retained species `j`.
    pub fn kappa_coeff(&self, j: usize) -> f64 {
        self.kappa[j]
    }

    /// ∂ĉ_m/∂ĉ_j for retained species `j`.
    pub fn recovery(&self, j: usize) -> f64 {
        self.recovery[j]
    }

    pub fn conductivity(&self, c: &[f64]) -> f64 {
        self.kappa.iter().zip(c).map(|(k, c)| k * c).sum()
    }

    pub fn recover(&self, c: &[f64]) -> f64 {
        self.recovery.iter().zip(c).map(|(r, c)| r * c).sum()
    }

    /// Retained-species diffusivity and valence, by field index.
    pub fn species_of(&self, j: usize) -> (f64, f64) {
        let k = self.retained[j];
        (self.dhat[k], self.z[k])
    }
}

/// Butler–Volmer kinetics of one redox couple `Ox + n e⁻ → Red`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButlerVolmer {
    pub gamma: f64,
    pub alpha_anodic: f64,
    pub alpha_cathodic: f64,
    pub electrons: f64,
    /// Reference oxidant concentration c_o*, mol/m³.
    pub c_ox_star: f64,
    /// Reference reductant concentration; `None` for a solid reductant of unit activity.
    pub c_red_star: Option<f64>,
    pub temperature: f64,
}

/// Current density and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BvEval {
    /// A/m²
    pub j: f64,
    pub dj_dc_ox: f64,
    pub dj_dc_red: f64,
    pub dj_dphi: f64,
}

impl ButlerVolmer {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let unit = |a: f64| a > 0.0 && a <= 1.0;
        if !unit(self.alpha_anodic) || !unit(self.alpha_cathodic) {
            return Err(PhysicsError::BadKinetics("transfer coefficients must lie in (0, 1]".into()));
        }
        if !(self.electrons >= 1.0) {
            return Err(PhysicsError::BadKinetics("electron count must be at least 1".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(PhysicsError::BadKinetics("gamma must be positive".into()));
        }
        if !(self.c_ox_star > 0.0) || self.c_red_star.is_some_and(|c| !(c > 0.0)) {
            return Err(PhysicsError::BadKinetics("reference concentrations must be positive".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(PhysicsError::BadKinetics("temperature must be positive".into()));
        }
        Ok(())
    }

    /// (c/c*)^γ with c clipped at zero, and its derivative in c.
    fn activity(&self, c: f64, c_star: f64) -> Result<(f64, f64), PhysicsError> {
        let r = c.max(0.0) / c_star;
        if r == 0.0 {
            return if self.gamma > 1.0 {
                Ok((0.0, 0.0))
            } else if self.gamma == 1.0 {
                Ok((0.0, if c < 0.0 { 0.0 } else { 1.0 / c_star }))
            } else if c < 0.0 {
                Ok((0.0, 0.0))
            } else {
                Err(PhysicsError::KineticsSingular(self.gamma))
            };
        }
        let v = r.powf(self.gamma);
        Ok((v, self.gamma * v / r / c_star))
    }

    /// Evaluates the current density for dimensional concentrations (mol/m³)
    /// and potentials (V). `c_red` is ignored for a solid reductant.
    pub fn eval(&self, j0: f64, c_ox: f64, c_red: f64, phi_app: f64, phi: f64) -> Result<BvEval, PhysicsError> {
        let f = self.electrons * FARADAY / (GAS_CONSTANT * self.temperature);
        let eta = phi_app - phi;
        let ea = (self.alpha_anodic * f * eta).exp();
        let ec = (-self.alpha_cathodic * f * eta).exp();
        let (ar, dar) = match self.c_red_star {
            Some(cs) => self.activity(c_red, cs)?,
            None => (1.0, 0.0),
        };
        let (ao, dao) = self.activity(c_ox, self.c_ox_star)?;
        Ok(BvEval {
            j: j0 * (ar * ea - ao * ec),
            dj_dc_ox: -j0 * dao * ec,
            dj_dc_red: j0 * dar * ea,
            dj_dphi: -j0 * f * (self.alpha_anodic * ar * ea + self.alpha_cathodic * ao * ec),
        })
    }
}

/// Parabolic channel flow u_x = 6 u_avg y (h − y) / h².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicFlow {
    pub gap: f64,
    pub u_avg: f64,
}

impl ParabolicFlow {
    pub fn velocity(&self, x: [f64; 3]) -> [f64; 3] {
        let y = x[1];
        [6.0 * self.u_avg * y * (self.gap - y) / (self.gap * self.gap), 0.0, 0.0]
    }
}

pub fn parabolic_velocity(gap: f64, u_avg: f64) -> ParabolicFlow {
    ParabolicFlow { gap, u_avg }
}

/// Exchange current density J0(z) = (3/5) J̄0 [2 − ((z − w/2)/(w/2))²].
pub fn exchange_current_profile(z: f64, width: f64, j_bar: f64) -> Result<f64, PhysicsError> {
    let tol = 1e-12 * width;
    if z < -tol || z > width + tol {
        return Err(PhysicsError::OutsideWidth { z, w: width });
    }
    let s = (z - 0.5 * width) / (0.5 * width);
    Ok(0.6 * j_bar * (2.0 - s * s))
}

/// Which side of the cell an electrode face belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Electrode {
    Anode,
    Cathode,
}

/// Butler–Volmer boundary data of the nondimensional reactor problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeKinetics {
    pub bv: ButlerVolmer,
    /// Full-system index of the oxidant.
    pub oxidant: usize,
    /// Full-system index of a dissolved reductant; `None` for a solid one.
    pub reductant: Option<usize>,
    pub phi_app_anode: f64,
    pub phi_app_cathode: f64,
    /// Width-averaged exchange current density, A/m².
    pub j0_mean: f64,
    /// Channel width in metres; the exchange current varies across it.
    pub width: f64,
    pub scales: Nondimensionalization,
    /// Inlet concentrations of all species, mol/m³.
    pub c_in: Vec<f64>,
}

/// Current density at one electrode point with derivatives in scaled variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScaledKinetics {
    /// A/m²
    pub j: f64,
    pub dj_dc_ox: f64,
    pub dj_dc_red: f64,
    pub dj_dphi: f64,
}

impl ElectrodeKinetics {
    pub fn phi_app(&self, e: Electrode) -> f64 {
        match e {
            Electrode::Anode => self.phi_app_anode,
            Electrode::Cathode => self.phi_app_cathode,
        }
    }

    /// Current density at scaled position `x_hat` for scaled concentrations
    /// of all species and scaled potential; derivatives are with respect to
    /// the scaled variables.
    pub fn current(&self, e: Electrode, x_hat: [f64; 3], c_hat: &[f64], phi_hat: f64) -> Result<ScaledKinetics, PhysicsError> {
        let z = self.scales.position_dim(x_hat[2]).clamp(0.0, self.width);
        let j0 = exchange_current_profile(z, self.width, self.j0_mean)?;
        let vt = self.scales.thermal_voltage();
        let c_ox_in = self.c_in[self.oxidant];
        let (c_red, c_red_in) = match self.reductant {
            Some(r) => (c_hat[r] * self.c_in[r], self.c_in[r]),
            None => (0.0, 0.0),
        };
        let ev = self.bv.eval(j0, c_hat[self.oxidant] * c_ox_in, c_red, self.phi_app(e), phi_hat * vt)?;
        Ok(ScaledKinetics {
            j: ev.j,
            dj_dc_ox: ev.dj_dc_ox * c_ox_in,
            dj_dc_red: ev.dj_dc_red * c_red_in,
            dj_dphi: ev.dj_dphi * vt,
        })
    }

    /// Scaled normal flux ĝ_k per unit current density for species `k`
    /// (ĝ_k = factor · J).
    pub fn flux_factor(&self, k: usize) -> f64 {
        let nfu = self.bv.electrons * FARADAY * self.scales.velocity;
        if k == self.oxidant {
            1.0 / (nfu * self.c_in[k])
        } else if Some(k) == self.reductant {
            -1.0 / (nfu * self.c_in[k])
        } else {
            0.0
        }
    }
}

/// Manufactured solution on the unit box: c_1 = cos x + sin y + 3,
/// Φ = sin x + cos y + 3, u = (6y(1−y), 0, 0), all retained species share c_1.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsCase {
    pub system: ScaledSystem,
}

impl Default for MmsCase {
    fn default() -> Self {
        Self::new()
    }
}

impl MmsCase {
    pub fn new() -> Self {
        let system = ScaledSystem::new(vec![2.0, -2.0], vec![5e-6, 1e-5], vec![1.0, 1.0], 1)
            .expect("manufactured system is valid");
        MmsCase { system }
    }

    pub fn concentration(x: [f64; 3]) -> f64 {
        x[0].cos() + x[1].sin() + 3.0
    }

    pub fn potential(x: [f64; 3]) -> f64 {
        x[0].sin() + x[1].cos() + 3.0
    }

    pub fn velocity(x: [f64; 3]) -> [f64; 3] {
        [6.0 * x[1] * (1.0 - x[1]), 0.0, 0.0]
    }

    fn grad_c(x: [f64; 3]) -> [f64; 3] {
        [-x[0].sin(), x[1].cos(), 0.0]
    }

    fn lap_c(x: [f64; 3]) -> f64 {
        -x[0].cos() - x[1].sin()
    }

    fn grad_phi(x: [f64; 3]) -> [f64; 3] {
        [x[0].cos(), -x[1].sin(), 0.0]
    }

    fn lap_phi(x: [f64; 3]) -> f64 {
        -x[0].sin() - x[1].cos()
    }

    /// ∇·(c ∇Φ) for the exact fields.
    fn div_c_grad_phi(x: [f64; 3]) -> f64 {
        let gc = Self::grad_c(x);
        let gp = Self::grad_phi(x);
        gc[0] * gp[0] + gc[1] * gp[1] + Self::concentration(x) * Self::lap_phi(x)
    }

    /// Volumetric source of retained species `j`.
    pub fn species_source(&self, j: usize, x: [f64; 3]) -> f64 {
        self.source_of(self.system.retained()[j], x)
    }

    /// Volumetric source of species `k` (full-system index), eliminated one included.
    pub fn source_of(&self, k: usize, x: [f64; 3]) -> f64 {
        let (d, z) = (self.system.dhat[k], self.system.z[k]);
        let u = Self::velocity(x);
        let gc = Self::grad_c(x);
        let adv = u[0] * gc[0] + u[1] * gc[1] + u[2] * gc[2];
        -d * Self::lap_c(x) + adv - z * d * Self::div_c_grad_phi(x)
    }

    /// Charge-equation source f.
    pub fn charge_source(&self, x: [f64; 3]) -> f64 {
        let s = &self.system;
        let mut f = 0.0;
        for j in 0..s.n_retained() {
            f -= s.a(j) * Self::lap_c(x);
            f -= s.kappa_coeff(j) * Self::div_c_grad_phi(x);
        }
        f
    }
}
