//! Benchmark definitions, exact solutions, oblique shock relations and the L1 error.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::amr::{AmrConfig, IndicatorKind};
use crate::boundary::{BoundaryCondition, BoundaryData, StateFn};
use crate::error::{Error, Result};
use crate::fespace::{shape_values, FESpace, StateVector};
use crate::mesh::{AdaptiveMesh, Rect};
use crate::physics::{conserved_from_energy, conserved_from_primitive, pressure, PhysicsModel, VelocityField};
use crate::solver::{DetectorMode, NonlinearConfig};
use crate::stabilization::StabilizationParams;

pub const GAMMA: f64 = 1.4;

/// Low-order (detector fixed to one) or high-order (computed detector) scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    Low,
    #[default]
    High,
}

impl Scheme {
    pub fn detector(self) -> DetectorMode {
        match self {
            Scheme::Low => DetectorMode::Constant(1.0),
            Scheme::High => DetectorMode::Computed,
        }
    }
}

/// Everything needed to run one benchmark.
#[derive(Clone)]
pub struct CaseDefinition {
    pub name: String,
    pub model: PhysicsModel,
    pub domain: Rect,
    pub root: (usize, usize),
    pub boundary: BoundaryData,
    pub exact: Option<StateFn>,
    /// Initial guess on the first mesh.
    pub initial: StateFn,
    pub scheme: Scheme,
    pub params: StabilizationParams,
    pub nonlinear: NonlinearConfig,
    pub amr: AmrConfig,
    /// Cell limits of the adaptive run for the low- and high-order schemes.
    pub cell_caps: (usize, usize),
    /// Default uniform sweep `(first, last)` in cells per unit side of the root grid.
    pub uniform: Option<(usize, usize)>,
    /// Component measured by the L1 error.
    pub error_component: usize,
}

impl std::fmt::Debug for CaseDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaseDefinition")
            .field("name", &self.name)
            .field("model", &self.model)
            .field("domain", &self.domain)
            .field("root", &self.root)
            .field("scheme", &self.scheme)
            .field("params", &self.params)
            .field("amr", &self.amr)
            .finish_non_exhaustive()
    }
}

pub const CASE_NAMES: [&str; 6] = [
    "linear_discontinuity",
    "circular_discontinuity",
    "compression_corner",
    "reflected_shock",
    "scalar_convergence",
    "euler_convergence",
];

impl CaseDefinition {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "linear_discontinuity" => Ok(linear_discontinuity()),
            "scalar_convergence" => {
                let mut c = linear_discontinuity();
                c.name = "scalar_convergence".into();
                c.uniform = Some((16, 256));
                Ok(c)
            }
            "circular_discontinuity" | "circular" => Ok(circular_discontinuity()),
            "compression_corner" | "corner" => compression_corner(),
            "euler_convergence" => {
                let mut c = compression_corner()?;
                c.name = "euler_convergence".into();
                c.uniform = Some((16, 128));
                Ok(c)
            }
            "reflected_shock" | "reflected" => reflected_shock(),
            other => Err(Error::Config(format!("unknown case '{other}', expected one of {}", CASE_NAMES.join(", ")))),
        }
    }

    /// Switches the scheme and the matching cell cap.
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self.amr.max_cells = match scheme {
            Scheme::Low => self.cell_caps.0,
            Scheme::High => self.cell_caps.1,
        };
        self
    }

    pub fn initial_mesh(&self) -> Result<AdaptiveMesh> {
        AdaptiveMesh::new_uniform(self.root.0, self.root.1, self.domain)
    }

    /// Root grid for a uniform mesh with `n` cells per unit side of the default root grid.
    pub fn scaled_root(&self, n: usize) -> (usize, usize) {
        let base = self.root.0.min(self.root.1);
        (self.root.0 * n / base, self.root.1 * n / base)
    }
}

fn scalar_params() -> StabilizationParams {
    StabilizationParams { tracked: vec![0], ..Default::default() }
}

fn characteristic_everywhere(f: StateFn) -> BoundaryData {
    BoundaryData::uniform(BoundaryCondition::Characteristic(f))
}

/// Slope of the discontinuity in the linear transport case.
pub fn linear_front(x: f64) -> f64 {
    0.7 + 2.0 * x * (-PI / 3.0).sin()
}

pub fn linear_exact(p: [f64; 2]) -> f64 {
    if p[1] > linear_front(p[0]) {
        1.0
    } else {
        0.0
    }
}

pub fn linear_discontinuity() -> CaseDefinition {
    let exact: StateFn = Arc::new(|p| vec![linear_exact(p)]);
    CaseDefinition {
        name: "linear_discontinuity".into(),
        model: PhysicsModel::Scalar { velocity: VelocityField::Constant([0.5, (-PI / 3.0).sin()]) },
        domain: Rect::unit(),
        root: (16, 16),
        boundary: characteristic_everywhere(exact.clone()),
        exact: Some(exact),
        initial: Arc::new(|_| vec![0.0]),
        scheme: Scheme::High,
        params: scalar_params(),
        nonlinear: NonlinearConfig::default(),
        amr: AmrConfig { max_cells: 50_000, ..Default::default() },
        cell_caps: (2_000_000, 50_000),
        uniform: None,
        error_component: 0,
    }
}

/// Inflow profile of the circular case on `x = 0`.
pub fn circular_profile(y: f64) -> f64 {
    if (0.15..=0.45).contains(&y) {
        1.0
    } else if (0.55..=0.85).contains(&y) {
        ((10.0 / 3.0) * PI * (y - 0.4)).cos().powi(2)
    } else {
        0.0
    }
}

/// Exact solution of the circular case: the profile carried along circles about the origin.
pub fn circular_exact(p: [f64; 2]) -> f64 {
    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
    if r <= 1.0 {
        circular_profile(r)
    } else {
        0.0
    }
}

pub fn circular_discontinuity() -> CaseDefinition {
    let exact: StateFn = Arc::new(|p| vec![circular_exact(p)]);
    CaseDefinition {
        name: "circular_discontinuity".into(),
        model: PhysicsModel::Scalar { velocity: VelocityField::Circular },
        domain: Rect::unit(),
        root: (16, 16),
        boundary: characteristic_everywhere(exact.clone()),
        exact: Some(exact),
        initial: Arc::new(|_| vec![0.0]),
        scheme: Scheme::High,
        params: scalar_params(),
        nonlinear: NonlinearConfig::default(),
        amr: AmrConfig { max_cells: 50_000, ..Default::default() },
        cell_caps: (2_000_000, 50_000),
        uniform: None,
        error_component: 0,
    }
}

/// Flow deflection `θ` produced by an oblique shock at wave angle `β`.
pub fn theta_beta_mach(beta: f64, mach: f64, gamma: f64) -> f64 {
    let m2 = mach * mach;
    let s = beta.sin();
    (2.0 / beta.tan() * (m2 * s * s - 1.0) / (m2 * (gamma + (2.0 * beta).cos()) + 2.0)).atan()
}

/// Weak-shock wave angle for deflection `θ` at Mach `M`.
pub fn oblique_shock_angle(theta: f64, mach: f64, gamma: f64) -> Result<f64> {
    if !(mach > 1.0) {
        return Err(Error::InvalidArgument(format!("oblique shocks need supersonic flow, got M = {mach}")));
    }
    let mu = (1.0 / mach).asin();
    // Ternary search for the detachment angle, then bisection on the weak branch.
    let (mut lo, mut hi) = (mu, 0.5 * PI);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if theta_beta_mach(a, mach, gamma) < theta_beta_mach(b, mach, gamma) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let beta_max = 0.5 * (lo + hi);
    if theta_beta_mach(beta_max, mach, gamma) < theta {
        return Err(Error::InvalidArgument(format!(
            "deflection {theta} exceeds the attached-shock limit at M = {mach}"
        )));
    }
    let (mut lo, mut hi) = (mu, beta_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if theta_beta_mach(mid, mach, gamma) < theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// State behind a shock with unit normal `n` pointing downstream (Rankine–Hugoniot relations).
pub fn shock_downstream(upstream: &[f64], n: [f64; 2], gamma: f64) -> Result<[f64; 4]> {
    let rho = upstream[0];
    let v = [upstream[1] / rho, upstream[2] / rho];
    let p = pressure(upstream, gamma)?;
    let a = (gamma * p / rho).sqrt();
    let vn = v[0] * n[0] + v[1] * n[1];
    let mn = vn / a;
    if !(mn > 1.0) {
        return Err(Error::InvalidArgument(format!("normal Mach number {mn} is not supersonic")));
    }
    let m2 = mn * mn;
    let rho2 = rho * (gamma + 1.0) * m2 / ((gamma - 1.0) * m2 + 2.0);
    let p2 = p * (1.0 + 2.0 * gamma / (gamma + 1.0) * (m2 - 1.0));
    let vn2 = vn * rho / rho2;
    let vt = [v[0] - vn * n[0], v[1] - vn * n[1]];
    Ok(conserved_from_primitive(rho2, [vt[0] + vn2 * n[0], vt[1] + vn2 * n[1]], p2, gamma))
}

fn flow_angle(u: &[f64]) -> f64 {
    u[2].atan2(u[1])
}

fn mach(u: &[f64], gamma: f64) -> Result<f64> {
    let p = pressure(u, gamma)?;
    let speed = (u[1] * u[1] + u[2] * u[2]).sqrt() / u[0];
    Ok(speed / (gamma * p / u[0]).sqrt())
}

/// Geometry and states of the compression corner: upstream flow at 10° into the wall `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerSolution {
    pub upstream: [f64; 4],
    pub downstream: [f64; 4],
    /// Wave angle relative to the upstream flow.
    pub beta: f64,
    /// Shock angle relative to the wall.
    pub wall_angle: f64,
}

impl CornerSolution {
    pub fn new(mach: f64, deflection_deg: f64, gamma: f64) -> Result<Self> {
        let theta = deflection_deg.to_radians();
        let upstream = conserved_from_primitive(1.0, [mach * theta.cos(), -mach * theta.sin()], 1.0 / gamma, gamma);
        let beta = oblique_shock_angle(theta, mach, gamma)?;
        let phi = beta - theta;
        let downstream = shock_downstream(&upstream, [phi.sin(), -phi.cos()], gamma)?;
        Ok(Self { upstream, downstream, beta, wall_angle: phi })
    }

    pub fn state(&self, p: [f64; 2]) -> [f64; 4] {
        if p[1] > p[0] * self.wall_angle.tan() {
            self.upstream
        } else {
            self.downstream
        }
    }
}

pub fn compression_corner() -> Result<CaseDefinition> {
    let sol = CornerSolution::new(2.0, 10.0, GAMMA)?;
    let up = sol.upstream;
    let inflow: StateFn = Arc::new(move |_| up.to_vec());
    let exact: StateFn = Arc::new(move |p| sol.state(p).to_vec());
    Ok(CaseDefinition {
        name: "compression_corner".into(),
        model: PhysicsModel::euler(GAMMA)?,
        domain: Rect::unit(),
        root: (16, 16),
        boundary: BoundaryData {
            left: BoundaryCondition::Prescribed(inflow.clone()),
            top: BoundaryCondition::Prescribed(inflow.clone()),
            bottom: BoundaryCondition::SlipWall,
            right: BoundaryCondition::Characteristic(exact.clone()),
        },
        exact: Some(exact),
        initial: inflow,
        scheme: Scheme::High,
        params: StabilizationParams { tracked: vec![0], ..Default::default() },
        nonlinear: NonlinearConfig::default(),
        amr: AmrConfig { max_cells: 5_000, ..Default::default() },
        cell_caps: (50_000, 5_000),
        uniform: None,
        error_component: 0,
    })
}

/// Tabulated states of the reflected shock: density, velocity and specific total energy.
pub const REFLECTED_TABLE: [(f64, [f64; 2], f64); 3] =
    [(1.0, [2.9, 0.0], 5.99075), (1.7, [2.62, -0.506], 5.8046), (2.687, [2.401, 0.0], 5.6122)];

/// Incident shock from the upper-left corner, reflected at the wall `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectedSolution {
    pub states: [[f64; 4]; 3],
    /// Incident shock angle below the horizontal.
    pub incident: f64,
    /// Reflected shock angle above the wall.
    pub reflected: f64,
    /// Abscissa of the reflection point.
    pub reflection_x: f64,
    pub height: f64,
}

impl ReflectedSolution {
    pub fn new(height: f64, gamma: f64) -> Result<Self> {
        let states = REFLECTED_TABLE.map(|(r, v, e)| conserved_from_energy(r, v, e));
        let theta = flow_angle(&states[0]) - flow_angle(&states[1]);
        let incident = oblique_shock_angle(theta, mach(&states[0], gamma)?, gamma)?;
        let beta_r = oblique_shock_angle(theta, mach(&states[1], gamma)?, gamma)?;
        Ok(Self { states, incident, reflected: beta_r - theta, reflection_x: height / incident.tan(), height })
    }

    /// Region index (0 = a, 1 = b, 2 = c) of a point.
    pub fn region(&self, p: [f64; 2]) -> usize {
        if p[1] < self.height - p[0] * self.incident.tan() {
            0
        } else if p[1] > (p[0] - self.reflection_x) * self.reflected.tan() {
            1
        } else {
            2
        }
    }

    pub fn state(&self, p: [f64; 2]) -> [f64; 4] {
        self.states[self.region(p)]
    }
}

pub fn reflected_shock() -> Result<CaseDefinition> {
    let sol = ReflectedSolution::new(1.0, GAMMA)?;
    let [a, b, _] = sol.states;
    let exact: StateFn = Arc::new(move |p| sol.state(p).to_vec());
    Ok(CaseDefinition {
        name: "reflected_shock".into(),
        model: PhysicsModel::euler(GAMMA)?,
        domain: Rect::new([0.0, 0.0], [4.1, 1.0]),
        root: (64, 16),
        boundary: BoundaryData {
            left: BoundaryCondition::Prescribed(Arc::new(move |_| a.to_vec())),
            top: BoundaryCondition::Prescribed(Arc::new(move |_| b.to_vec())),
            bottom: BoundaryCondition::SlipWall,
            right: BoundaryCondition::Characteristic(exact.clone()),
        },
        exact: Some(exact),
        initial: Arc::new(move |_| a.to_vec()),
        scheme: Scheme::High,
        params: StabilizationParams { tracked: vec![0], ..Default::default() },
        nonlinear: NonlinearConfig::default(),
        amr: AmrConfig { max_cells: 10_000, indicator: IndicatorKind::GraphLaplacian, ..Default::default() },
        cell_caps: (300_000, 10_000),
        uniform: None,
        error_component: 0,
    })
}

const GAUSS3: [(f64, f64); 3] =
    [(0.112_701_665_379_258_3, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.887_298_334_620_741_7, 5.0 / 18.0)];

/// `∫_Ω |u − u_h|` for one component with 3×3 Gauss points per cell.
pub fn l1_error(
    space: &FESpace,
    u: &StateVector,
    exact: &(dyn Fn([f64; 2]) -> Vec<f64> + Send + Sync),
    comp: usize,
) -> f64 {
    let mesh = space.mesh();
    let mut total = 0.0;
    for cell in 0..mesh.num_cells() {
        let b = mesh.cell_bounds(cell);
        let v = space.corner_values(u, cell, comp);
        let area = b.area();
        for &(tx, wx) in &GAUSS3 {
            for &(ty, wy) in &GAUSS3 {
                let phi = shape_values([tx, ty]);
                let uh: f64 = (0..4).map(|a| phi[a] * v[a]).sum();
                let p = [b.min[0] + tx * (b.max[0] - b.min[0]), b.min[1] + ty * (b.max[1] - b.min[1])];
                total += wx * wy * area * (exact(p)[comp] - uh).abs();
            }
        }
    }
    total
}
