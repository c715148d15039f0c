//! The fully discrete convex-splitting step: monolithic assembly, essential
//! boundary conditions, Newton iteration on the cubic term and the time loop.
//!
//! Unknowns are stacked as `[phi | omega | u | p | B | l]` where `l` is the
//! multiplier of the pressure mean constraint.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagnostics::{energy, total_mass, EnergyReport};
use crate::fespace::{Constraint, ElementFamily, FeSpace};
use crate::forms::{
    assemble_convection, assemble_curlcurl_divdiv, assemble_div_coupling, assemble_lorentz, assemble_mass,
    assemble_phase_transport, assemble_source_scalar, assemble_source_vector, assemble_stiffness, cubic_term, ParamError,
    SchemeParams, REUSE_FORCING, REUSE_MAX_KRYLOV,
};
use crate::manufactured::Manufactured;
use crate::mesh::{Mesh, Side};
use crate::projections::{l2_projection_vector, maxwell_projection, nodal_values, ritz_projection};
use crate::sparse::{norm2, CsrMatrix, DirectSolver, SparseError};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Linear(#[from] SparseError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid boundary conditions: {0}")]
    Bc(String),
    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<SchemeError>,
    },
}

/// Velocity/pressure pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Case I: P1-bubble velocity, P1 magnetic field.
    Mini,
    /// Case II: P2 velocity and magnetic field.
    TaylorHood,
}

impl Pairing {
    pub fn velocity_family(self) -> ElementFamily {
        match self {
            Pairing::Mini => ElementFamily::P1Bubble,
            Pairing::TaylorHood => ElementFamily::P2,
        }
    }

    pub fn magnetic_family(self) -> ElementFamily {
        match self {
            Pairing::Mini => ElementFamily::P1,
            Pairing::TaylorHood => ElementFamily::P2,
        }
    }
}

/// The spaces of one discretization; `scalar` carries phi, omega and p.
#[derive(Debug, Clone)]
pub struct Spaces {
    pub pairing: Pairing,
    pub scalar: FeSpace,
    pub pressure: FeSpace,
    pub velocity: FeSpace,
    pub magnetic: FeSpace,
}

impl Spaces {
    pub fn new(mesh: Arc<Mesh>, pairing: Pairing) -> Self {
        Self {
            pairing,
            scalar: FeSpace::new(mesh.clone(), ElementFamily::P1, 1, Constraint::None),
            pressure: FeSpace::new(mesh.clone(), ElementFamily::P1, 1, Constraint::ZeroMean),
            velocity: FeSpace::new(mesh.clone(), pairing.velocity_family(), 2, Constraint::None),
            magnetic: FeSpace::new(mesh, pairing.magnetic_family(), 2, Constraint::None),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        self.scalar.mesh()
    }

    fn layout(&self) -> Layout {
        let (ns, nu, nb) = (self.scalar.n_dofs(), self.velocity.n_dofs(), self.magnetic.n_dofs());
        Layout { phi: 0, omega: ns, u: 2 * ns, p: 2 * ns + nu, b: 3 * ns + nu, mult: 3 * ns + nu + nb }
    }

    /// Size of the monolithic system including the pressure multiplier.
    pub fn system_size(&self) -> usize {
        self.layout().mult + 1
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    phi: usize,
    omega: usize,
    u: usize,
    p: usize,
    b: usize,
    mult: usize,
}

/// Coefficient vectors of all fields at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFields {
    pub phi: Vec<f64>,
    pub omega: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    pub t: f64,
    pub k: usize,
}

impl StateFields {
    pub fn zeros(spaces: &Spaces) -> Self {
        let ns = spaces.scalar.n_dofs();
        Self {
            phi: vec![0.0; ns],
            omega: vec![0.0; ns],
            u: vec![0.0; spaces.velocity.n_dofs()],
            p: vec![0.0; ns],
            b: vec![0.0; spaces.magnetic.n_dofs()],
            t: 0.0,
            k: 0,
        }
    }

    fn pack(&self, l: Layout, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        x[l.phi..l.omega].copy_from_slice(&self.phi);
        x[l.omega..l.u].copy_from_slice(&self.omega);
        x[l.u..l.p].copy_from_slice(&self.u);
        x[l.p..l.b].copy_from_slice(&self.p);
        x[l.b..l.mult].copy_from_slice(&self.b);
        x
    }

    fn unpack(x: &[f64], l: Layout, t: f64, k: usize) -> Self {
        Self {
            phi: x[l.phi..l.omega].to_vec(),
            omega: x[l.omega..l.u].to_vec(),
            u: x[l.u..l.p].to_vec(),
            p: x[l.p..l.b].to_vec(),
            b: x[l.b..l.mult].to_vec(),
            t,
            k,
        }
    }
}

/// Boundary data `g(x, t)` of a vector field.
pub type VectorData = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;

/// Condition imposed on one side for one vector field.
#[derive(Clone)]
pub enum Bc {
    /// Natural condition.
    None,
    DirichletFull(VectorData),
    DirichletTangential(VectorData),
    /// Normal component zero, tangential component natural.
    NormalZero,
    /// Side identified with its partner through a periodic mesh.
    PeriodicX,
}

impl fmt::Debug for Bc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Bc::None => "None",
            Bc::DirichletFull(_) => "DirichletFull",
            Bc::DirichletTangential(_) => "DirichletTangential",
            Bc::NormalZero => "NormalZero",
            Bc::PeriodicX => "PeriodicX",
        };
        f.write_str(s)
    }
}

/// Conditions on velocity and magnetic field per side (indexed by
/// [`Side::index`]). The phase field and chemical potential always carry
/// natural conditions (or periodicity on a periodic mesh).
#[derive(Debug, Clone)]
pub struct BcSpec {
    pub u: [Bc; 4],
    pub b: [Bc; 4],
}

impl BcSpec {
    pub fn validate(&self, mesh: &Mesh) -> Result<(), SchemeError> {
        for (name, bcs) in [("u", &self.u), ("B", &self.b)] {
            for side in Side::ALL {
                let periodic_side = mesh.is_periodic() && matches!(side, Side::Left | Side::Right);
                let is_periodic = matches!(bcs[side.index()], Bc::PeriodicX);
                if is_periodic != periodic_side {
                    return Err(SchemeError::Bc(format!(
                        "{name} on {side:?}: PeriodicX must be used exactly on the identified sides of a periodic mesh"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Constrained `(dof, value)` pairs of a vector space at time `t`.
    fn resolve(bcs: &[Bc; 4], space: &FeSpace, t: f64) -> Vec<(usize, f64)> {
        let mut out = BTreeMap::new();
        for side in Side::ALL {
            let comps: &[usize] = match &bcs[side.index()] {
                Bc::DirichletFull(_) => &[0, 1],
                Bc::DirichletTangential(_) => &[side.tangential_component()],
                Bc::NormalZero => &[side.normal_component()],
                Bc::None | Bc::PeriodicX => &[],
            };
            for &c in comps {
                let dofs = space.boundary_dofs(side, c);
                let vals = match &bcs[side.index()] {
                    Bc::DirichletFull(g) | Bc::DirichletTangential(g) => nodal_values(space, &dofs, |x| g(x, t)),
                    _ => dofs.iter().map(|&d| (d, 0.0)).collect(),
                };
                for (d, v) in vals {
                    out.entry(d).or_insert(v);
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Initial data of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    Zero,
    /// Exact solution at `t = 0`.
    Manufactured,
    /// `phi = -0.05 + 0.001 r` with seeded zero-mean nodal noise `r` in [-1, 1].
    Spinodal { seed: u64 },
    /// Shear layer with a sinusoidal interface perturbation of `modes` periods.
    KelvinHelmholtz { modes: u32 },
}

/// Everything that defines a run apart from the parameters.
#[derive(Debug, Clone)]
pub struct ProblemCase {
    pub spaces: Spaces,
    pub bcs: BcSpec,
    pub initial: InitialData,
    /// Enables the manufactured forcing terms.
    pub exact: Option<Manufactured>,
}

fn no_slip() -> [Bc; 4] {
    let zero: VectorData = Arc::new(|_, _| [0.0, 0.0]);
    std::array::from_fn(|_| Bc::DirichletFull(zero.clone()))
}

impl ProblemCase {
    /// Manufactured solution on the unit square with `n` cells per side.
    pub fn manufactured(n: usize, pairing: Pairing, params: &SchemeParams) -> Result<Self, SchemeError> {
        let mesh = Arc::new(Mesh::structured(n, false).map_err(|e| SchemeError::Bc(e.to_string()))?);
        let exact = Manufactured::new(params);
        let data: VectorData = Arc::new(move |x, t| exact.b(x, t));
        Ok(Self {
            spaces: Spaces::new(mesh, pairing),
            bcs: BcSpec { u: no_slip(), b: std::array::from_fn(|_| Bc::DirichletTangential(data.clone())) },
            initial: InitialData::Manufactured,
            exact: Some(exact),
        })
    }

    /// Spinodal decomposition with no-slip velocity and zero magnetic field on the boundary.
    pub fn spinodal(n: usize, pairing: Pairing, seed: u64) -> Result<Self, SchemeError> {
        let mesh = Arc::new(Mesh::structured(n, false).map_err(|e| SchemeError::Bc(e.to_string()))?);
        Ok(Self {
            spaces: Spaces::new(mesh, pairing),
            bcs: BcSpec { u: no_slip(), b: no_slip() },
            initial: InitialData::Spinodal { seed },
            exact: None,
        })
    }

    /// Kelvin–Helmholtz shear layer, periodic in x, slip walls and `B = (-1, 0)` at
    /// top and bottom.
    pub fn kelvin_helmholtz(n: usize, pairing: Pairing, modes: u32) -> Result<Self, SchemeError> {
        let mesh = Arc::new(Mesh::structured(n, true).map_err(|e| SchemeError::Bc(e.to_string()))?);
        let wall: VectorData = Arc::new(|_, _| [-1.0, 0.0]);
        let mut u: [Bc; 4] = std::array::from_fn(|_| Bc::PeriodicX);
        let mut b = u.clone();
        for side in [Side::Bottom, Side::Top] {
            u[side.index()] = Bc::NormalZero;
            b[side.index()] = Bc::DirichletFull(wall.clone());
        }
        Ok(Self {
            spaces: Spaces::new(mesh, pairing),
            bcs: BcSpec { u, b },
            initial: InitialData::KelvinHelmholtz { modes },
            exact: None,
        })
    }
}

fn kh_profile(x: [f64; 2], modes: u32, gamma: f64) -> (f64, [f64; 2]) {
    let k = 2.0 * PI * modes as f64;
    let w = 2f64.sqrt() * gamma;
    let th = ((x[1] - 0.5 - 0.01 * (k * x[0]).sin()) / w).tanh();
    let sech2 = 1.0 - th * th;
    (th, [sech2 / w * (-0.01 * k * (k * x[0]).cos()), sech2 / w])
}

fn subtract_mean(space: &FeSpace, v: &mut [f64]) {
    let c = assemble_source_scalar(space, |_| 1.0);
    let area: f64 = c.iter().sum();
    let mean = c.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() / area;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Seeded zero-mean nodal noise, scaled and shifted as `-0.05 + 0.001 r`.
pub fn spinodal_noise(space: &FeSpace, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r: Vec<f64> = (0..space.n_dofs()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    subtract_mean(space, &mut r);
    r.iter().map(|v| -0.05 + 0.001 * v).collect()
}

/// Initial state: Ritz projection for phi, L² projection for u and Maxwell
/// projection for B. Constrained DOFs of u and B take the initial field's own
/// nodal values.
pub fn initialize(case: &ProblemCase, params: &SchemeParams) -> Result<StateFields, SchemeError> {
    params.validate()?;
    case.bcs.validate(case.spaces.mesh())?;
    let sp = &case.spaces;
    let tol = params.lin_tol;
    let mut st = StateFields::zeros(sp);
    let exact = case.exact.unwrap_or_else(|| Manufactured::new(params));

    let u0: Box<dyn Fn([f64; 2]) -> [f64; 2]> = match case.initial {
        InitialData::Manufactured => Box::new(move |x| exact.u(x, 0.0)),
        InitialData::KelvinHelmholtz { modes } => {
            let g = params.gamma;
            Box::new(move |x| [kh_profile(x, modes, g).0, 0.0])
        }
        InitialData::Zero | InitialData::Spinodal { .. } => Box::new(|_| [0.0, 0.0]),
    };
    let (b0, jb0): (Box<dyn Fn([f64; 2]) -> [f64; 2]>, Box<dyn Fn([f64; 2]) -> [[f64; 2]; 2]>) = match case.initial {
        InitialData::Manufactured => (Box::new(move |x| exact.b(x, 0.0)), Box::new(move |x| exact.grad_b(x, 0.0))),
        InitialData::KelvinHelmholtz { .. } => (Box::new(|_| [1.0, 0.0]), Box::new(|_| [[0.0; 2]; 2])),
        InitialData::Zero | InitialData::Spinodal { .. } => (Box::new(|_| [0.0, 0.0]), Box::new(|_| [[0.0; 2]; 2])),
    };

    match case.initial {
        InitialData::Zero => {}
        InitialData::Manufactured => {
            st.phi = ritz_projection(&sp.scalar, |x| exact.phi(x, 0.0), |x| exact.grad_phi(x, 0.0), tol)?;
            st.omega = sp.scalar.interpolate_scalar(|x| exact.omega(x, 0.0));
            st.p = sp.scalar.interpolate_scalar(|x| exact.p(x, 0.0));
            subtract_mean(&sp.scalar, &mut st.p);
        }
        InitialData::Spinodal { seed } => st.phi = spinodal_noise(&sp.scalar, seed),
        InitialData::KelvinHelmholtz { modes } => {
            let g = params.gamma;
            st.phi = ritz_projection(&sp.scalar, |x| kh_profile(x, modes, g).0, |x| kh_profile(x, modes, g).1, tol)?;
        }
    }

    let positions = |bcs: &[Bc; 4], space: &FeSpace| -> Vec<usize> {
        BcSpec::resolve(bcs, space, 0.0).into_iter().map(|(d, _)| d).collect()
    };
    let ufix = nodal_values(&sp.velocity, &positions(&case.bcs.u, &sp.velocity), &u0);
    st.u = l2_projection_vector(&sp.velocity, &u0, &ufix, tol)?;
    let bfix = nodal_values(&sp.magnetic, &positions(&case.bcs.b, &sp.magnetic), &b0);
    st.b = maxwell_projection(&sp.magnetic, &jb0, &bfix, tol)?;
    Ok(st)
}

/// Parameter-independent blocks assembled once per run, with the global
/// sparsity pattern of the step matrix.
pub struct StepAssembler {
    layout: Layout,
    n: usize,
    /// Constant part of the step matrix on the full pattern.
    template: CsrMatrix,
    mass_s: CsrMatrix,
    mass_u: CsrMatrix,
    mass_b: CsrMatrix,
    rhs_norm: f64,
}

impl StepAssembler {
    pub fn new(case: &ProblemCase, params: &SchemeParams) -> Self {
        let sp = &case.spaces;
        let l = sp.layout();
        let n = l.mult + 1;
        let (s, u, b) = (&sp.scalar, &sp.velocity, &sp.magnetic);
        let dt = params.dt;
        let mass_s = assemble_mass(s, 1.0).matrix;
        let stiff_s = assemble_stiffness(s, 1.0).matrix;
        let mass_u = assemble_mass(u, 1.0).matrix;
        let stiff_u = assemble_stiffness(u, 1.0).matrix;
        let mass_b = assemble_mass(b, 1.0).matrix;
        let div = assemble_div_coupling(u, &sp.pressure).matrix;
        let c_curl = 1.0 / (params.mu * params.sigma);
        let ccdd = assemble_curlcurl_divdiv(b, c_curl, c_curl).matrix;
        let ones = assemble_source_scalar(&sp.pressure, |_| 1.0);

        // zero-valued placeholders carry the pattern of the step-dependent blocks
        let zs = vec![0.0; s.n_dofs()];
        let zu = vec![0.0; u.n_dofs()];
        let zb = vec![0.0; b.n_dofs()];
        let (t_pat, tt_pat) = assemble_phase_transport(s, u, &zs);
        let conv_pat = assemble_convection(u, &zu).matrix;
        let (l_pat, lt_pat) = assemble_lorentz(b, u, &zb, 1.0);

        let mut trips = Vec::new();
        mass_s.push_triplets(l.phi, l.phi, 1.0 / dt, &mut trips);
        stiff_s.push_triplets(l.phi, l.omega, params.mobility * params.gamma, &mut trips);
        t_pat.matrix.push_triplets(l.phi, l.u, 1.0, &mut trips);

        stiff_s.push_triplets(l.omega, l.phi, params.gamma, &mut trips);
        mass_s.push_triplets(l.omega, l.omega, -1.0, &mut trips);

        mass_u.push_triplets(l.u, l.u, 1.0 / dt, &mut trips);
        stiff_u.push_triplets(l.u, l.u, params.nu, &mut trips);
        conv_pat.push_triplets(l.u, l.u, 1.0, &mut trips);
        div.transpose().push_triplets(l.u, l.p, -1.0, &mut trips);
        l_pat.matrix.push_triplets(l.u, l.b, 1.0, &mut trips);
        tt_pat.matrix.push_triplets(l.u, l.omega, 1.0, &mut trips);

        div.push_triplets(l.p, l.u, 1.0, &mut trips);
        for (i, c) in ones.iter().enumerate() {
            trips.push((l.p + i, l.mult, *c));
            trips.push((l.mult, l.p + i, *c));
        }

        mass_b.push_triplets(l.b, l.b, 1.0 / dt, &mut trips);
        ccdd.push_triplets(l.b, l.b, 1.0, &mut trips);
        lt_pat.matrix.push_triplets(l.b, l.u, 1.0, &mut trips);

        let template = CsrMatrix::from_triplets(n, n, &trips).expect("block offsets in range");
        Self { layout: l, n, template, mass_s, mass_u, mass_b, rhs_norm: 0.0 }
    }
}

/// Step matrix (without the cubic Jacobian) and right-hand side, with
/// essential rows replaced by identity rows and data.
pub struct StepSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Constrained `(row, value)` pairs.
    pub fixed: Vec<(usize, f64)>,
}

/// Assemble the linear part of the step from `state_k` towards `t_next`.
pub fn assemble_step_system(
    asm: &StepAssembler,
    state: &StateFields,
    params: &SchemeParams,
    case: &ProblemCase,
    t_next: f64,
) -> Result<StepSystem, SchemeError> {
    let sp = &case.spaces;
    let l = asm.layout;
    let (s, u, b) = (&sp.scalar, &sp.velocity, &sp.magnetic);
    let mut a = asm.template.clone();
    let (t, tt) = assemble_phase_transport(s, u, &state.phi);
    a.add_block_in_pattern(&t.matrix, l.phi, l.u, 1.0)?;
    a.add_block_in_pattern(&tt.matrix, l.u, l.omega, -params.lambda)?;
    a.add_block_in_pattern(&assemble_convection(u, &state.u).matrix, l.u, l.u, 1.0)?;
    let (lor, lor_t) = assemble_lorentz(b, u, &state.b, 1.0);
    a.add_block_in_pattern(&lor.matrix, l.u, l.b, 1.0 / params.mu)?;
    a.add_block_in_pattern(&lor_t.matrix, l.b, l.u, -1.0)?;

    let dt = params.dt;
    let mut rhs = vec![0.0; asm.n];
    asm.mass_s.matvec_add(1.0 / dt, &state.phi, &mut rhs[l.phi..l.omega]);
    asm.mass_u.matvec_add(1.0 / dt, &state.u, &mut rhs[l.u..l.p]);
    asm.mass_b.matvec_add(1.0 / dt, &state.b, &mut rhs[l.b..l.mult]);
    if let Some(ex) = &case.exact {
        let add = |dst: &mut [f64], src: Vec<f64>| dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        add(&mut rhs[l.phi..l.omega], assemble_source_scalar(s, |x| ex.g_phi(x, t_next)));
        add(&mut rhs[l.u..l.p], assemble_source_vector(u, |x| ex.f_u(x, t_next)));
        add(&mut rhs[l.b..l.mult], assemble_source_vector(b, |x| ex.g_b(x, t_next)));
    }

    let mut fixed: Vec<(usize, f64)> = BcSpec::resolve(&case.bcs.u, u, t_next).into_iter().map(|(d, v)| (l.u + d, v)).collect();
    fixed.extend(BcSpec::resolve(&case.bcs.b, b, t_next).into_iter().map(|(d, v)| (l.b + d, v)));
    for &(r, v) in &fixed {
        a.set_identity_row(r)?;
        rhs[r] = v;
    }
    Ok(StepSystem { matrix: a, rhs, fixed })
}

/// Outcome of one Newton solve.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: StateFields,
    pub newton_iters: usize,
    pub residual: f64,
}

/// Full nonlinear residual `A x + cubic(phi) - b` and the cubic Jacobian.
fn residual(sys: &StepSystem, x: &[f64], phi_prev: &[f64], case: &ProblemCase, params: &SchemeParams, l: Layout) -> (Vec<f64>, CsrMatrix) {
    let mut f = sys.matrix.matvec(x);
    f.iter_mut().zip(&sys.rhs).for_each(|(a, b)| *a -= b);
    let (r, j) = cubic_term(&case.spaces.scalar, &x[l.phi..l.omega], phi_prev, 1.0 / params.gamma);
    f[l.omega..l.u].iter_mut().zip(&r).for_each(|(a, b)| *a += b);
    (f, j.matrix)
}

/// Solve one time step by damped Newton iteration starting from `state`.
pub fn newton_solve_step(
    asm: &mut StepAssembler,
    solver: &mut DirectSolver,
    state: &StateFields,
    params: &SchemeParams,
    case: &ProblemCase,
) -> Result<StepResult, SchemeError> {
    let l = asm.layout;
    let k = state.k + 1;
    let t_next = k as f64 * params.dt;
    let sys = assemble_step_system(asm, state, params, case, t_next)?;
    let mut x = state.pack(l, asm.n);
    for &(r, v) in &sys.fixed {
        x[r] = v;
    }
    asm.rhs_norm = norm2(&sys.rhs);
    let target = params.newton_tol * (1.0 + asm.rhs_norm);
    let (mut f, mut jc) = residual(&sys, &x, &state.phi, case, params, l);
    let mut fnorm = norm2(&f);
    let mut iters = 0;
    while fnorm > target {
        if iters == params.newton_max {
            return Err(SchemeError::NonConvergence { iterations: iters, residual: fnorm });
        }
        iters += 1;
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut jac = sys.matrix.clone();
        jac.add_block_in_pattern(&jc, l.omega, l.phi, 1.0)?;
        let reused = if params.reuse_jacobian {
            // inexact update: the stopping test is on the full residual
            let forcing = (0.1 * target / fnorm).clamp(REUSE_FORCING, 0.1).max(params.lin_tol);
            solver.solve_preconditioned(&jac, &neg, forcing, REUSE_MAX_KRYLOV)?
        } else {
            None
        };
        let dx = match reused {
            Some(dx) => dx,
            None => solver.solve(&jac, &neg, params.lin_tol)?,
        };
        let mut alpha = 1.0;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
            let (tf, tj) = residual(&sys, &trial, &state.phi, case, params, l);
            let tn = norm2(&tf);
            if tn <= fnorm || halvings == 5 {
                x = trial;
                f = tf;
                jc = tj;
                fnorm = tn;
                break;
            }
            alpha *= 0.5;
            halvings += 1;
        }
    }
    let mut new = StateFields::unpack(&x, l, t_next, k);
    subtract_mean(&case.spaces.pressure, &mut new.p);
    Ok(StepResult { state: new, newton_iters: iters.max(1), residual: fnorm })
}

/// Per-step record handed to the observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub energy: EnergyReport,
    pub mass: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: StateFields,
    /// Step 0 (initial state) followed by one record per step.
    pub series: Vec<StepRecord>,
}

fn record(case: &ProblemCase, params: &SchemeParams, st: &StateFields, iters: usize) -> StepRecord {
    StepRecord {
        step: st.k,
        time: st.t,
        energy: energy(&case.spaces, st, params),
        mass: total_mass(&case.spaces.scalar, &st.phi),
        newton_iters: iters,
    }
}

/// Run `K = round(T / dt)` steps from the initial state, calling
/// `observer(state, record)` for the initial state and after every step.
pub fn run<F>(case: &ProblemCase, params: &SchemeParams, mut observer: F) -> Result<RunOutput, SchemeError>
where
    F: FnMut(&StateFields, &StepRecord),
{
    let mut state = initialize(case, params)?;
    run_from(case, params, &mut state, &mut observer)
}

/// Like [`run`] but starting from a given state.
pub fn run_from<F>(case: &ProblemCase, params: &SchemeParams, state: &mut StateFields, observer: &mut F) -> Result<RunOutput, SchemeError>
where
    F: FnMut(&StateFields, &StepRecord),
{
    params.validate()?;
    case.bcs.validate(case.spaces.mesh())?;
    let mut asm = StepAssembler::new(case, params);
    let mut solver = DirectSolver::new();
    let first = record(case, params, state, 0);
    observer(state, &first);
    let mut series = vec![first];
    for step in 0..params.n_steps() {
        let r = newton_solve_step(&mut asm, &mut solver, state, params, case)
            .map_err(|e| SchemeError::Step { step: step + 1, source: Box::new(e) })?;
        *state = r.state;
        let rec = record(case, params, state, r.newton_iters);
        observer(state, &rec);
        series.push(rec);
    }
    Ok(RunOutput { state: state.clone(), series })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(dt: f64, t: f64) -> SchemeParams {
        SchemeParams { dt, t_final: t, ..Default::default() }
    }

    #[test]
    fn system_size_bookkeeping() {
        let sp = Spaces::new(Arc::new(Mesh::structured(4, false).unwrap()), Pairing::Mini);
        let (ns, nu, nb) = (25, 2 * (25 + 32), 2 * 25);
        assert_eq!(sp.system_size(), 3 * ns + nu + nb + 1);
    }

    #[test]
    fn zero_problem_stays_zero() {
        let mut case = ProblemCase::spinodal(4, Pairing::Mini, 0).unwrap();
        case.initial = InitialData::Zero;
        let p = params(0.1, 0.1);
        let out = run(&case, &p, |_, _| {}).unwrap();
        let s = &out.state;
        assert_eq!(out.series[1].newton_iters, 1);
        for v in [&s.phi, &s.omega, &s.u, &s.p, &s.b] {
            assert!(v.iter().all(|x| x.abs() < 1e-14));
        }
    }

    #[test]
    fn spinodal_noise_is_reproducible_with_fixed_mean() {
        let case = ProblemCase::spinodal(8, Pairing::Mini, 42).unwrap();
        let a = spinodal_noise(&case.spaces.scalar, 42);
        let b = spinodal_noise(&case.spaces.scalar, 42);
        assert_eq!(a, b);
        assert_ne!(a, spinodal_noise(&case.spaces.scalar, 43));
        assert!((total_mass(&case.spaces.scalar, &a) + 0.05).abs() < 1e-12);
        assert!(a.iter().all(|v| (v + 0.05).abs() <= 0.002));
    }

    #[test]
    fn manufactured_step_conserves_mass_and_divergence() {
        let p = SchemeParams { dt: 1.0 / 64.0, t_final: 3.0 / 64.0, ..Default::default() };
        let case = ProblemCase::manufactured(8, Pairing::Mini, &p).unwrap();
        let div = assemble_div_coupling(&case.spaces.velocity, &case.spaces.pressure).matrix;
        let mut masses = Vec::new();
        let out = run(&case, &p, |st, rec| {
            masses.push(rec.mass);
            assert!(rec.newton_iters <= 5);
            if rec.step == 0 {
                // the projected initial velocity is not discretely solenoidal
                return;
            }
            let bu = div.matvec(&st.u);
            assert!(norm2(&bu) < 1e-9, "div {}", norm2(&bu));
        })
        .unwrap();
        // the forcing carries mass in and out, so only finiteness is checked here
        assert!(masses.iter().all(|m| m.is_finite()));
        assert_eq!(out.series.len(), 4);
        let mean: f64 = total_mass(&case.spaces.scalar, &out.state.p);
        assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn initial_manufactured_phi_is_second_order() {
        let mut errs = Vec::new();
        for n in [8, 16] {
            let p = SchemeParams::default();
            let case = ProblemCase::manufactured(n, Pairing::Mini, &p).unwrap();
            let st = initialize(&case, &p).unwrap();
            let ex = case.exact.unwrap();
            errs.push(crate::diagnostics::l2_error(&case.spaces.scalar, &st.phi, |x| vec![ex.phi(x, 0.0)]));
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!(rate > 1.7, "rate {rate}");
    }

    #[test]
    fn spinodal_mass_and_energy() {
        let case = ProblemCase::spinodal(8, Pairing::Mini, 7).unwrap();
        let p = SchemeParams { gamma: 0.05, lambda: 0.05, dt: 0.01, t_final: 0.1, ..Default::default() };
        let out = run(&case, &p, |_, _| {}).unwrap();
        let m0 = out.series[0].mass;
        for w in out.series.windows(2) {
            assert!((w[1].mass - m0).abs() <= 1e-10 * m0.abs().max(1.0));
            assert!(w[1].energy.energy <= w[0].energy.energy + 1e-9);
        }
    }

    #[test]
    fn kelvin_helmholtz_setup() {
        let case = ProblemCase::kelvin_helmholtz(8, Pairing::Mini, 1).unwrap();
        let p = SchemeParams { gamma: 0.05, mobility: 0.01, nu: 0.01, lambda: 0.01, dt: 0.01, t_final: 0.03, ..Default::default() };
        let out = run(&case, &p, |_, rec| assert!(rec.newton_iters <= 8)).unwrap();
        let m0 = out.series[0].mass;
        assert!(out.series.iter().all(|r| (r.mass - m0).abs() < 1e-9));
        // wall data imposed from the first step on
        let b = &out.state.b;
        let ns = case.spaces.magnetic.n_scalar();
        for d in case.spaces.magnetic.boundary_dofs(Side::Top, 0) {
            assert!((b[d] + 1.0).abs() < 1e-12 && b[ns + d].abs() < 1e-12);
        }
    }

    #[test]
    fn bc_validation() {
        let mut case = ProblemCase::spinodal(4, Pairing::Mini, 0).unwrap();
        case.bcs.u[0] = Bc::PeriodicX;
        assert!(matches!(case.bcs.validate(case.spaces.mesh()), Err(SchemeError::Bc(_))));
    }

    #[test]
    fn newton_max_exhaustion_reports_nonconvergence() {
        let p = SchemeParams { dt: 0.01, t_final: 0.01, newton_max: 1, newton_tol: 1e-300, ..Default::default() };
        let case = ProblemCase::spinodal(4, Pairing::Mini, 1).unwrap();
        let err = run(&case, &p, |_, _| {}).unwrap_err();
        match err {
            SchemeError::Step { step, source } => {
                assert_eq!(step, 1);
                assert!(matches!(*source, SchemeError::NonConvergence { iterations: 1, .. }));
            }
            e => panic!("unexpected {e}"),
        }
    }
}
