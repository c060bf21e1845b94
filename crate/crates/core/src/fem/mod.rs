//! P1 finite elements for `−div(λ_Ω ∇u) + α_Ω u = f_Ω` with mixed
//! boundary conditions, using exact cut-element integration of the
//! piecewise-constant coefficients.
//!
//! Assembly and solves are generic over [`Scalar`], so the reduced
//! objective `φ ↦ J(φ, u(φ))` can be evaluated with complex or hyper-dual
//! level-set values.

pub mod skyline;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::levelset::{negative_moments, NegativeMoments};
use crate::mesh::{BoundaryData, Mesh};
use crate::scalar::Scalar;
use skyline::{LdlFactor, Profile, SkylineMatrix};

/// Material constants, cost weights, boundary data and tracking target.
///
/// Index 1 refers to the design domain `Ω = {φ < 0}`, index 2 to its
/// complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub atilde1: f64,
    pub atilde2: f64,
    pub f1: f64,
    pub f2: f64,
    pub c1: f64,
    pub c2: f64,
    pub boundary: BoundaryData,
    /// Nodal target state. Empty means `û = 0`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub uhat: Vec<f64>,
}

impl Default for ProblemParams {
    fn default() -> Self {
        ProblemParams {
            lambda1: 1.0,
            lambda2: 0.6,
            alpha1: 1.0,
            alpha2: 0.2,
            atilde1: 1.0,
            atilde2: 0.9,
            f1: 1.0,
            f2: 0.5,
            c1: 0.0,
            c2: 1.0,
            boundary: BoundaryData::default(),
            uhat: Vec::new(),
        }
    }
}

impl ProblemParams {
    pub fn delta_lambda(&self) -> f64 {
        self.lambda1 - self.lambda2
    }

    pub fn delta_alpha(&self) -> f64 {
        self.alpha1 - self.alpha2
    }

    pub fn delta_atilde(&self) -> f64 {
        self.atilde1 - self.atilde2
    }

    pub fn delta_f(&self) -> f64 {
        self.f1 - self.f2
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("atilde1", self.atilde1),
            ("atilde2", self.atilde2),
            ("f1", self.f1),
            ("f2", self.f2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("boundary.neumann", self.boundary.neumann),
            ("boundary.dirichlet.constant", self.boundary.dirichlet.constant),
            ("boundary.dirichlet.x_coeff", self.boundary.dirichlet.x_coeff),
            ("boundary.dirichlet.y_coeff", self.boundary.dirichlet.y_coeff),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if v <= 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("atilde1", self.atilde1),
            ("atilde2", self.atilde2),
            ("c1", self.c1),
            ("c2", self.c2),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.uhat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("uhat must be finite".into()));
        }
        Ok(())
    }
}

/// Physical-element data that does not depend on the level set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub det: f64,
    /// Physical gradients `J⁻ᵀ∇_ξψ_i` of the three hat functions.
    pub grads: [[f64; 2]; 3],
    /// `k0[i][j] = ∇ψ_j · ∇ψ_i`.
    pub k0: [[f64; 3]; 3],
}

impl ElementGeometry {
    pub fn abs_det(&self) -> f64 {
        self.det.abs()
    }

    /// Constant gradient of the interpolant of nodal values `v`.
    pub fn gradient(&self, v: [f64; 3]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for i in 0..3 {
            g[0] += v[i] * self.grads[i][0];
            g[1] += v[i] * self.grads[i][1];
        }
        g
    }
}

pub fn element_geometry(mesh: &Mesh, l: usize) -> Result<ElementGeometry> {
    let [p1, p2, p3] = mesh.element_points(l);
    let (a, b) = (p2[0] - p1[0], p3[0] - p1[0]);
    let (c, d) = (p2[1] - p1[1], p3[1] - p1[1]);
    let det = a * d - b * c;
    if !(det > 0.0) {
        return Err(Error::SingularElement { element: l, det });
    }
    let reference = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let mut grads = [[0.0; 2]; 3];
    for (g, r) in grads.iter_mut().zip(reference) {
        g[0] = (d * r[0] - c * r[1]) / det;
        g[1] = (-b * r[0] + a * r[1]) / det;
    }
    let mut k0 = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k0[i][j] = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
        }
    }
    Ok(ElementGeometry { det, grads, k0 })
}

/// Numbering of the free (non-Dirichlet) nodes and the matching skyline
/// profile. Free nodes are ordered by `(y, x)`, which keeps the bandwidth
/// at about two lattice rows on the crossed mesh.
#[derive(Debug, Clone)]
pub struct DofLayout {
    position: Vec<Option<usize>>,
    free: Vec<usize>,
    profile: Profile,
}

impl DofLayout {
    pub fn new(mesh: &Mesh) -> DofLayout {
        let mut free: Vec<usize> = (0..mesh.num_nodes()).filter(|&k| !mesh.is_dirichlet(k)).collect();
        free.sort_by(|&a, &b| {
            let (pa, pb) = (mesh.node(a), mesh.node(b));
            pa[1].total_cmp(&pb[1]).then(pa[0].total_cmp(&pb[0]))
        });
        let mut position = vec![None; mesh.num_nodes()];
        for (i, &k) in free.iter().enumerate() {
            position[k] = Some(i);
        }
        let mut first: Vec<usize> = (0..free.len()).collect();
        for tri in mesh.elements() {
            let idx: Vec<usize> = tri.iter().filter_map(|&v| position[v]).collect();
            if let Some(&lo) = idx.iter().min() {
                for &i in &idx {
                    first[i] = first[i].min(lo);
                }
            }
        }
        DofLayout {
            position,
            free,
            profile: Profile::new(first),
        }
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    /// Position of node `k` in the free numbering, `None` on Dirichlet nodes.
    pub fn position(&self, k: usize) -> Option<usize> {
        self.position[k]
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }
}

/// A tagged mesh together with parameters, target state and the cached
/// level-set independent data.
#[derive(Debug, Clone)]
pub struct Problem {
    mesh: Mesh,
    params: ProblemParams,
    uhat: Vec<f64>,
    geometry: Vec<ElementGeometry>,
    layout: DofLayout,
    dirichlet_values: Vec<f64>,
}

impl Problem {
    /// Tags the boundary of `mesh` with `params.boundary` and precomputes
    /// element geometry and the solver layout.
    pub fn new(mesh: &Mesh, params: ProblemParams) -> Result<Problem> {
        params.validate()?;
        let mesh = mesh.tag_boundary(&params.boundary);
        let uhat = if params.uhat.is_empty() {
            vec![0.0; mesh.num_nodes()]
        } else {
            check_len(mesh.num_nodes(), params.uhat.len())?;
            params.uhat.clone()
        };
        let geometry = (0..mesh.num_elements())
            .map(|l| element_geometry(&mesh, l))
            .collect::<Result<Vec<_>>>()?;
        if mesh.num_dirichlet() == 0 {
            return Err(Error::InvalidParams("the Dirichlet boundary is empty".into()));
        }
        let layout = DofLayout::new(&mesh);
        let dirichlet_values = (0..mesh.num_nodes())
            .map(|k| {
                if mesh.is_dirichlet(k) {
                    params.boundary.dirichlet_value(mesh.node(k))
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Problem {
            mesh,
            params,
            uhat,
            geometry,
            layout,
            dirichlet_values,
        })
    }

    /// Same problem with a different tracking target.
    pub fn with_target(&self, uhat: Vec<f64>) -> Result<Problem> {
        check_len(self.mesh.num_nodes(), uhat.len())?;
        let mut out = self.clone();
        out.params.uhat = uhat.clone();
        out.uhat = uhat;
        Ok(out)
    }

    /// Same problem with different parameters on the same mesh.
    pub fn with_params(&self, params: ProblemParams) -> Result<Problem> {
        Problem::new(&self.mesh, params)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn uhat(&self) -> &[f64] {
        &self.uhat
    }

    pub fn geometry(&self, l: usize) -> &ElementGeometry {
        &self.geometry[l]
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    /// `g_D` on Dirichlet nodes, zero elsewhere.
    pub fn dirichlet_values(&self) -> &[f64] {
        &self.dirichlet_values
    }
}

/// Element matrices and load for given negative-part moments.
#[derive(Debug, Clone, Copy)]
pub struct LocalSystem<S> {
    pub stiffness: [[S; 3]; 3],
    pub mass: [[S; 3]; 3],
    pub tracking: [[S; 3]; 3],
    pub load: [S; 3],
    pub area_negative: S,
}

pub fn local_system<S: Scalar>(geo: &ElementGeometry, params: &ProblemParams, m: &NegativeMoments<S>) -> LocalSystem<S> {
    let ad = geo.abs_det();
    let full = NegativeMoments::<f64>::full();
    let area_negative = m.area.scale(ad);
    let stiff_coeff = S::from_real(params.lambda2 * 0.5 * ad) + area_negative.scale(params.delta_lambda());
    let mut stiffness = [[S::zero(); 3]; 3];
    let mut mass = [[S::zero(); 3]; 3];
    let mut tracking = [[S::zero(); 3]; 3];
    let mut load = [S::zero(); 3];
    for i in 0..3 {
        load[i] = S::from_real(params.f2 * ad * full.first[i]) + m.first[i].scale(params.delta_f() * ad);
        for j in 0..3 {
            stiffness[i][j] = stiff_coeff.scale(geo.k0[i][j]);
            mass[i][j] = S::from_real(params.alpha2 * ad * full.second[i][j]) + m.second[i][j].scale(params.delta_alpha() * ad);
            tracking[i][j] =
                S::from_real(params.atilde2 * ad * full.second[i][j]) + m.second[i][j].scale(params.delta_atilde() * ad);
        }
    }
    LocalSystem {
        stiffness,
        mass,
        tracking,
        load,
        area_negative,
    }
}

/// Reduced system on the free nodes with Dirichlet data eliminated.
#[derive(Debug, Clone)]
pub struct AssembledSystem<S> {
    pub matrix: SkylineMatrix<S>,
    /// Right-hand side in free-node ordering.
    pub rhs: Vec<S>,
    /// Per-element tracking mass `M̃_l`.
    pub tracking: Vec<[[S; 3]; 3]>,
    /// `|Ω(φ)|`.
    pub area: S,
}

pub fn assemble<S: Scalar>(problem: &Problem, phi: &[S]) -> Result<AssembledSystem<S>> {
    let mesh = &problem.mesh;
    check_len(mesh.num_nodes(), phi.len())?;
    let layout = &problem.layout;
    let g = &problem.dirichlet_values;
    let mut matrix = SkylineMatrix::zeros(layout.profile.clone());
    let mut rhs = vec![S::zero(); layout.num_free()];
    let mut tracking = Vec::with_capacity(mesh.num_elements());
    let mut area = S::zero();
    for (l, tri) in mesh.elements().iter().enumerate() {
        let vals = [phi[tri[0]], phi[tri[1]], phi[tri[2]]];
        let m = negative_moments(vals, l)?;
        let loc = local_system(&problem.geometry[l], &problem.params, &m);
        area += loc.area_negative;
        for a in 0..3 {
            let Some(i) = layout.position[tri[a]] else { continue };
            rhs[i] += loc.load[a];
            for b in 0..3 {
                let entry = loc.stiffness[a][b] + loc.mass[a][b];
                match layout.position[tri[b]] {
                    Some(j) if j <= i => matrix.add(i, j, entry),
                    Some(_) => {}
                    None => rhs[i] -= entry.scale(g[tri[b]]),
                }
            }
        }
        tracking.push(loc.tracking);
    }
    let gn = problem.params.boundary.neumann;
    if gn != 0.0 {
        for &[a, b] in mesh.neumann_edges() {
            let (pa, pb) = (mesh.node(a), mesh.node(b));
            let half = 0.5 * gn * (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
            for v in [a, b] {
                if let Some(i) = layout.position[v] {
                    rhs[i] += S::from_real(half);
                }
            }
        }
    }
    Ok(AssembledSystem {
        matrix,
        rhs,
        tracking,
        area,
    })
}

fn scatter<S: Scalar>(problem: &Problem, free: &[S], dirichlet: impl Fn(usize) -> S) -> Vec<S> {
    (0..problem.mesh.num_nodes())
        .map(|k| match problem.layout.position[k] {
            Some(i) => free[i],
            None => dirichlet(k),
        })
        .collect()
}

/// `M̃ v` for a nodal vector `v`, from the per-element tracking matrices.
pub fn tracking_apply<S: Scalar>(problem: &Problem, system: &AssembledSystem<S>, v: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); v.len()];
    for (tri, mt) in problem.mesh.elements().iter().zip(&system.tracking) {
        for a in 0..3 {
            for b in 0..3 {
                out[tri[a]] += mt[a][b] * v[tri[b]];
            }
        }
    }
    out
}

fn residual_from<S: Scalar>(problem: &Problem, u: &[S]) -> Vec<S> {
    u.iter()
        .zip(&problem.uhat)
        .map(|(&a, &b)| a - S::from_real(b))
        .collect()
}

fn adjoint_rhs<S: Scalar>(problem: &Problem, system: &AssembledSystem<S>, u: &[S]) -> Vec<S> {
    let r = residual_from(problem, u);
    let mr = tracking_apply(problem, system, &r);
    let c = -2.0 * problem.params.c2;
    problem
        .layout
        .free
        .iter()
        .map(|&k| mr[k].scale(c))
        .collect()
}

/// State `u` with `A u = f` on free nodes and `u = g_D` on Dirichlet nodes.
pub fn solve_state<S: Scalar>(problem: &Problem, system: &AssembledSystem<S>) -> Result<Vec<S>> {
    let factor = system.matrix.clone().factor()?;
    Ok(state_from(problem, system, &factor))
}

fn state_from<S: Scalar>(problem: &Problem, system: &AssembledSystem<S>, factor: &LdlFactor<S>) -> Vec<S> {
    let free = factor.solve(&system.rhs);
    scatter(problem, &free, |k| S::from_real(problem.dirichlet_values[k]))
}

/// Adjoint `p` with `A p = −2c₂ M̃ (u − û)` and `p = 0` on `Γ_D`.
pub fn solve_adjoint<S: Scalar>(problem: &Problem, system: &AssembledSystem<S>, u: &[S]) -> Result<Vec<S>> {
    check_len(problem.mesh.num_nodes(), u.len())?;
    let factor = system.matrix.clone().factor()?;
    Ok(adjoint_from(problem, system, &factor, u))
}

fn adjoint_from<S: Scalar>(problem: &Problem, system: &AssembledSystem<S>, factor: &LdlFactor<S>, u: &[S]) -> Vec<S> {
    let free = factor.solve(&adjoint_rhs(problem, system, u));
    scatter(problem, &free, |_| S::zero())
}

/// `c₁|Ω(φ)| + c₂ (u − û)ᵀ M̃ (u − û)`.
pub fn objective<S: Scalar>(problem: &Problem, system: &AssembledSystem<S>, u: &[S]) -> S {
    let r = residual_from(problem, u);
    let mr = tracking_apply(problem, system, &r);
    let quad = r.iter().zip(&mr).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
    system.area.scale(problem.params.c1) + quad.scale(problem.params.c2)
}

/// State, adjoint and objective for one level set.
#[derive(Debug, Clone)]
pub struct Solution<S> {
    pub u: Vec<S>,
    pub p: Vec<S>,
    pub objective: S,
    pub area: S,
}

/// Assembles once, factors once and solves state and adjoint.
pub fn solve<S: Scalar>(problem: &Problem, phi: &[S]) -> Result<Solution<S>> {
    let system = assemble(problem, phi)?;
    let factor = system.matrix.clone().factor()?;
    let u = state_from(problem, &system, &factor);
    let p = adjoint_from(problem, &system, &factor, &u);
    let objective = objective(problem, &system, &u);
    Ok(Solution {
        u,
        p,
        objective,
        area: system.area,
    })
}

/// Reduced objective `φ ↦ J(φ, u(φ))` without the adjoint solve.
pub fn reduced_objective<S: Scalar>(problem: &Problem, phi: &[S]) -> Result<S> {
    let system = assemble(problem, phi)?;
    let u = solve_state(problem, &system)?;
    Ok(objective(problem, &system, &u))
}
