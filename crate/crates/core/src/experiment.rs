//! Two-circle reconstruction experiment: target level set, target state,
//! initial design and diagnostics of recovered domains.

use petgraph::unionfind::UnionFind;

use crate::error::Result;
use crate::fem::{solve, Problem, ProblemParams};
use crate::levelset::negative_moments;
use crate::mesh::{generate_crossed_mesh, Mesh};

/// Centres and radii of the two target circles.
pub const TARGET_CIRCLES: [([f64; 2], f64); 2] = [([0.3, 0.4], 0.2), ([0.7, 0.7], 0.1)];

/// `φ̄_d`, negative inside either circle.
pub fn target_level_set(x: f64, y: f64) -> f64 {
    TARGET_CIRCLES
        .iter()
        .map(|&([cx, cy], r)| (x - cx).powi(2) + (y - cy).powi(2) - r * r)
        .product()
}

/// Nodal interpolant of `φ̄_d`.
pub fn target_phi(mesh: &Mesh) -> Vec<f64> {
    mesh.interpolate(target_level_set)
}

/// Problem whose target state `û` is the state at the interpolated `φ̄_d`.
pub fn target_problem(mesh: &Mesh, params: ProblemParams) -> Result<(Problem, Vec<f64>)> {
    let base = Problem::new(mesh, params)?;
    let phi_d = target_phi(mesh);
    let sol = solve(&base, &phi_d)?;
    Ok((base.with_target(sol.u)?, phi_d))
}

/// L² norm of the level set used for verification.
pub const VERIFICATION_SCALE: f64 = 100.0;

/// Problem and level set used to verify the derivative.
///
/// At `φ_d` with `û = u(φ_d)` every derivative vanishes identically, so
/// the target is taken as the state of the empty design instead. The
/// derivative is evaluated at `VERIFICATION_SCALE · φ_d / ‖φ_d‖`; since it is
/// invariant under scaling of `φ`, the scale only fixes the unit in which
/// perturbation steps are measured.
pub fn verification_problem(mesh: &Mesh, params: ProblemParams) -> Result<(Problem, Vec<f64>)> {
    let base = Problem::new(mesh, params)?;
    let empty = vec![1.0; mesh.num_nodes()];
    let sol = solve(&base, &empty)?;
    let phi = target_phi(mesh);
    let norm = crate::optimize::l2_norm(mesh, &phi);
    let s = VERIFICATION_SCALE / norm;
    Ok((base.with_target(sol.u)?, phi.iter().map(|v| s * v).collect()))
}

/// Default verification case: `n = 8` mesh with the default parameters.
pub fn default_verification() -> Result<(Problem, Vec<f64>)> {
    verification_problem(&generate_crossed_mesh(8), ProblemParams::default())
}

/// Initial design `φ₀ = 1/‖1‖` (empty domain).
pub fn initial_phi(mesh: &Mesh) -> Vec<f64> {
    let one = vec![1.0; mesh.num_nodes()];
    let norm = crate::optimize::l2_norm(mesh, &one);
    one.iter().map(|v| v / norm).collect()
}

/// Connected part of `Ω = {φ < 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub elements: Vec<usize>,
    pub area: f64,
    pub centroid: [f64; 2],
}

/// Splits `Ω` into edge-connected components of cut or interior elements.
///
/// Two elements belong to the same component when they share an edge with
/// a negative endpoint.
pub fn components(mesh: &Mesh, phi: &[f64]) -> Result<Vec<Component>> {
    let ne = mesh.num_elements();
    let mut parts = Vec::with_capacity(ne);
    for l in 0..ne {
        let [a, b, c] = mesh.element(l);
        parts.push(negative_moments([phi[a], phi[b], phi[c]], l)?);
    }
    let mut uf = UnionFind::<usize>::new(ne);
    for k in 0..mesh.num_nodes() {
        if phi[k] >= 0.0 {
            continue;
        }
        let elems: Vec<usize> = mesh
            .node_elements(k)
            .iter()
            .copied()
            .filter(|&l| parts[l].area > 0.0)
            .collect();
        for w in elems.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Component> = Default::default();
    for l in 0..ne {
        let m = &parts[l];
        if m.area <= 0.0 {
            continue;
        }
        let ad = mesh.det_jacobian(l).abs();
        let pts = mesh.element_points(l);
        let entry = by_root.entry(uf.find(l)).or_insert(Component {
            elements: Vec::new(),
            area: 0.0,
            centroid: [0.0; 2],
        });
        entry.elements.push(l);
        entry.area += ad * m.area;
        for i in 0..3 {
            entry.centroid[0] += ad * m.first[i] * pts[i][0];
            entry.centroid[1] += ad * m.first[i] * pts[i][1];
        }
    }
    let mut out: Vec<Component> = by_root.into_values().collect();
    for c in &mut out {
        c.centroid = [c.centroid[0] / c.area, c.centroid[1] / c.area];
    }
    out.sort_by(|a, b| b.area.total_cmp(&a.area));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_components_near_circle_centres() {
        let mesh = generate_crossed_mesh(32);
        let comps = components(&mesh, &target_phi(&mesh)).unwrap();
        assert_eq!(comps.len(), 2);
        for (c, &(centre, r)) in comps.iter().zip(&TARGET_CIRCLES) {
            assert!((c.centroid[0] - centre[0]).hypot(c.centroid[1] - centre[1]) < 0.01);
            let exact = std::f64::consts::PI * r * r;
            assert!((c.area - exact).abs() < 0.05 * exact);
        }
    }

    #[test]
    fn empty_design_has_no_components() {
        let mesh = generate_crossed_mesh(4);
        assert!(components(&mesh, &initial_phi(&mesh)).unwrap().is_empty());
        assert!((crate::optimize::l2_norm(&mesh, &initial_phi(&mesh)) - 1.0).abs() < 1e-14);
    }
}
