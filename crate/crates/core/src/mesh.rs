//! Structured crossed-triangle meshes of the unit square.
//!
//! Each of the `n × n` lattice squares is split into four triangles by its
//! midpoint, which gives `(n+1)² + n²` nodes and `4n²` elements. Lattice
//! nodes are numbered row-major first, followed by the cell centers, also
//! row-major.

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

/// Affine Dirichlet datum `g_D(x, y) = constant + x_coeff·x + y_coeff·y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineFunction {
    pub constant: f64,
    pub x_coeff: f64,
    pub y_coeff: f64,
}

impl AffineFunction {
    pub fn eval(&self, p: Point) -> f64 {
        self.constant + self.x_coeff * p[0] + self.y_coeff * p[1]
    }
}

/// Boundary data: Dirichlet on the sides `y = 0` and `y = 1`, constant
/// Neumann flux on `x = 0` and `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryData {
    pub dirichlet: AffineFunction,
    pub neumann: f64,
}

impl Default for BoundaryData {
    fn default() -> Self {
        BoundaryData {
            dirichlet: AffineFunction {
                constant: 0.0,
                x_coeff: 0.0,
                y_coeff: 1.0,
            },
            neumann: 0.0,
        }
    }
}

impl BoundaryData {
    pub fn dirichlet_value(&self, p: Point) -> f64 {
        self.dirichlet.eval(p)
    }

    /// Membership in the Dirichlet part of the boundary.
    pub fn on_dirichlet_side(p: Point) -> bool {
        p[1] == 0.0 || p[1] == 1.0
    }

    pub fn on_neumann_side(p: Point) -> bool {
        !Self::on_dirichlet_side(p) && (p[0] == 0.0 || p[0] == 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    subdivisions: usize,
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    node_to_elements: Vec<Vec<usize>>,
    one_ring: Vec<Vec<usize>>,
    dirichlet: Vec<bool>,
    neumann_edges: Vec<[usize; 2]>,
    boundary: Option<BoundaryData>,
}

/// Crossed mesh of `[0,1]²` with `n` squares per side.
///
/// # Panics
///
/// Panics if `n == 0`.
pub fn generate_crossed_mesh(n: usize) -> Mesh {
    assert!(n >= 1, "at least one subdivision per side is required");
    let lattice = |i: usize, j: usize| j * (n + 1) + i;
    let n_lattice = (n + 1) * (n + 1);
    let center = |i: usize, j: usize| n_lattice + j * n + i;
    let h = 1.0 / n as f64;
    // exact endpoints so that boundary predicates compare against 0 and 1
    let coord = |i: usize| if i == n { 1.0 } else { i as f64 * h };

    let mut nodes = Vec::with_capacity(n_lattice + n * n);
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([coord(i), coord(j)]);
        }
    }
    for j in 0..n {
        for i in 0..n {
            nodes.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
        }
    }

    let mut elements = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (
                lattice(i, j),
                lattice(i + 1, j),
                lattice(i + 1, j + 1),
                lattice(i, j + 1),
            );
            let m = center(i, j);
            elements.push([a, b, m]);
            elements.push([b, c, m]);
            elements.push([c, d, m]);
            elements.push([d, a, m]);
        }
    }
    Mesh::from_parts(n, nodes, elements)
}

impl Mesh {
    fn from_parts(subdivisions: usize, nodes: Vec<Point>, elements: Vec<[usize; 3]>) -> Mesh {
        let (node_to_elements, one_ring) = build_incidence(nodes.len(), &elements);
        let n_nodes = nodes.len();
        Mesh {
            subdivisions,
            nodes,
            elements,
            node_to_elements,
            one_ring,
            dirichlet: vec![false; n_nodes],
            neumann_edges: Vec::new(),
            boundary: None,
        }
    }

    /// Tags `y ∈ {0,1}` nodes as Dirichlet and boundary edges on `x ∈ {0,1}`
    /// as Neumann.
    pub fn tag_boundary(&self, data: &BoundaryData) -> Mesh {
        let dirichlet = self
            .nodes
            .iter()
            .map(|&p| BoundaryData::on_dirichlet_side(p))
            .collect();
        let n = self.subdivisions;
        let mut neumann_edges = Vec::with_capacity(2 * n);
        for side in [0, n] {
            for j in 0..n {
                neumann_edges.push([j * (n + 1) + side, (j + 1) * (n + 1) + side]);
            }
        }
        Mesh {
            dirichlet,
            neumann_edges,
            boundary: Some(*data),
            ..self.clone()
        }
    }

    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    /// Lattice spacing `1/n`.
    pub fn cell_width(&self) -> f64 {
        1.0 / self.subdivisions as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> Point {
        self.nodes[k]
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn element(&self, l: usize) -> [usize; 3] {
        self.elements[l]
    }

    pub fn element_points(&self, l: usize) -> [Point; 3] {
        let [a, b, c] = self.elements[l];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// `det J_l` with `J_l = [x_{l2} − x_{l1}, x_{l3} − x_{l1}]`.
    pub fn det_jacobian(&self, l: usize) -> f64 {
        let [p1, p2, p3] = self.element_points(l);
        (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1])
    }

    /// Elements incident to node `k`.
    pub fn node_elements(&self, k: usize) -> &[usize] {
        &self.node_to_elements[k]
    }

    /// Node `k` together with all vertices of its incident elements, sorted.
    pub fn one_ring(&self, k: usize) -> &[usize] {
        &self.one_ring[k]
    }

    pub fn is_dirichlet(&self, k: usize) -> bool {
        self.dirichlet[k]
    }

    pub fn dirichlet_flags(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn num_dirichlet(&self) -> usize {
        self.dirichlet.iter().filter(|&&d| d).count()
    }

    pub fn neumann_edges(&self) -> &[[usize; 2]] {
        &self.neumann_edges
    }

    pub fn boundary(&self) -> Option<&BoundaryData> {
        self.boundary.as_ref()
    }

    pub fn is_boundary_node(&self, k: usize) -> bool {
        let [x, y] = self.nodes[k];
        x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|p| f(p[0], p[1])).collect()
    }
}

/// Per-node incident element sets and one-rings.
pub fn build_incidence(num_nodes: usize, elements: &[[usize; 3]]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut node_to_elements = vec![Vec::new(); num_nodes];
    for (l, tri) in elements.iter().enumerate() {
        for &v in tri {
            node_to_elements[v].push(l);
        }
    }
    let one_ring = node_to_elements
        .iter()
        .enumerate()
        .map(|(k, els)| {
            let mut ring: Vec<usize> = std::iter::once(k)
                .chain(els.iter().flat_map(|&l| elements[l]))
                .collect();
            ring.sort_unstable();
            ring.dedup();
            ring
        })
        .collect();
    (node_to_elements, one_ring)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn node_and_element_counts() {
        for (n, nodes) in [(8, 145), (16, 545), (32, 2113), (64, 8321), (128, 33025)] {
            let m = generate_crossed_mesh(n);
            assert_eq!(m.num_nodes(), nodes);
            assert_eq!(m.num_elements(), 4 * n * n);
        }
        let m = generate_crossed_mesh(1);
        assert_eq!((m.num_nodes(), m.num_elements()), (5, 4));
    }

    #[test]
    fn orientation_and_area() {
        for n in [1, 2, 4, 8, 16] {
            let m = generate_crossed_mesh(n);
            let mut total = 0.0;
            for l in 0..m.num_elements() {
                let det = m.det_jacobian(l);
                assert!(det > 0.0);
                total += det / 2.0;
            }
            assert!((total - 1.0).abs() < 1e-12, "n={n}: {total}");
        }
    }

    #[test]
    fn single_cell_incidence() {
        let m = generate_crossed_mesh(1);
        assert_eq!(m.node_elements(4).len(), 4);
        assert_eq!(m.one_ring(4), &[0, 1, 2, 3, 4]);
        for corner in 0..4 {
            assert_eq!(m.node_elements(corner).len(), 2);
        }
    }

    #[test]
    fn corner_of_crossed_cell_touches_two_triangles() {
        // the crossed pattern puts two triangles at every lattice corner
        let m = generate_crossed_mesh(8);
        assert_eq!(m.node_elements(0).len(), 2);
    }

    #[test]
    fn incidence_is_consistent() {
        let m = generate_crossed_mesh(8);
        for k in 0..m.num_nodes() {
            for &l in m.node_elements(k) {
                assert!(m.element(l).contains(&k));
            }
            let ring: BTreeSet<usize> = std::iter::once(k)
                .chain(m.node_elements(k).iter().flat_map(|&l| m.element(l)))
                .collect();
            assert_eq!(ring.into_iter().collect::<Vec<_>>(), m.one_ring(k));
        }
        for (l, tri) in m.elements().iter().enumerate() {
            for &v in tri {
                assert!(m.node_elements(v).contains(&l));
            }
        }
    }

    #[test]
    fn incidence_round_trip_reproduces_elements() {
        let m = generate_crossed_mesh(4);
        let rebuilt: BTreeSet<usize> = (0..m.num_nodes())
            .flat_map(|k| m.node_elements(k).iter().copied())
            .collect();
        assert_eq!(rebuilt.len(), m.num_elements());
        let as_sets: BTreeSet<[usize; 3]> = m
            .elements()
            .iter()
            .map(|t| {
                let mut s = *t;
                s.sort_unstable();
                s
            })
            .collect();
        assert_eq!(as_sets.len(), m.num_elements());
    }

    #[test]
    fn boundary_tags() {
        let data = BoundaryData::default();
        let m = generate_crossed_mesh(8).tag_boundary(&data);
        assert_eq!(m.num_dirichlet(), 18);
        assert_eq!(m.neumann_edges().len(), 16);
        let m1 = generate_crossed_mesh(1).tag_boundary(&data);
        assert_eq!(m1.num_dirichlet(), 4);
        assert_eq!(data.dirichlet_value([0.5, 1.0]), 1.0);

        // every boundary node is Dirichlet or an endpoint of a Neumann edge, not both
        for k in 0..m.num_nodes() {
            if !m.is_boundary_node(k) {
                assert!(!m.is_dirichlet(k));
                continue;
            }
            let on_neumann_interior = BoundaryData::on_neumann_side(m.node(k));
            assert!(m.is_dirichlet(k) ^ on_neumann_interior);
        }
    }
}
