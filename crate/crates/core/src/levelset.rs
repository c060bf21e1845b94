//! Level-set geometry on a P1 mesh.
//!
//! The design domain is `Ω(φ) = {φ < 0}` for the piecewise-linear
//! interpolant of the nodal values. Everything that feeds the objective
//! (node classes, cut configurations, exact subdomain moments) is generic
//! over [`Scalar`] so the same code runs for real, complex-step and
//! hyper-dual evaluation. Zero nodal values count as non-negative.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mesh::{Mesh, Point};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    /// Every one-ring value is `≤ 0`.
    TMinus,
    /// Every one-ring value is `≥ 0` (and at least one is positive).
    TPlus,
    /// Mixed one-ring: the node sits at the interface.
    Shape,
}

impl NodeClass {
    pub fn is_topological(self) -> bool {
        !matches!(self, NodeClass::Shape)
    }

    /// Integer code used in exported fields: -1, +1, 0.
    pub fn code(self) -> i32 {
        match self {
            NodeClass::TMinus => -1,
            NodeClass::TPlus => 1,
            NodeClass::Shape => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeClass::TMinus => "T-",
            NodeClass::TPlus => "T+",
            NodeClass::Shape => "S",
        }
    }

    /// Perturbation operator that probes this node.
    pub fn perturbation(self) -> PerturbationKind {
        match self {
            NodeClass::TMinus => PerturbationKind::TopoPlus,
            NodeClass::TPlus => PerturbationKind::TopoMinus,
            NodeClass::Shape => PerturbationKind::Shape,
        }
    }

    /// Power of the perturbation size in the area change: 2 for topological
    /// nodes, 1 for shape nodes.
    pub fn order(self) -> i32 {
        if self.is_topological() {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeClassification {
    pub labels: Vec<NodeClass>,
}

impl NodeClassification {
    /// `(|T⁻|, |T⁺|, |S|)`
    pub fn counts(&self) -> (usize, usize, usize) {
        self.labels.iter().fold((0, 0, 0), |(a, b, c), l| match l {
            NodeClass::TMinus => (a + 1, b, c),
            NodeClass::TPlus => (a, b + 1, c),
            NodeClass::Shape => (a, b, c + 1),
        })
    }

    pub fn get(&self, k: usize) -> NodeClass {
        self.labels[k]
    }
}

pub fn classify_node<S: Scalar>(mesh: &Mesh, phi: &[S], k: usize) -> NodeClass {
    let ring = mesh.one_ring(k);
    if ring.iter().all(|&i| phi[i].sign() <= 0) {
        NodeClass::TMinus
    } else if ring.iter().all(|&i| phi[i].sign() >= 0) {
        NodeClass::TPlus
    } else {
        NodeClass::Shape
    }
}

/// Splits the nodes into `T⁻`, `T⁺` and `S`. A node whose one-ring is
/// identically zero is classified `T⁻`.
pub fn classify_nodes<S: Scalar>(mesh: &Mesh, phi: &[S]) -> Result<NodeClassification> {
    check_len(mesh.num_nodes(), phi.len())?;
    Ok(NodeClassification {
        labels: (0..mesh.num_nodes())
            .map(|k| classify_node(mesh, phi, k))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationKind {
    /// Sets the nodal value to `+ε` (nucleates a hole in `Ω`).
    TopoPlus,
    /// Sets the nodal value to `−ε` (nucleates an inclusion).
    TopoMinus,
    /// Adds `ε` to the nodal value.
    Shape,
}

/// Lifts real nodal values into another scalar type.
pub fn lift<S: Scalar>(phi: &[f64]) -> Vec<S> {
    phi.iter().map(|&v| S::from_real(v)).collect()
}

/// Applies a single-node perturbation operator.
pub fn perturb<S: Scalar>(phi: &[S], k: usize, eps: S, kind: PerturbationKind) -> Vec<S> {
    let mut out = phi.to_vec();
    out[k] = match kind {
        PerturbationKind::TopoPlus => eps,
        PerturbationKind::TopoMinus => -eps,
        PerturbationKind::Shape => phi[k] + eps,
    };
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutTag {
    AllNeg,
    AllPos,
    /// `(+,−,−)`
    APlus,
    /// `(−,+,+)`
    AMinus,
    /// `(−,+,−)`
    BPlus,
    /// `(+,−,+)`
    BMinus,
    /// `(−,−,+)`
    CPlus,
    /// `(+,+,−)`
    CMinus,
}

impl CutTag {
    pub fn is_cut(self) -> bool {
        !matches!(self, CutTag::AllNeg | CutTag::AllPos)
    }

    /// True for the `+` variants of A, B and C.
    pub fn is_plus(self) -> bool {
        matches!(self, CutTag::APlus | CutTag::BPlus | CutTag::CPlus)
    }

    /// Tag for a sign pattern given as "is negative" flags in local order.
    pub fn from_negativity(neg: [bool; 3]) -> CutTag {
        match neg {
            [true, true, true] => CutTag::AllNeg,
            [false, false, false] => CutTag::AllPos,
            [false, true, true] => CutTag::APlus,
            [true, false, false] => CutTag::AMinus,
            [true, false, true] => CutTag::BPlus,
            [false, true, false] => CutTag::BMinus,
            [true, true, false] => CutTag::CPlus,
            [false, false, true] => CutTag::CMinus,
        }
    }
}

/// Cut configuration of one element as seen from a pivot node.
///
/// `rotation` is the local index of the pivot in the element's own vertex
/// order; local position `i` of the rotated element is original position
/// `(rotation + i) % 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutConfig {
    pub tag: CutTag,
    pub rotation: usize,
}

/// Cyclic shift that moves local index `pivot` to the front while keeping
/// the counter-clockwise order.
pub fn rotate<T: Copy>(values: [T; 3], pivot: usize) -> [T; 3] {
    [
        values[pivot % 3],
        values[(pivot + 1) % 3],
        values[(pivot + 2) % 3],
    ]
}

pub fn classify_element<S: Scalar>(values: [S; 3], pivot: usize) -> CutConfig {
    let r = rotate(values, pivot);
    CutConfig {
        tag: CutTag::from_negativity([r[0].is_negative(), r[1].is_negative(), r[2].is_negative()]),
        rotation: pivot % 3,
    }
}

/// Exact integrals over the negative part of the reference triangle:
/// area, `∫ψ_i` and `∫ψ_iψ_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeMoments<S> {
    pub area: S,
    pub first: [S; 3],
    pub second: [[S; 3]; 3],
}

impl<S: Scalar> NegativeMoments<S> {
    pub fn zero() -> Self {
        NegativeMoments {
            area: S::zero(),
            first: [S::zero(); 3],
            second: [[S::zero(); 3]; 3],
        }
    }

    /// Moments of the whole reference triangle.
    pub fn full() -> Self {
        let mut second = [[S::from_real(1.0 / 24.0); 3]; 3];
        for (i, row) in second.iter_mut().enumerate() {
            row[i] = S::from_real(1.0 / 12.0);
        }
        NegativeMoments {
            area: S::from_real(0.5),
            first: [S::from_real(1.0 / 6.0); 3],
            second,
        }
    }

    fn sub(self, o: Self) -> Self {
        let mut out = self;
        out.area -= o.area;
        for i in 0..3 {
            out.first[i] -= o.first[i];
            for j in 0..3 {
                out.second[i][j] -= o.second[i][j];
            }
        }
        out
    }
}

/// Moments of the corner triangle at local vertex `a`, cut off at
/// fractions `tb` along edge `a→a+1` and `tc` along edge `a→a+2`.
fn corner_moments<S: Scalar>(a: usize, tb: S, tc: S) -> NegativeMoments<S> {
    let b = (a + 1) % 3;
    let c = (a + 2) % 3;
    // barycentric coordinates of the three corner-triangle vertices
    let mut bary = [[S::zero(); 3]; 3];
    bary[0][a] = S::one();
    bary[1][a] = S::one() - tb;
    bary[1][b] = tb;
    bary[2][a] = S::one() - tc;
    bary[2][c] = tc;

    let area = (tb * tc).scale(0.5);
    let mut sums = [S::zero(); 3];
    for v in &bary {
        for i in 0..3 {
            sums[i] += v[i];
        }
    }
    let mut first = [S::zero(); 3];
    let mut second = [[S::zero(); 3]; 3];
    let a3 = area.scale(1.0 / 3.0);
    let a12 = area.scale(1.0 / 12.0);
    for i in 0..3 {
        first[i] = a3 * sums[i];
        for j in i..3 {
            let mut s = sums[i] * sums[j];
            for v in &bary {
                s += v[i] * v[j];
            }
            second[i][j] = a12 * s;
            second[j][i] = second[i][j];
        }
    }
    NegativeMoments {
        area,
        first,
        second,
    }
}

fn ratio<S: Scalar>(num: S, den: S, element: usize) -> Result<S> {
    if den.re() == 0.0 {
        return Err(Error::DegenerateCut { element });
    }
    Ok(num / den)
}

/// Exact moments of `{φ < 0}` on the reference triangle for nodal values
/// `values` (rational in the values, hence differentiable through any
/// [`Scalar`]). `element` only labels errors.
pub fn negative_moments<S: Scalar>(values: [S; 3], element: usize) -> Result<NegativeMoments<S>> {
    let neg = [
        values[0].is_negative(),
        values[1].is_negative(),
        values[2].is_negative(),
    ];
    let n_neg = neg.iter().filter(|&&x| x).count();
    match n_neg {
        0 => return Ok(NegativeMoments::zero()),
        3 => return Ok(NegativeMoments::full()),
        _ => {}
    }
    // the vertex whose sign differs from the other two
    let a = (0..3)
        .find(|&i| neg[i] != neg[(i + 1) % 3] && neg[i] != neg[(i + 2) % 3])
        .expect("mixed sign pattern has an isolated vertex");
    let b = (a + 1) % 3;
    let c = (a + 2) % 3;
    let tb = ratio(values[a], values[a] - values[b], element)?;
    let tc = ratio(values[a], values[a] - values[c], element)?;
    let corner = corner_moments(a, tb, tc);
    Ok(if neg[a] {
        corner
    } else {
        NegativeMoments::full().sub(corner)
    })
}

fn element_values<S: Scalar>(mesh: &Mesh, phi: &[S], l: usize) -> [S; 3] {
    let [a, b, c] = mesh.element(l);
    [phi[a], phi[b], phi[c]]
}

/// Area of `Ω(φ)` computed element by element from the exact cut geometry.
pub fn subdomain_area<S: Scalar>(mesh: &Mesh, phi: &[S]) -> Result<S> {
    check_len(mesh.num_nodes(), phi.len())?;
    let mut total = S::zero();
    for l in 0..mesh.num_elements() {
        let m = negative_moments(element_values(mesh, phi, l), l)?;
        total += m.area.scale(mesh.det_jacobian(l).abs());
    }
    Ok(total)
}

#[derive(Clone, Copy)]
struct ClipVertex {
    p: Point,
    f: f64,
    g: f64,
}

/// Sutherland–Hodgman clip keeping the part where `key(v) ≤ 0`; linear
/// attributes are interpolated along cut edges.
fn clip(poly: &[ClipVertex], key: impl Fn(&ClipVertex) -> f64) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (kp, kq) = (key(&p), key(&q));
        if kp <= 0.0 {
            out.push(p);
        }
        if (kp < 0.0 && kq > 0.0) || (kp > 0.0 && kq < 0.0) {
            let t = kp / (kp - kq);
            out.push(ClipVertex {
                p: [p.p[0] + t * (q.p[0] - p.p[0]), p.p[1] + t * (q.p[1] - p.p[1])],
                f: p.f + t * (q.f - p.f),
                g: p.g + t * (q.g - p.g),
            });
        }
    }
    out
}

fn polygon_area(poly: &[ClipVertex]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let o = poly[0].p;
    let mut twice = 0.0;
    for i in 1..poly.len() - 1 {
        let a = [poly[i].p[0] - o[0], poly[i].p[1] - o[1]];
        let b = [poly[i + 1].p[0] - o[0], poly[i + 1].p[1] - o[1]];
        twice += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * twice.abs()
}

/// Area of the region where two interpolants disagree in sign on element `l`,
/// by polygon clipping.
pub fn element_symmetric_difference(mesh: &Mesh, phi: &[f64], other: &[f64], l: usize) -> f64 {
    let pts = mesh.element_points(l);
    let ids = mesh.element(l);
    let tri: Vec<ClipVertex> = (0..3)
        .map(|i| ClipVertex {
            p: pts[i],
            f: phi[ids[i]],
            g: other[ids[i]],
        })
        .collect();
    let neg = |x: f64| x < 0.0;
    let fs = [tri[0].f, tri[1].f, tri[2].f];
    let gs = [tri[0].g, tri[1].g, tri[2].g];
    if fs == gs || (fs.map(neg) == gs.map(neg) && (fs.iter().all(|&x| neg(x)) || fs.iter().all(|&x| !neg(x)))) {
        return 0.0;
    }
    // {f < 0, g ≥ 0} and {g < 0, f ≥ 0}
    let a = clip(&clip(&tri, |v| v.f), |v| -v.g);
    let b = clip(&clip(&tri, |v| v.g), |v| -v.f);
    polygon_area(&a) + polygon_area(&b)
}

/// `|Ω(φ) △ Ω(φ′)|` by exact per-element polygon clipping (real only).
pub fn symmetric_difference_area(mesh: &Mesh, phi: &[f64], other: &[f64]) -> Result<f64> {
    check_len(mesh.num_nodes(), phi.len())?;
    check_len(mesh.num_nodes(), other.len())?;
    Ok((0..mesh.num_elements())
        .map(|l| element_symmetric_difference(mesh, phi, other, l))
        .sum())
}

/// `|Ω(φ) △ Ω(φ′)|` restricted to a subset of elements.
pub fn symmetric_difference_on(mesh: &Mesh, phi: &[f64], other: &[f64], elements: &[usize]) -> f64 {
    elements
        .iter()
        .map(|&l| element_symmetric_difference(mesh, phi, other, l))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSegment {
    pub element: usize,
    pub endpoints: [Point; 2],
}

impl InterfaceSegment {
    pub fn length(&self) -> f64 {
        let [a, b] = self.endpoints;
        (b[0] - a[0]).hypot(b[1] - a[1])
    }
}

/// Zero crossing of the interpolant on the edge `p → q`.
pub fn edge_root(p: Point, q: Point, fp: f64, fq: f64) -> Point {
    let t = fp / (fp - fq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Zero-level segment inside element `l`, if the element is cut.
pub fn element_interface(mesh: &Mesh, phi: &[f64], l: usize) -> Option<InterfaceSegment> {
    let pts = mesh.element_points(l);
    let [a, b, c] = mesh.element(l);
    let vals = [phi[a], phi[b], phi[c]];
    let neg = vals.map(|v| v < 0.0);
    let mut ends = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        if neg[i] != neg[j] {
            ends.push(edge_root(pts[i], pts[j], vals[i], vals[j]));
        }
    }
    (ends.len() == 2).then(|| InterfaceSegment {
        element: l,
        endpoints: [ends[0], ends[1]],
    })
}

/// Per cut element, the segment where the interpolant vanishes.
pub fn interface_segments(mesh: &Mesh, phi: &[f64]) -> Result<Vec<InterfaceSegment>> {
    check_len(mesh.num_nodes(), phi.len())?;
    Ok((0..mesh.num_elements())
        .filter_map(|l| element_interface(mesh, phi, l))
        .collect())
}
