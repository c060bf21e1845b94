//! Closed-form numerical topological-shape derivative.
//!
//! For a node `x_k` the derivative is the limit of the objective change
//! over the symmetric-difference area under the single-node perturbation
//! selected by the node class. All element-local formulas are written for
//! the element rotated so that `x_k` is local vertex 1.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::fem::{ElementGeometry, Problem};
use crate::levelset::{classify_element, classify_node, rotate, CutConfig, CutTag, NodeClass, NodeClassification};
use crate::mesh::{Mesh, Point};

/// Area rate `d_k a_l` of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementAreaRate {
    pub element: usize,
    /// Configuration of the perturbed element seen from `x_k`.
    pub config: CutConfig,
    pub rate: f64,
}

/// `d_k a` and `d_k ã` at one node together with the per-element rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaDerivative {
    pub node: usize,
    pub class: NodeClass,
    pub entries: Vec<ElementAreaRate>,
    /// `d_k a = Σ d_k a_l`
    pub signed: f64,
    /// `d_k ã = Σ |d_k a_l|`
    pub total: f64,
}

fn nonzero(v: f64, node: usize) -> Result<f64> {
    if v == 0.0 || !v.is_finite() {
        Err(Error::DegenerateDenominator { node })
    } else {
        Ok(v)
    }
}

/// Local position of `k` in element `l`.
fn pivot_of(mesh: &Mesh, l: usize, k: usize) -> usize {
    mesh.element(l)
        .iter()
        .position(|&v| v == k)
        .expect("node belongs to its incident element")
}

fn local<T: Copy>(mesh: &Mesh, values: &[T], l: usize) -> [T; 3] {
    let [a, b, c] = mesh.element(l);
    [values[a], values[b], values[c]]
}

/// Shape-node area rate of a cut element with rotated values `r`, scaled
/// by `|det J_l|`.
pub fn shape_area_rate(tag: CutTag, r: [f64; 3], abs_det: f64, node: usize) -> Result<f64> {
    let [a, b, c] = r;
    let v = match tag {
        CutTag::APlus | CutTag::AMinus => {
            let den = nonzero(2.0 * (a - b).powi(2) * (a - c).powi(2), node)?;
            let s = if tag == CutTag::APlus { 1.0 } else { -1.0 };
            s * a * (a * (b + c) - 2.0 * b * c) / den
        }
        CutTag::BPlus | CutTag::BMinus => {
            let den = nonzero((b - c) * (b - a).powi(2), node)?;
            let s = if tag == CutTag::BPlus { -1.0 } else { 1.0 };
            s * 0.5 * b * b / den
        }
        CutTag::CPlus | CutTag::CMinus => {
            let den = nonzero((c - b) * (c - a).powi(2), node)?;
            let s = if tag == CutTag::CPlus { -1.0 } else { 1.0 };
            s * 0.5 * c * c / den
        }
        CutTag::AllNeg | CutTag::AllPos => 0.0,
    };
    Ok(abs_det * v)
}

/// Area derivative at node `k` for the operator matching its class.
///
/// Topological nodes use the unperturbed neighbour values `φ_{l2}, φ_{l3}`
/// of every incident element; shape nodes sum over the cut elements `C_k`.
pub fn area_derivative(problem: &Problem, phi: &[f64], k: usize) -> Result<AreaDerivative> {
    let mesh = problem.mesh();
    check_len(mesh.num_nodes(), phi.len())?;
    let class = classify_node(mesh, phi, k);
    let mut entries = Vec::new();
    for &l in mesh.node_elements(k) {
        let pivot = pivot_of(mesh, l, k);
        let r = rotate(local(mesh, phi, l), pivot);
        let ad = problem.geometry(l).abs_det();
        let (config, rate) = match class {
            NodeClass::TMinus | NodeClass::TPlus => {
                let prod = nonzero(r[1] * r[2], k)?;
                let (tag, s) = if class == NodeClass::TMinus {
                    (CutTag::APlus, -1.0)
                } else {
                    (CutTag::AMinus, 1.0)
                };
                (CutConfig { tag, rotation: pivot }, s * ad / (2.0 * prod))
            }
            NodeClass::Shape => {
                let cfg = classify_element(local(mesh, phi, l), pivot);
                if !cfg.tag.is_cut() {
                    continue;
                }
                (cfg, shape_area_rate(cfg.tag, r, ad, k)?)
            }
        };
        entries.push(ElementAreaRate {
            element: l,
            config,
            rate,
        });
    }
    let signed = entries.iter().map(|e| e.rate).sum();
    let total = entries.iter().map(|e| e.rate.abs()).sum();
    Ok(AreaDerivative {
        node: k,
        class,
        entries,
        signed,
        total,
    })
}

/// Derivative of `|Ω|` with respect to the symmetric-difference area:
/// `d_k a / d_k ã` at every node.
///
/// Nodes whose area rate vanishes (a shape node touching the interface only
/// through zero values) fall back to the sign of their class.
pub fn volume_derivative(problem: &Problem, phi: &[f64]) -> Result<Vec<f64>> {
    (0..problem.mesh().num_nodes())
        .into_par_iter()
        .map(|k| {
            let ad = area_derivative(problem, phi, k)?;
            Ok(if ad.total > 0.0 {
                ad.signed / ad.total
            } else if ad.class == NodeClass::TPlus {
                1.0
            } else {
                -1.0
            })
        })
        .collect()
}

/// `d_k m_l` and `d_k f_l` of a cut element in rotated local order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutElementMatrices {
    pub dm: [[f64; 3]; 3],
    pub df: [f64; 3],
}

/// Derivatives of `∫_{Ω∩τ_l} ψ_iψ_j` and `∫_{Ω∩τ_l} ψ_i` with respect to the
/// value at local vertex 1, for rotated values `r = (φ_{l1}, φ_{l2}, φ_{l3})`.
pub fn cut_matrices(tag: CutTag, r: [f64; 3], abs_det: f64, node: usize) -> Result<CutElementMatrices> {
    let [a, b, c] = r;
    let s = if tag.is_plus() { 1.0 } else { -1.0 };
    let (mut m, mut f) = ([[0.0; 3]; 3], [0.0; 3]);
    match tag {
        CutTag::APlus | CutTag::AMinus => {
            let (ab, ac) = (nonzero(a - b, node)?, nonzero(a - c, node)?);
            let (a2, b2, c2) = (a * a, b * b, c * c);
            m[0][0] = s
                * (a2 * a2 * (b2 * b + b2 * c + b * c2 + c2 * c) - 4.0 * a * b2 * b * c2 * c
                    + 6.0 * a2 * b2 * c2 * (b + c)
                    - 4.0 * a2 * a * b * c * (b2 + b * c + c2))
                / (4.0 * ab.powi(4) * ac.powi(4));
            m[0][1] = -s
                * a2
                * (3.0 * a2 * b2 + 2.0 * a2 * b * c + a2 * c2 - 8.0 * a * b2 * c - 4.0 * a * b * c2 + 6.0 * b2 * c2)
                / (12.0 * ab.powi(4) * ac.powi(3));
            m[0][2] = -s
                * a2
                * (a2 * b2 + 2.0 * a2 * b * c + 3.0 * a2 * c2 - 4.0 * a * b2 * c - 8.0 * a * b * c2 + 6.0 * b2 * c2)
                / (12.0 * ab.powi(3) * ac.powi(4));
            m[1][1] = s * a2 * a * (3.0 * a * b + a * c - 4.0 * b * c) / (12.0 * ab.powi(4) * ac.powi(2));
            m[1][2] = s * a2 * a * (a * b + a * c - 2.0 * b * c) / (12.0 * ab.powi(3) * ac.powi(3));
            m[2][2] = s * a2 * a * (a * b + 3.0 * a * c - 4.0 * b * c) / (12.0 * ab.powi(2) * ac.powi(4));
            f[0] = -s
                * a
                * (a2 * b2 + a2 * b * c + a2 * c2 - 3.0 * a * b2 * c - 3.0 * a * b * c2 + 3.0 * b2 * c2)
                / (3.0 * ab.powi(3) * ac.powi(3));
            f[1] = s * a2 * (2.0 * a * b + a * c - 3.0 * b * c) / (6.0 * ab.powi(3) * ac.powi(2));
            f[2] = s * a2 * (a * b + 2.0 * a * c - 3.0 * b * c) / (6.0 * ab.powi(2) * ac.powi(3));
        }
        CutTag::BPlus | CutTag::BMinus => {
            let (ab, bc) = (nonzero(a - b, node)?, nonzero(b - c, node)?);
            let (a2, b2, c2) = (a * a, b * b, c * c);
            m[0][0] = -s * b2 * b2 / (4.0 * ab.powi(4) * bc);
            m[0][1] = s * b2 * b * (3.0 * a * b - 4.0 * a * c + b * c) / (12.0 * ab.powi(4) * bc.powi(2));
            m[0][2] = s * b2 * b2 / (12.0 * ab.powi(3) * bc.powi(2));
            m[1][1] = -s
                * b2
                * (3.0 * a2 * b2 - 8.0 * a2 * b * c + 6.0 * a2 * c2 + 2.0 * a * b2 * c - 4.0 * a * b * c2 + b2 * c2)
                / (12.0 * ab.powi(4) * bc.powi(3));
            m[1][2] = -s * b2 * b * (a * b - 2.0 * a * c + b * c) / (12.0 * ab.powi(3) * bc.powi(3));
            m[2][2] = -s * b2 * b2 / (12.0 * ab.powi(2) * bc.powi(3));
            f[0] = s * b2 * b / (3.0 * ab.powi(3) * bc);
            f[1] = -s * b2 * (2.0 * a * b - 3.0 * a * c + b * c) / (6.0 * ab.powi(3) * bc.powi(2));
            f[2] = -s * b2 * b / (6.0 * ab.powi(2) * bc.powi(2));
        }
        CutTag::CPlus | CutTag::CMinus => {
            let (ac, bc) = (nonzero(a - c, node)?, nonzero(b - c, node)?);
            let (a2, b2, c2) = (a * a, b * b, c * c);
            m[0][0] = s * c2 * c2 / (4.0 * ac.powi(4) * bc);
            m[0][1] = s * c2 * c2 / (12.0 * ac.powi(3) * bc.powi(2));
            m[0][2] = s * c2 * c * (3.0 * a * c - 4.0 * a * b + b * c) / (12.0 * ac.powi(4) * bc.powi(2));
            m[1][1] = s * c2 * c2 / (12.0 * ac.powi(2) * bc.powi(3));
            m[1][2] = s * c2 * c * (a * c - 2.0 * a * b + b * c) / (12.0 * ac.powi(3) * bc.powi(3));
            m[2][2] = s
                * c2
                * (6.0 * a2 * b2 - 8.0 * a2 * b * c + 3.0 * a2 * c2 - 4.0 * a * b2 * c + 2.0 * a * b * c2 + b2 * c2)
                / (12.0 * ac.powi(4) * bc.powi(3));
            f[0] = -s * c2 * c / (3.0 * ac.powi(3) * bc);
            f[1] = -s * c2 * c / (6.0 * ac.powi(2) * bc.powi(2));
            f[2] = -s * c2 * (2.0 * a * c - 3.0 * a * b + b * c) / (6.0 * ac.powi(3) * bc.powi(2));
        }
        CutTag::AllNeg | CutTag::AllPos => {}
    }
    for i in 0..3 {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
    for i in 0..3 {
        f[i] *= abs_det;
        for j in 0..3 {
            m[i][j] *= abs_det;
        }
    }
    Ok(CutElementMatrices { dm: m, df: f })
}

fn quad(m: &[[f64; 3]; 3], x: [f64; 3], y: [f64; 3]) -> f64 {
    (0..3).map(|i| (0..3).map(|j| x[i] * m[i][j] * y[j]).sum::<f64>()).sum()
}

fn dot3(x: [f64; 3], y: [f64; 3]) -> f64 {
    x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
}

/// Sensitivity at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeSensitivity {
    pub class: NodeClass,
    pub dj: f64,
    /// `d_k ã`
    pub area_rate: f64,
    /// Set when a shape node has no element with a nonzero area rate.
    pub empty_cut: bool,
}

/// Nodal state, adjoint and target restricted to an element, rotated so
/// that the pivot comes first.
struct ElementFields {
    u: [f64; 3],
    p: [f64; 3],
    r: [f64; 3],
}

fn element_fields(problem: &Problem, u: &[f64], p: &[f64], l: usize, pivot: usize) -> ElementFields {
    let mesh = problem.mesh();
    let uh = local(mesh, problem.uhat(), l);
    let ul = local(mesh, u, l);
    ElementFields {
        u: rotate(ul, pivot),
        p: rotate(local(mesh, p, l), pivot),
        r: rotate([ul[0] - uh[0], ul[1] - uh[1], ul[2] - uh[2]], pivot),
    }
}

/// `p_lᵀ k_{0,l} u_l`
fn stiffness_pairing(geo: &ElementGeometry, u: [f64; 3], p: [f64; 3]) -> f64 {
    quad(&geo.k0, p, u)
}

/// Topological-shape derivative at node `k` from a solved state `u` and
/// adjoint `p`.
pub fn node_derivative(problem: &Problem, phi: &[f64], u: &[f64], p: &[f64], k: usize) -> Result<NodeSensitivity> {
    let mesh = problem.mesh();
    let prm = problem.params();
    let area = area_derivative(problem, phi, k)?;
    let (dl, da, dat, df) = (prm.delta_lambda(), prm.delta_alpha(), prm.delta_atilde(), prm.delta_f());
    match area.class {
        NodeClass::TMinus | NodeClass::TPlus => {
            let (mut num, mut weight) = (0.0, 0.0);
            for e in &area.entries {
                let l = e.element;
                let geo = problem.geometry(l);
                let w = geo.abs_det() / nonzero(phi_rot(mesh, phi, l, k)[1] * phi_rot(mesh, phi, l, k)[2], k)?;
                num += stiffness_pairing(geo, local(mesh, u, l), local(mesh, p, l)) * w;
                weight += w;
            }
            let weight = nonzero(weight, k)?;
            let resid = u[k] - problem.uhat()[k];
            let bracket = prm.c1 + dl * num / weight + da * p[k] * u[k] - df * p[k] + prm.c2 * dat * resid * resid;
            let dj = if area.class == NodeClass::TMinus { -bracket } else { bracket };
            Ok(NodeSensitivity {
                class: area.class,
                dj,
                area_rate: area.total,
                empty_cut: false,
            })
        }
        NodeClass::Shape => {
            if area.total == 0.0 {
                return Ok(NodeSensitivity {
                    class: area.class,
                    dj: 0.0,
                    area_rate: 0.0,
                    empty_cut: true,
                });
            }
            let mut sum = 0.0;
            for e in &area.entries {
                let l = e.element;
                let geo = problem.geometry(l);
                let pivot = e.config.rotation;
                let fields = element_fields(problem, u, p, l, pivot);
                let r = phi_rot(mesh, phi, l, k);
                let cm = cut_matrices(e.config.tag, r, geo.abs_det(), k)?;
                sum += dl * stiffness_pairing(geo, local(mesh, u, l), local(mesh, p, l)) * e.rate
                    + da * quad(&cm.dm, fields.p, fields.u)
                    - df * dot3(fields.p, cm.df)
                    + prm.c2 * dat * quad(&cm.dm, fields.r, fields.r);
            }
            Ok(NodeSensitivity {
                class: area.class,
                dj: -prm.c1 + sum / area.total,
                area_rate: area.total,
                empty_cut: false,
            })
        }
    }
}

fn phi_rot(mesh: &Mesh, phi: &[f64], l: usize, k: usize) -> [f64; 3] {
    rotate(local(mesh, phi, l), pivot_of(mesh, l, k))
}

/// Per-node derivative, classification and generalized descent field.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityField {
    pub dj: Vec<f64>,
    pub classification: NodeClassification,
    pub g: Vec<f64>,
    /// `d_k ã` per node.
    pub area_rate: Vec<f64>,
    /// Nodes reported as zero because their cut set was empty.
    pub empty_cut: Vec<usize>,
    /// Shape nodes lying exactly on the interface, where the one-sided
    /// limits of the quotient may differ.
    pub zero_shape: Vec<usize>,
}

/// Evaluates the derivative at every node in parallel.
pub fn ts_derivative(problem: &Problem, phi: &[f64], u: &[f64], p: &[f64]) -> Result<SensitivityField> {
    let n = problem.mesh().num_nodes();
    check_len(n, phi.len())?;
    check_len(n, u.len())?;
    check_len(n, p.len())?;
    let nodes: Vec<NodeSensitivity> = (0..n)
        .into_par_iter()
        .map(|k| node_derivative(problem, phi, u, p, k))
        .collect::<Result<_>>()?;
    let classification = NodeClassification {
        labels: nodes.iter().map(|s| s.class).collect(),
    };
    let dj: Vec<f64> = nodes.iter().map(|s| s.dj).collect();
    let g = generalized_derivative(&classification, &dj);
    Ok(SensitivityField {
        dj,
        classification,
        g,
        area_rate: nodes.iter().map(|s| s.area_rate).collect(),
        empty_cut: (0..n).filter(|&k| nodes[k].empty_cut).collect(),
        zero_shape: (0..n)
            .filter(|&k| nodes[k].class == NodeClass::Shape && phi[k] == 0.0)
            .collect(),
    })
}

/// `G_φ`: `−min(dJ,0)` on `T⁻`, `min(dJ,0)` on `T⁺`, `−dJ` on `S`.
pub fn generalized_derivative(classification: &NodeClassification, dj: &[f64]) -> Vec<f64> {
    classification
        .labels
        .iter()
        .zip(dj)
        .map(|(c, &d)| match c {
            NodeClass::TMinus => -d.min(0.0),
            NodeClass::TPlus => d.min(0.0),
            NodeClass::Shape => -d,
        })
        .collect()
}

/// Unit normal of an interface segment, pointing out of `Ω` (towards
/// increasing `φ`).
pub fn interface_normal(endpoints: [Point; 2], grad_phi: [f64; 2]) -> [f64; 2] {
    let t = [endpoints[1][0] - endpoints[0][0], endpoints[1][1] - endpoints[0][1]];
    let len = t[0].hypot(t[1]);
    let mut n = [-t[1] / len, t[0] / len];
    if n[0] * grad_phi[0] + n[1] * grad_phi[1] < 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Discretized classical shape derivative at a shape node, divided by
/// `d_k ã`.
///
/// Evaluated as the boundary integral `∫_{∂Ω} L_h V·n` over each interface
/// segment of `C_k`, where `V` is the velocity of the interface induced by
/// moving `φ(x_k)` and
/// `L_h = c₁ + Δλ(∇u·∇p − 2(∇u·n)(∇p·n)) + Δα u p − Δf p + c₂Δα̃(u−û)²`.
pub fn continuous_sd_discretized(problem: &Problem, phi: &[f64], u: &[f64], p: &[f64], k: usize) -> Result<f64> {
    let mesh = problem.mesh();
    let prm = problem.params();
    let area = area_derivative(problem, phi, k)?;
    if area.class != NodeClass::Shape {
        return Err(Error::NotShapeNode { node: k });
    }
    if area.total == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for e in &area.entries {
        let l = e.element;
        let pivot = e.config.rotation;
        let geo = problem.geometry(l);
        let pts = rotate(mesh.element_points(l), pivot);
        let r = phi_rot(mesh, phi, l, k);
        let fields = element_fields(problem, u, p, l, pivot);
        let isolated = match e.config.tag {
            CutTag::APlus | CutTag::AMinus => 0,
            CutTag::BPlus | CutTag::BMinus => 1,
            _ => 2,
        };
        // interface endpoints on the two edges leaving the isolated vertex,
        // with the rate of change of each root with respect to φ(x_k)
        let mut ends = [[0.0; 2]; 2];
        let mut vel = [[0.0; 2]; 2];
        let mut weights = [[0.0; 3]; 2];
        for (s, other) in [(isolated + 1) % 3, (isolated + 2) % 3].into_iter().enumerate() {
            let (i, j) = (isolated, other);
            let den = nonzero(r[i] - r[j], k)?;
            let t = r[i] / den;
            let dir = [pts[j][0] - pts[i][0], pts[j][1] - pts[i][1]];
            ends[s] = [pts[i][0] + t * dir[0], pts[i][1] + t * dir[1]];
            weights[s][i] = 1.0 - t;
            weights[s][j] = t;
            let dt = if i == 0 {
                -r[j] / (den * den)
            } else if j == 0 {
                r[i] / (den * den)
            } else {
                0.0
            };
            vel[s] = [dt * dir[0], dt * dir[1]];
        }
        let len = (ends[1][0] - ends[0][0]).hypot(ends[1][1] - ends[0][1]);
        if len == 0.0 {
            continue;
        }
        let grad_phi = geo.gradient(local(mesh, phi, l));
        let n = interface_normal(ends, grad_phi);
        let gu = geo.gradient(local(mesh, u, l));
        let gp = geo.gradient(local(mesh, p, l));
        let gun = gu[0] * n[0] + gu[1] * n[1];
        let gpn = gp[0] * n[0] + gp[1] * n[1];
        let l_const = prm.c1 + prm.delta_lambda() * (gu[0] * gp[0] + gu[1] * gp[1] - 2.0 * gun * gpn);
        for (s, w) in GAUSS3 {
            let at = |v: [f64; 3]| {
                let e0 = dot3(weights[0], v);
                let e1 = dot3(weights[1], v);
                (1.0 - s) * e0 + s * e1
            };
            let vn = ((1.0 - s) * vel[0][0] + s * vel[1][0]) * n[0] + ((1.0 - s) * vel[0][1] + s * vel[1][1]) * n[1];
            let (uu, pp, rr) = (at(fields.u), at(fields.p), at(fields.r));
            let integrand = l_const + prm.delta_alpha() * uu * pp - prm.delta_f() * pp + prm.c2 * prm.delta_atilde() * rr * rr;
            total += w * len * integrand * vn;
        }
    }
    Ok(total / area.total)
}

/// The term separating the discretized classical shape derivative from the
/// discrete one: `−(2Δλ/d_k ã) Σ (∇u·n)(∇p·n) d_k a_l`.
pub fn gradient_normal_correction(problem: &Problem, phi: &[f64], u: &[f64], p: &[f64], k: usize) -> Result<f64> {
    let mesh = problem.mesh();
    let area = area_derivative(problem, phi, k)?;
    if area.class != NodeClass::Shape {
        return Err(Error::NotShapeNode { node: k });
    }
    if area.total == 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for e in &area.entries {
        let l = e.element;
        let Some(seg) = crate::levelset::element_interface(mesh, phi, l) else { continue };
        if seg.length() == 0.0 {
            continue;
        }
        let geo = problem.geometry(l);
        let n = interface_normal(seg.endpoints, geo.gradient(local(mesh, phi, l)));
        let gu = geo.gradient(local(mesh, u, l));
        let gp = geo.gradient(local(mesh, p, l));
        sum += (gu[0] * n[0] + gu[1] * n[1]) * (gp[0] * n[0] + gp[1] * n[1]) * e.rate;
    }
    Ok(-2.0 * problem.params().delta_lambda() * sum / area.total)
}
