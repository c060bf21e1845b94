//! Legacy ASCII VTK output.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::levelset::interface_segments;
use crate::mesh::Mesh;

/// Unstructured grid with nodal scalar fields.
pub fn unstructured_grid(mesh: &Mesh, title: &str, fields: &[(&str, &[f64])]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.num_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(out, "{:.16e} {:.16e} 0", p[0], p[1]);
    }
    let ne = mesh.num_elements();
    let _ = writeln!(out, "CELLS {} {}", ne, 4 * ne);
    for e in mesh.elements() {
        let _ = writeln!(out, "3 {} {} {}", e[0], e[1], e[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        out.push_str("5\n");
    }
    if !fields.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", mesh.num_nodes());
    }
    for (name, values) in fields {
        assert_eq!(values.len(), mesh.num_nodes(), "field `{name}` length");
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in *values {
            let _ = writeln!(out, "{v:.16e}");
        }
    }
    out
}

/// Zero level set of `φ` as a polyline data set, one line per cut element.
pub fn interface_polydata(mesh: &Mesh, phi: &[f64]) -> Result<String> {
    let segs = interface_segments(mesh, phi)?;
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\nzero level set\nASCII\nDATASET POLYDATA");
    let _ = writeln!(out, "POINTS {} double", 2 * segs.len());
    for s in &segs {
        for p in s.endpoints {
            let _ = writeln!(out, "{:.16e} {:.16e} 0", p[0], p[1]);
        }
    }
    let _ = writeln!(out, "LINES {} {}", segs.len(), 3 * segs.len());
    for i in 0..segs.len() {
        let _ = writeln!(out, "2 {} {}", 2 * i, 2 * i + 1);
    }
    Ok(out)
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}
