//! Output formats: legacy VTK (ASCII), CSV tables, and JSON with sorted keys.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Pretty JSON with object keys in sorted order and a trailing newline.
/// Non-finite numbers become `null`.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn num(v: f64) -> String {
    match v {
        _ if v.is_finite() => format!("{v:e}"),
        f64::INFINITY => "inf".into(),
        f64::NEG_INFINITY => "-inf".into(),
        _ => "nan".into(),
    }
}

/// Unstructured grid with per-vertex scalars and per-triangle 2-vectors.
pub fn vtk(
    mesh: &TriMesh,
    title: &str,
    point_scalars: &[(&str, &[f64])],
    cell_vectors: &[(&str, &[[f64; 2]])],
) -> Result<String> {
    let (nv, nt) = (mesh.num_vertices(), mesh.num_triangles());
    for (name, v) in point_scalars {
        if v.len() != nv {
            return Err(Error::Config(format!("point field `{name}` has {} values for {nv} vertices", v.len())));
        }
    }
    for (name, v) in cell_vectors {
        if v.len() != nt {
            return Err(Error::Config(format!("cell field `{name}` has {} values for {nt} triangles", v.len())));
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.lines().next().unwrap_or(""));
    let _ = writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", num(p[0]), num(p[1]));
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    if !point_scalars.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for (name, v) in point_scalars {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for x in *v {
                let _ = writeln!(s, "{}", num(*x));
            }
        }
    }
    if !cell_vectors.is_empty() {
        let _ = writeln!(s, "CELL_DATA {nt}");
        for (name, v) in cell_vectors {
            let _ = writeln!(s, "VECTORS {name} double");
            for x in *v {
                let _ = writeln!(s, "{} {} 0", num(x[0]), num(x[1]));
            }
        }
    }
    Ok(s)
}

/// `x,y,u` per vertex.
pub fn nodal_csv(mesh: &TriMesh, values: &[f64]) -> String {
    let mut s = String::from("x,y,u\n");
    for (p, v) in mesh.vertices().iter().zip(values) {
        let _ = writeln!(s, "{},{},{}", num(p[0]), num(p[1]), num(*v));
    }
    s
}

/// Table with a header row; `None` cells are left empty.
pub fn csv_table(header: &[&str], rows: &[Vec<Option<f64>>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|c| c.map(num).unwrap_or_default()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
