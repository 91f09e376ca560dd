//! Gmsh MSH 2.2 ASCII and VTK legacy ASCII file formats.
//!
//! VTK layout written by [`write_vtk`]:
//!
//! ```text
//! # vtk DataFile Version 3.0
//! <title>
//! ASCII
//! DATASET UNSTRUCTURED_GRID
//! POINTS <n_vertices> double        (x y 0 per line)
//! CELLS <n_triangles> <4 n_triangles> (3 a b c per line)
//! CELL_TYPES <n_triangles>          (5 per line)
//! POINT_DATA <n_vertices>
//! SCALARS <name> double 1 / LOOKUP_TABLE default / one value per line
//! VECTORS <name> double             (vx vy 0 per line)
//! ```
//!
//! Fields are sampled at mesh vertices, so P2 fields lose their edge dofs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::mesh::{BoundaryEdge, Mesh};
use super::space::Field;

fn perr(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), line, message: message.into() }
}

pub fn load_gmsh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gmsh(&text, &path.display().to_string())
}

/// Parses MSH 2.2 ASCII text; `label` names the source in errors.
pub fn parse_gmsh(text: &str, label: &str) -> Result<Mesh> {
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    let mut nodes: Option<(Vec<[f64; 2]>, HashMap<u64, usize>)> = None;
    let mut elements: Option<(usize, Vec<([usize; 2], i32)>, Vec<([usize; 3], Option<i32>)>)> = None;
    let mut saw_format = false;
    let next = |i: &mut usize| -> Result<(usize, &str)> {
        let l = *i;
        *i += 1;
        lines
            .get(l)
            .map(|s| (l + 1, s.trim()))
            .ok_or_else(|| perr(label, l + 1, "unexpected end of file"))
    };
    while i < lines.len() {
        let (ln, head) = next(&mut i)?;
        if head.is_empty() {
            continue;
        }
        let Some(name) = head.strip_prefix('$') else {
            return Err(perr(label, ln, format!("expected a section header, found {head:?}")));
        };
        let end = format!("$End{name}");
        match name {
            "MeshFormat" => {
                let (l2, fmt) = next(&mut i)?;
                let mut it = fmt.split_whitespace();
                let version = it.next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(perr(label, l2, format!("unsupported MSH version {version}")));
                }
                if it.next() != Some("0") {
                    return Err(perr(label, l2, "only ASCII MSH files are supported"));
                }
                saw_format = true;
                let (l3, e) = next(&mut i)?;
                if e != end {
                    return Err(perr(label, l3, format!("expected {end}")));
                }
            }
            "Nodes" => {
                let (l2, count) = next(&mut i)?;
                let n: usize = count.parse().map_err(|_| perr(label, l2, "bad node count"))?;
                let mut coords = Vec::with_capacity(n);
                let mut ids = HashMap::with_capacity(n);
                for _ in 0..n {
                    let (l, s) = next(&mut i)?;
                    let f: Vec<&str> = s.split_whitespace().collect();
                    if f.len() < 3 {
                        return Err(perr(label, l, "node line needs id x y [z]"));
                    }
                    let id: u64 = f[0].parse().map_err(|_| perr(label, l, "bad node id"))?;
                    let x: f64 = f[1].parse().map_err(|_| perr(label, l, "bad x coordinate"))?;
                    let y: f64 = f[2].parse().map_err(|_| perr(label, l, "bad y coordinate"))?;
                    if ids.insert(id, coords.len()).is_some() {
                        return Err(perr(label, l, format!("duplicate node id {id}")));
                    }
                    coords.push([x, y]);
                }
                let (l3, e) = next(&mut i)?;
                if e != end {
                    return Err(perr(label, l3, format!("expected {end}")));
                }
                nodes = Some((coords, ids));
            }
            "Elements" => {
                let Some((_, ids)) = &nodes else {
                    return Err(perr(label, ln, "$Elements before $Nodes"));
                };
                let (l2, count) = next(&mut i)?;
                let n: usize = count.parse().map_err(|_| perr(label, l2, "bad element count"))?;
                let mut lines_v = Vec::new();
                let mut tris = Vec::new();
                for _ in 0..n {
                    let (l, s) = next(&mut i)?;
                    let f: Vec<i64> = s
                        .split_whitespace()
                        .map(|t| t.parse::<i64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| perr(label, l, "non-integer token in element line"))?;
                    if f.len() < 3 {
                        return Err(perr(label, l, "element line too short"));
                    }
                    let (ty, ntags) = (f[1], f[2].max(0) as usize);
                    let rest = f.get(3 + ntags..).ok_or_else(|| perr(label, l, "missing element tags"))?;
                    let tag = (ntags > 0).then(|| f[3] as i32);
                    let node = |k: usize| -> Result<usize> {
                        let id = *rest.get(k).ok_or_else(|| perr(label, l, "missing element node"))?;
                        ids.get(&(id as u64))
                            .copied()
                            .ok_or_else(|| perr(label, l, format!("unknown node id {id}")))
                    };
                    match ty {
                        1 => lines_v.push(([node(0)?, node(1)?], tag.unwrap_or(0))),
                        2 => tris.push(([node(0)?, node(1)?, node(2)?], tag)),
                        15 => {}
                        other => {
                            return Err(perr(label, l, format!("unsupported element type {other}")));
                        }
                    }
                }
                let (l3, e) = next(&mut i)?;
                if e != end {
                    return Err(perr(label, l3, format!("expected {end}")));
                }
                elements = Some((ln, lines_v, tris));
            }
            _ => loop {
                let (_, s) = next(&mut i)?;
                if s == end {
                    break;
                }
            },
        }
    }
    if !saw_format {
        return Err(perr(label, 1, "missing $MeshFormat section"));
    }
    let (coords, _) = nodes.ok_or_else(|| perr(label, lines.len(), "missing $Nodes section"))?;
    let (eline, edges, tris) = elements.ok_or_else(|| perr(label, lines.len(), "missing $Elements section"))?;

    // Drop nodes that only carry geometry points.
    let mut remap = vec![usize::MAX; coords.len()];
    for (t, _) in &tris {
        for &v in t {
            remap[v] = 0;
        }
    }
    let mut vertices = Vec::new();
    for (k, r) in remap.iter_mut().enumerate() {
        if *r == 0 {
            *r = vertices.len();
            vertices.push(coords[k]);
        }
    }
    let mut boundary = Vec::with_capacity(edges.len());
    for ([a, b], tag) in edges {
        if remap[a] == usize::MAX || remap[b] == usize::MAX {
            return Err(perr(label, eline, "boundary line references a node outside every triangle"));
        }
        boundary.push(BoundaryEdge { vertices: [remap[a], remap[b]], tag });
    }
    let has_regions = tris.iter().any(|(_, r)| r.is_some());
    let regions = has_regions.then(|| tris.iter().map(|(_, r)| r.unwrap_or(0)).collect());
    let triangles = tris.iter().map(|(t, _)| [remap[t[0]], remap[t[1]], remap[t[2]]]).collect();
    Mesh::new(vertices, triangles, boundary, regions).map_err(|e| perr(label, eline, e.to_string()))
}

/// Serializes a mesh as MSH 2.2 ASCII text.
pub fn gmsh_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.n_vertices());
    for (k, p) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{} {} {} 0", k + 1, p[0], p[1]);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(s, "{}", mesh.boundary_edges().len() + mesh.n_triangles());
    let mut id = 1;
    for be in mesh.boundary_edges() {
        let _ = writeln!(s, "{id} 1 2 {} {} {} {}", be.tag, be.tag, be.vertices[0] + 1, be.vertices[1] + 1);
        id += 1;
    }
    for (t, tri) in mesh.triangles().iter().enumerate() {
        match mesh.region_tags() {
            Some(r) => {
                let _ = writeln!(s, "{id} 2 2 {} {} {} {} {}", r[t], r[t], tri[0] + 1, tri[1] + 1, tri[2] + 1);
            }
            None => {
                let _ = writeln!(s, "{id} 2 0 {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1);
            }
        }
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

pub fn write_gmsh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, gmsh_string(mesh)).map_err(|e| Error::io(path, e))
}

/// VTK legacy text for a mesh and vertex-sampled fields.
pub fn vtk_string(mesh: &Mesh, title: &str, fields: &[(&str, &Field)]) -> Result<String> {
    let nv = mesh.n_vertices();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID", title.replace('\n', " "));
    let _ = writeln!(s, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
    }
    for (name, f) in fields {
        if !std::ptr::eq(f.space().mesh().as_ref(), mesh) {
            return Err(Error::contract(format!("field {name} lives on a different mesh")));
        }
        let name = name.replace(char::is_whitespace, "_");
        if f.components() == 1 {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in &f.component(0)[..nv] {
                let _ = writeln!(s, "{v}");
            }
        } else {
            let _ = writeln!(s, "VECTORS {name} double");
            let (x, y) = (f.component(0), f.component(1));
            for k in 0..nv {
                let _ = writeln!(s, "{} {} 0", x[k], y[k]);
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, title: &str, fields: &[(&str, &Field)]) -> Result<()> {
    let path = path.as_ref();
    let s = vtk_string(mesh, title, fields)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::meshfem::{rect_mesh, FunctionSpace};

    const SQUARE: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$PhysicalNames\n1\n1 1 \"wall\"\n$EndPhysicalNames\n\
$Nodes\n5\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n9 5 5 0\n$EndNodes\n\
$Elements\n8\n1 15 2 0 1 9\n2 1 2 1 1 1 2\n3 1 2 2 2 2 3\n4 1 2 3 3 3 4\n5 1 2 4 4 4 1\n\
6 2 2 7 7 1 3 2\n7 2 2 7 7 1 4 3\n8 15 2 0 1 1\n$EndElements\n";

    #[test]
    fn reads_two_triangle_square() {
        let m = parse_gmsh(SQUARE, "square.msh").unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.boundary_edges().len(), 4);
        assert_eq!(m.boundary_tags(), vec![1, 2, 3, 4]);
        assert!((0..2).all(|t| m.area(t) > 0.0));
        assert_eq!(m.region_tags(), Some(&[7, 7][..]));
    }

    #[test]
    fn missing_nodes_is_parse_error() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Elements\n0\n$EndElements\n";
        match parse_gmsh(text, "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
        assert!(matches!(parse_gmsh(text, "x"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unsupported_element_reports_line() {
        let bad = SQUARE.replace("7 2 2 7 7 1 4 3", "7 3 2 7 7 1 4 3 2");
        match parse_gmsh(&bad, "x") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 24);
                assert!(message.contains("unsupported"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vtk_layout() {
        let m = Arc::new(rect_mesh(1, 1, [0.0, 1.0], [0.0, 1.0], &[]).unwrap());
        let v = FunctionSpace::new(m.clone(), 2).unwrap();
        let f = Field::interpolate(v.clone(), |p| p[0]);
        let u = Field::interpolate_vector(v, |p| [p[1], 1.0]);
        let s = vtk_string(&m, "t", &[("c", &f), ("u", &u)]).unwrap();
        assert!(s.contains("CELLS 2 8\n"));
        assert!(s.contains("POINT_DATA 4\nSCALARS c double 1\nLOOKUP_TABLE default\n0\n1\n0\n1\n"));
        assert!(s.contains("VECTORS u double\n0 1 0\n"));
    }
}
