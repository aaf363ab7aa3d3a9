//! VTK legacy ASCII output (unstructured triangle grid) and a re-parser
//! used by the round-trip tests.
//!
//! Snapshots carry point data at the mesh vertices: scalars phi, mu, detF,
//! F11, F12, F21, F22 and the velocity vector v (its P1 vertex part).
//! Values are written with 17 significant digits so they re-parse to the
//! same doubles.

use crate::error::CliError;
use chve_core::field::State;
use chve_core::mesh::Mesh;
use std::collections::BTreeMap;
use std::io::Write;

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_vtk<W: Write>(mut out: W, mesh: &Mesh, state: &State) -> std::io::Result<()> {
    let n = mesh.num_vertices();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "chve snapshot t={}", fmt(state.t))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {n} double")?;
    for p in &mesh.vertices {
        writeln!(out, "{} {} {}", fmt(p[0]), fmt(p[1]), fmt(0.0))?;
    }
    let m = mesh.num_triangles();
    writeln!(out, "CELLS {m} {}", 4 * m)?;
    for tri in &mesh.triangles {
        writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2])?;
    }
    writeln!(out, "CELL_TYPES {m}")?;
    for _ in 0..m {
        writeln!(out, "5")?;
    }
    writeln!(out, "POINT_DATA {n}")?;

    let write_scalar = |out: &mut W, name: &str, values: &dyn Fn(usize) -> f64| {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for i in 0..n {
            writeln!(out, "{}", fmt(values(i)))?;
        }
        Ok::<(), std::io::Error>(())
    };
    write_scalar(&mut out, "phi", &|i| state.phi.values[i])?;
    write_scalar(&mut out, "mu", &|i| state.mu.values[i])?;
    write_scalar(&mut out, "detF", &|i| state.f.tensor_at_vertex(i).det())?;
    for (c, name) in ["F11", "F12", "F21", "F22"].iter().enumerate() {
        write_scalar(&mut out, name, &|i| state.f.values[4 * i + c])?;
    }
    writeln!(out, "VECTORS v double")?;
    for i in 0..n {
        writeln!(
            out,
            "{} {} {}",
            fmt(state.v.values[2 * i]),
            fmt(state.v.values[2 * i + 1]),
            fmt(0.0)
        )?;
    }
    Ok(())
}

/// Parsed VTK snapshot contents.
#[derive(Debug, Default)]
pub struct VtkData {
    pub points: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub scalars: BTreeMap<String, Vec<f64>>,
    pub vectors: BTreeMap<String, Vec<[f64; 2]>>,
}

pub fn parse_vtk(text: &str) -> Result<VtkData, CliError> {
    let bad = |msg: &str| CliError::Format(format!("vtk parse: {msg}"));
    let mut words = text.lines().skip(2); // header comment + title
    let mut data = VtkData::default();
    if words.next().map(str::trim) != Some("ASCII") {
        return Err(bad("expected ASCII"));
    }
    if words.next().map(str::trim) != Some("DATASET UNSTRUCTURED_GRID") {
        return Err(bad("expected DATASET UNSTRUCTURED_GRID"));
    }
    let mut lines = words.peekable();
    let mut n_points = 0usize;
    while let Some(line) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        match toks[0] {
            "POINTS" => {
                n_points = toks[1].parse().map_err(|_| bad("bad POINTS count"))?;
                for _ in 0..n_points {
                    let l = lines.next().ok_or_else(|| bad("truncated POINTS"))?;
                    let c: Vec<f64> = l
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| bad("bad point coordinate")))
                        .collect::<Result<_, _>>()?;
                    data.points.push([c[0], c[1]]);
                }
            }
            "CELLS" => {
                let m: usize = toks[1].parse().map_err(|_| bad("bad CELLS count"))?;
                for _ in 0..m {
                    let l = lines.next().ok_or_else(|| bad("truncated CELLS"))?;
                    let c: Vec<usize> = l
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| bad("bad cell index")))
                        .collect::<Result<_, _>>()?;
                    if c.len() != 4 || c[0] != 3 {
                        return Err(bad("cells must be triangles"));
                    }
                    data.cells.push([c[1], c[2], c[3]]);
                }
            }
            "CELL_TYPES" => {
                let m: usize = toks[1].parse().map_err(|_| bad("bad CELL_TYPES count"))?;
                for _ in 0..m {
                    let l = lines.next().ok_or_else(|| bad("truncated CELL_TYPES"))?;
                    if l.trim() != "5" {
                        return Err(bad("expected cell type 5"));
                    }
                }
            }
            "POINT_DATA" => {
                let declared: usize = toks[1].parse().map_err(|_| bad("bad POINT_DATA count"))?;
                if declared != n_points {
                    return Err(bad("POINT_DATA count mismatch"));
                }
            }
            "SCALARS" => {
                let name = toks[1].to_string();
                let l = lines.next().ok_or_else(|| bad("missing LOOKUP_TABLE"))?;
                if !l.trim_start().starts_with("LOOKUP_TABLE") {
                    return Err(bad("missing LOOKUP_TABLE"));
                }
                let mut vals = Vec::with_capacity(n_points);
                for _ in 0..n_points {
                    let l = lines.next().ok_or_else(|| bad("truncated SCALARS"))?;
                    vals.push(l.trim().parse().map_err(|_| bad("bad scalar value"))?);
                }
                data.scalars.insert(name, vals);
            }
            "VECTORS" => {
                let name = toks[1].to_string();
                let mut vals = Vec::with_capacity(n_points);
                for _ in 0..n_points {
                    let l = lines.next().ok_or_else(|| bad("truncated VECTORS"))?;
                    let c: Vec<f64> = l
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| bad("bad vector value")))
                        .collect::<Result<_, _>>()?;
                    vals.push([c[0], c[1]]);
                }
                data.vectors.insert(name, vals);
            }
            other => return Err(bad(&format!("unexpected section '{other}'"))),
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chve_core::field::{Field, State};
    use chve_core::mesh::build_uniform_mesh;
    use chve_core::rng::SplitMix64;
    use chve_core::tensor::Mat2;

    #[test]
    fn roundtrip_restores_fields_bitwise() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let mut state = State::zeros(&mesh);
        let mut rng = SplitMix64::new(11);
        for v in state.phi.values.iter_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        for v in state.mu.values.iter_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        state.f = Field::constant_tensor(&mesh, Mat2::identity());
        for v in state.f.values.iter_mut() {
            *v += rng.uniform(-0.1, 0.1);
        }
        for v in state.v.values.iter_mut() {
            *v = rng.uniform(-1e-3, 1e-3);
        }
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, &state).unwrap();
        let parsed = parse_vtk(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(parsed.points.len(), mesh.num_vertices());
        assert_eq!(parsed.cells.len(), mesh.num_triangles());
        assert_eq!(parsed.scalars["phi"], state.phi.values);
        assert_eq!(parsed.scalars["mu"], state.mu.values);
        for i in 0..mesh.num_vertices() {
            assert_eq!(parsed.scalars["F11"][i], state.f.values[4 * i]);
            assert_eq!(parsed.scalars["F12"][i], state.f.values[4 * i + 1]);
            assert_eq!(parsed.scalars["F21"][i], state.f.values[4 * i + 2]);
            assert_eq!(parsed.scalars["F22"][i], state.f.values[4 * i + 3]);
            assert_eq!(
                parsed.scalars["detF"][i],
                state.f.tensor_at_vertex(i).det()
            );
            assert_eq!(parsed.vectors["v"][i][0], state.v.values[2 * i]);
            assert_eq!(parsed.vectors["v"][i][1], state.v.values[2 * i + 1]);
        }
    }
}
