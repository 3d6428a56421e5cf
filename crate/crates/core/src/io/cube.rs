//! Gaussian CUBE volumetric files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;

/// Writes `grid` and the atoms in CUBE format. Atom types are written as
/// atomic numbers with a zero nuclear charge.
pub fn export_cube(
    grid: &VoxelGrid,
    atom_type: &[usize],
    atom_coord: &[[f64; 3]],
    path: &Path,
    comment: &str,
) -> Result<()> {
    if atom_type.len() != atom_coord.len() {
        return Err(Error::domain("atom types and coordinates differ in length"));
    }
    let steps: [f64; 3] = std::array::from_fn(|a| {
        let n = grid.shape[a];
        if grid.endpoint_inclusive && n > 1 {
            (n - 1) as f64
        } else {
            n as f64
        }
    });
    let mut s = String::new();
    let first = comment.lines().next().unwrap_or("");
    let _ = writeln!(s, "{first}");
    let _ = writeln!(s, "values in x-y-z nested order, lengths in bohr");
    let o = grid.origin;
    let _ = writeln!(
        s,
        "{:5} {:12.6} {:12.6} {:12.6}",
        atom_type.len(),
        o[0],
        o[1],
        o[2]
    );
    for a in 0..3 {
        let v = grid.cell[a].map(|x| x / steps[a]);
        let _ = writeln!(
            s,
            "{:5} {:12.6} {:12.6} {:12.6}",
            grid.shape[a], v[0], v[1], v[2]
        );
    }
    for (t, c) in atom_type.iter().zip(atom_coord) {
        let _ = writeln!(
            s,
            "{:5} {:12.6} {:12.6} {:12.6} {:12.6}",
            t, 0.0, c[0], c[1], c[2]
        );
    }
    let [nx, ny, nz] = grid.shape;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let _ = write!(s, " {:13.5e}", grid.values[grid.flat_index(i, j, k)]);
                if k % 6 == 5 || k == nz - 1 {
                    s.push('\n');
                }
            }
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeAtom {
    pub number: usize,
    pub charge: f64,
    pub coord: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeFile {
    pub comments: [String; 2],
    pub atoms: Vec<CubeAtom>,
    /// Grid with cell rows equal to `count · axis vector`.
    pub grid: VoxelGrid,
}

/// Parses a CUBE file into an x-fastest grid.
pub fn read_cube(path: &Path) -> Result<CubeFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |m: String| Error::Corrupt {
        path: path.to_path_buf(),
        message: m,
    };
    let mut lines = text.lines();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| corrupt(format!("missing {what}")))
    };
    let comments = [next("comment")?.to_string(), next("comment")?.to_string()];
    let nums = |line: &str| -> Result<Vec<f64>> {
        line.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| corrupt(format!("bad number {t:?}: {e}")))
            })
            .collect()
    };
    let head = nums(next("atom count")?)?;
    if head.len() < 4 {
        return Err(corrupt("short origin line".into()));
    }
    let natoms = head[0].abs() as usize;
    let origin = [head[1], head[2], head[3]];
    let mut shape = [0usize; 3];
    let mut cell = [[0.0; 3]; 3];
    for a in 0..3 {
        let v = nums(next("axis")?)?;
        if v.len() < 4 || v[0] < 1.0 {
            return Err(corrupt(format!("bad axis line {a}")));
        }
        shape[a] = v[0] as usize;
        cell[a] = [v[1] * v[0], v[2] * v[0], v[3] * v[0]];
    }
    let mut atoms = Vec::with_capacity(natoms);
    for _ in 0..natoms {
        let v = nums(next("atom")?)?;
        if v.len() < 5 {
            return Err(corrupt("short atom line".into()));
        }
        atoms.push(CubeAtom {
            number: v[0] as usize,
            charge: v[1],
            coord: [v[2], v[3], v[4]],
        });
    }
    let mut flat = Vec::with_capacity(shape.iter().product());
    for line in lines {
        flat.extend(nums(line)?);
    }
    let n: usize = shape.iter().product();
    if flat.len() != n {
        return Err(corrupt(format!(
            "{} values for shape {shape:?}",
            flat.len()
        )));
    }
    let mut values = vec![0.0; n];
    let [nx, ny, nz] = shape;
    let mut it = flat.into_iter();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                values[i + nx * (j + ny * k)] = it.next().unwrap();
            }
        }
    }
    let grid = VoxelGrid::new(shape, cell, origin, values)?;
    Ok(CubeFile {
        comments,
        atoms,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid_coordinates;

    #[test]
    fn one_atom_two_cubed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cube");
        let g = VoxelGrid::new(
            [2, 2, 2],
            [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]],
            [0.0; 3],
            vec![1.0; 8],
        )
        .unwrap();
        export_cube(&g, &[6], &[[1.0, 1.0, 1.0]], &path, "test").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let count: usize = text
            .lines()
            .nth(2)
            .unwrap()
            .split_whitespace()
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(count, 1);
        let c = read_cube(&path).unwrap();
        assert_eq!(c.grid.values.len(), 8);
        assert_eq!(c.atoms[0].number, 6);
    }

    #[test]
    fn round_trip_with_negative_values_and_skewed_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.cube");
        let shape = [3, 4, 7];
        let values: Vec<f64> = (0..84)
            .map(|i| ((i as f64) * 0.37).sin() * 1e-2 - 3e-3)
            .collect();
        let g = VoxelGrid::new(
            shape,
            [[3.0, 0.0, 0.0], [0.5, 4.0, 0.0], [0.2, 0.3, 5.0]],
            [-1.0, 0.5, 2.0],
            values,
        )
        .unwrap()
        .with_endpoint_inclusive(true);
        export_cube(
            &g,
            &[1, 8],
            &[[0.0; 3], [1.0, 2.0, 3.0]],
            &path,
            "error field",
        )
        .unwrap();
        let c = read_cube(&path).unwrap();
        assert!(c.grid.values.iter().any(|v| *v < 0.0));
        for (a, b) in c.grid.values.iter().zip(&g.values) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "{a} {b}");
        }
        let pa = grid_coordinates(&c.grid).unwrap();
        let pb = grid_coordinates(&g).unwrap();
        for (a, b) in pa.iter().zip(&pb) {
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() < 1e-5);
            }
        }
    }
}
