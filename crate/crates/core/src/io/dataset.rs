//! Dataset directory: one `<id>.json` metadata file and one `<id>.f32`
//! little-endian float blob per record, values in x-fastest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{MolecularGraph, VoxelGrid};
use crate::model::DensityInstance;

pub const BOHR_PER_ANGSTROM: f64 = 1.0 / 0.529_177_210_903;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    #[default]
    Bohr,
    Angstrom,
}

/// Units as stored on disk. Densities are passed through unchanged; the
/// label is carried so evaluation reports can state it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub length: LengthUnit,
    pub density: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: LengthUnit::Bohr,
            density: "e/bohr^3".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub atom_type: Vec<usize>,
    pub atom_coord: Vec<[f64; 3]>,
    pub shape: [usize; 3],
    pub cell: [[f64; 3]; 3],
    pub origin: [f64; 3],
    pub pbc: bool,
    pub endpoint_inclusive: bool,
    #[serde(default)]
    pub units: Units,
}

fn field<T: DeserializeOwned>(obj: &serde_json::Map<String, Value>, name: &str) -> Result<T> {
    let v = obj.get(name).ok_or_else(|| Error::Parse {
        field: name.into(),
        message: "missing".into(),
    })?;
    serde_json::from_value(v.clone()).map_err(|e| Error::Parse {
        field: name.into(),
        message: e.to_string(),
    })
}

impl RecordMeta {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            field: "<root>".into(),
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            field: "<root>".into(),
            message: "expected an object".into(),
        })?;
        let meta = Self {
            atom_type: field(obj, "atom_type")?,
            atom_coord: field(obj, "atom_coord")?,
            shape: field(obj, "shape")?,
            cell: field(obj, "cell")?,
            origin: field(obj, "origin")?,
            pbc: field(obj, "pbc")?,
            endpoint_inclusive: field(obj, "endpoint_inclusive")?,
            units: if obj.contains_key("units") {
                field(obj, "units")?
            } else {
                Units::default()
            },
        };
        if meta.atom_type.len() != meta.atom_coord.len() {
            return Err(Error::Parse {
                field: "atom_coord".into(),
                message: format!(
                    "{} coordinates for {} atom types",
                    meta.atom_coord.len(),
                    meta.atom_type.len()
                ),
            });
        }
        if meta.shape.iter().any(|&n| n == 0) {
            return Err(Error::Parse {
                field: "shape".into(),
                message: "axes must be non-empty".into(),
            });
        }
        Ok(meta)
    }

    /// Converts lengths to Bohr.
    fn to_bohr(&self) -> Self {
        let s = match self.units.length {
            LengthUnit::Bohr => return self.clone(),
            LengthUnit::Angstrom => BOHR_PER_ANGSTROM,
        };
        let scale = |v: [f64; 3]| v.map(|x| x * s);
        Self {
            atom_coord: self.atom_coord.iter().map(|&c| scale(c)).collect(),
            cell: self.cell.map(scale),
            origin: scale(self.origin),
            units: Units {
                length: LengthUnit::Bohr,
                density: self.units.density.clone(),
            },
            ..self.clone()
        }
    }
}

/// A loaded record with coordinates in Bohr.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub meta: RecordMeta,
    pub grid: VoxelGrid,
}

impl Record {
    pub fn from_grid(
        id: impl Into<String>,
        atom_type: Vec<usize>,
        atom_coord: Vec<[f64; 3]>,
        grid: VoxelGrid,
    ) -> Self {
        let meta = RecordMeta {
            atom_type,
            atom_coord,
            shape: grid.shape,
            cell: grid.cell,
            origin: grid.origin,
            pbc: grid.pbc,
            endpoint_inclusive: grid.endpoint_inclusive,
            units: Units::default(),
        };
        Self {
            id: id.into(),
            meta,
            grid,
        }
    }

    pub fn to_instance(&self, cutoff: f64) -> Result<DensityInstance> {
        let graph = MolecularGraph::new(
            self.meta.atom_type.clone(),
            self.meta.atom_coord.clone(),
            cutoff,
        )?;
        Ok(DensityInstance {
            id: self.id.clone(),
            graph,
            grid: self.grid.clone(),
        })
    }
}

pub fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

pub fn blob_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.f32"))
}

/// Reads `<dir>/<id>.json` and `<dir>/<id>.f32`.
pub fn load_record(dir: &Path, id: &str) -> Result<Record> {
    let mp = meta_path(dir, id);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta = RecordMeta::from_json(&text)?.to_bohr();
    let bp = blob_path(dir, id);
    let bytes = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    let n: usize = meta.shape.iter().product();
    if bytes.len() != 4 * n {
        return Err(Error::Corrupt {
            path: bp,
            message: format!(
                "{} bytes, expected {} for shape {:?}",
                bytes.len(),
                4 * n,
                meta.shape
            ),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let grid = VoxelGrid::new(meta.shape, meta.cell, meta.origin, values)?
        .with_pbc(meta.pbc)
        .with_endpoint_inclusive(meta.endpoint_inclusive);
    Ok(Record {
        id: id.into(),
        meta,
        grid,
    })
}

/// Writes a record; densities are stored as 32-bit floats.
pub fn save_record(dir: &Path, record: &Record) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mp = meta_path(dir, &record.id);
    let json = serde_json::to_string_pretty(&record.meta)?;
    fs::write(&mp, json).map_err(|e| Error::io(&mp, e))?;
    let mut bytes = Vec::with_capacity(4 * record.grid.values.len());
    for v in &record.grid.values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let bp = blob_path(dir, &record.id);
    fs::write(&bp, bytes).map_err(|e| Error::io(&bp, e))
}

/// Record ids in a dataset directory, sorted.
pub fn list_records(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") && path.with_extension("f32").exists() {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}
