//! On-disk formats and the content-addressed cache.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corrections::{CorrectionFamily, DecayRow, SystemKind};
use crate::field::{BoxGrid, Field3D};
use crate::landscape::Landscape;
use crate::radial::{FarField, RadialGrid, RadialProfile};
use crate::{Result, SolverError};

const FIELD_FORMAT: &str = "segbump-field";

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| SolverError::Io(e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Hex SHA-256 of the compact JSON encoding of `params`.
pub fn content_hash<T: Serialize + ?Sized>(params: &T) -> Result<String> {
    let bytes = serde_json::to_vec(params)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// JSON artifacts stored under `root/<kind>/<hash>.json`.
#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entry_path<P: Serialize + ?Sized>(&self, kind: &str, params: &P) -> Result<PathBuf> {
        Ok(self
            .root
            .join(kind)
            .join(format!("{}.json", content_hash(params)?)))
    }

    /// Returns the cached value for `params`, building and storing it on a miss.
    /// The flag is true on a hit.
    pub fn load_or_build<P, T, F>(&self, kind: &str, params: &P, build: F) -> Result<(T, bool)>
    where
        P: Serialize + ?Sized,
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let path = self.entry_path(kind, params)?;
        if path.is_file() {
            if let Ok(value) = read_json(&path) {
                return Ok((value, true));
            }
        }
        let value = build()?;
        write_json(&path, &value)?;
        Ok((value, false))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSidecar {
    pub grid: RadialGrid,
    pub far_field: Option<FarField>,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.into_inner().map_err(|e| SolverError::Io(e.into_error()))
}

/// Two-column `r,value` CSV plus a JSON sidecar with the grid and far-field fit.
pub fn write_profile(csv_path: &Path, profile: &RadialProfile) -> Result<()> {
    let grid = *profile.grid();
    let rows = profile
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| vec![grid.r(i), *v]);
    write_atomic(csv_path, &csv_bytes(&["r", "value"], rows)?)?;
    let sidecar = ProfileSidecar {
        grid,
        far_field: profile.far_field().copied(),
    };
    write_json(&sidecar_path(csv_path), &sidecar)
}

pub fn read_profile(csv_path: &Path) -> Result<RadialProfile> {
    let sidecar: ProfileSidecar = read_json(&sidecar_path(csv_path))?;
    let mut reader = csv::Reader::from_path(csv_path)?;
    let mut values = Vec::with_capacity(sidecar.grid.n_points());
    for record in reader.records() {
        let record = record?;
        let value = record.get(1).ok_or_else(|| {
            SolverError::InvalidParameter("profile row without a value column".into())
        })?;
        values.push(value.parse::<f64>().map_err(|e| {
            SolverError::InvalidParameter(format!("bad profile value {value:?}: {e}"))
        })?);
    }
    let profile = RadialProfile::new(sidecar.grid, values)?;
    match sidecar.far_field {
        Some(law) => profile.with_far_field(law),
        None => Ok(profile),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub system: SystemKind,
    pub epsilon: f64,
    pub truncation_order: usize,
    pub grid: RadialGrid,
    pub ground_state_residual: f64,
    pub decay_constant: f64,
    pub decay: Vec<DecayRow>,
    pub profiles: Vec<String>,
}

/// One CSV per profile plus `manifest.json`.
pub fn write_family(dir: &Path, family: &CorrectionFamily) -> Result<FamilyManifest> {
    fs::create_dir_all(dir)?;
    let named = family.named_profiles();
    for (name, profile) in &named {
        write_profile(&dir.join(format!("{name}.csv")), profile)?;
    }
    let manifest = FamilyManifest {
        system: family.system,
        epsilon: family.epsilon,
        truncation_order: crate::corrections::TRUNCATION_ORDER,
        grid: *family.base.profile.grid(),
        ground_state_residual: family.base.residual,
        decay_constant: family.decay_constant(),
        decay: family.decay.clone(),
        profiles: named.iter().map(|(n, _)| n.clone()).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// `r,rho,G` rows in scan order.
pub fn write_landscape_csv(path: &Path, landscape: &Landscape) -> Result<()> {
    let rows = landscape
        .samples
        .iter()
        .map(|(r, rho, g)| vec![*r, *rho, *g]);
    write_atomic(path, &csv_bytes(&["r", "rho", "G"], rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub name: String,
    pub grid: BoxGrid,
    pub layout: String,
    pub dtype: String,
}

/// Little-endian `u64` header length, the JSON header, then `f64` values
/// in row-major `(i, j, k)` order.
pub fn write_field_binary(path: &Path, name: &str, field: &Field3D) -> Result<()> {
    let header = FieldHeader {
        format: FIELD_FORMAT.into(),
        name: name.into(),
        grid: *field.grid(),
        layout: "row-major (i, j, k), k fastest".into(),
        dtype: "f64le".into(),
    };
    let head = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(8 + head.len() + 8 * field.values().len());
    bytes.extend_from_slice(&(head.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&head);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_field_binary(path: &Path) -> Result<(FieldHeader, Field3D)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |why: &str| SolverError::InvalidParameter(format!("{}: {why}", path.display()));
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .ok_or_else(|| bad("truncated header"))?
        .try_into()
        .map_err(|_| bad("truncated header"))?;
    let head_len = u64::from_le_bytes(len_bytes) as usize;
    let head = bytes
        .get(8..8 + head_len)
        .ok_or_else(|| bad("truncated header"))?;
    let header: FieldHeader = serde_json::from_slice(head)?;
    if header.format != FIELD_FORMAT {
        return Err(bad("not a field file"));
    }
    let body = &bytes[8 + head_len..];
    if body.len() != 8 * header.grid.len() {
        return Err(bad("value count does not match the grid"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap_or([0; 8])))
        .collect();
    let field = Field3D::new(header.grid, values)?;
    Ok((header, field))
}

/// `x1,x2,value` on the plane `x₃ = 0`, which lies midway between the two
/// central node layers; values are their average.
pub fn write_plane_csv(path: &Path, field: &Field3D) -> Result<()> {
    let g = *field.grid();
    let [nx, ny, nz] = g.n_per_axis();
    let (k0, k1) = (nz / 2 - 1, nz / 2);
    let rows = (0..nx).flat_map(move |i| {
        (0..ny).map(move |j| {
            vec![
                g.coord(0, i),
                g.coord(1, j),
                0.5 * (field.get(i, j, k0) + field.get(i, j, k1)),
            ]
        })
    });
    write_atomic(path, &csv_bytes(&["x1", "x2", "value"], rows)?)
}
