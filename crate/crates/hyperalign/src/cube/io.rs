//! On-disk formats.
//!
//! Cube: a UTF-8 `key=value` header naming a band-sequential binary payload
//! of 32-bit little-endian floats (band-major: all of band 0, then band 1,
//! ...). Labels: a `row,col,class_id` CSV of the nonzero pixels plus a
//! `<stem>.classes.csv` sidecar of `id,name` lines.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{HyperCube, LabelMap, ValueKind};

/// Load a cube from its header file.
pub fn load_cube(header_path: &Path) -> Result<HyperCube> {
    let text = fs::read_to_string(header_path)
        .map_err(|e| Error::Ingestion(format!("cannot read header {header_path:?}: {e}")))?;

    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!("header line without `=`: {line:?}"))
        })?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }

    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| Error::Format(format!("header missing `{key}`")))
    };
    let parse_dim = |key: &str| -> Result<usize> {
        get(key)?
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("header `{key}` is not a positive integer")))
    };

    let height = parse_dim("height")?;
    let width = parse_dim("width")?;
    let bands = parse_dim("bands")?;
    let kind = match get("kind")?.as_str() {
        "reflectance" => ValueKind::Reflectance,
        "radiance" => ValueKind::Radiance,
        other => {
            return Err(Error::Format(format!(
                "header `kind` must be reflectance or radiance, got {other:?}"
            )))
        }
    };
    let wavelengths: Vec<f64> = get("wavelengths")?
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad wavelength token {tok:?}")))
        })
        .collect::<Result<_>>()?;
    if wavelengths.len() != bands {
        return Err(Error::Format(format!(
            "header declares {bands} bands but {} wavelengths",
            wavelengths.len()
        )));
    }

    let payload_rel = get("payload")?;
    let payload_path = resolve_sibling(header_path, payload_rel);
    let bytes = fs::read(&payload_path)
        .map_err(|e| Error::Ingestion(format!("cannot read payload {payload_path:?}: {e}")))?;

    let expected = height * width * bands * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {expected} for {height}x{width}x{bands} f32",
            bytes.len()
        )));
    }

    // Band-sequential on disk; interleave to (row, col, band) in memory.
    let plane = height * width;
    let mut values = vec![0.0f64; plane * bands];
    for b in 0..bands {
        for p in 0..plane {
            let off = (b * plane + p) * 4;
            let raw = f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
            if raw.is_nan() {
                return Err(Error::Data(format!(
                    "NaN in payload at band {b}, pixel {p}"
                )));
            }
            values[p * bands + b] = raw as f64;
        }
    }

    HyperCube::new(height, width, wavelengths, kind, values)
}

/// Write a cube as `<header_path>` plus a sibling payload file. The payload
/// name is the header stem with a `.bsq` extension.
pub fn write_cube(cube: &HyperCube, header_path: &Path) -> Result<()> {
    let payload_name = header_path
        .file_stem()
        .map(|s| format!("{}.bsq", s.to_string_lossy()))
        .ok_or_else(|| Error::argument("header path has no file name"))?;
    let payload_path = resolve_sibling(header_path, &payload_name);

    let (h, w, b) = (cube.height(), cube.width(), cube.bands());
    let plane = h * w;
    let mut bytes = Vec::with_capacity(plane * b * 4);
    for band in 0..b {
        for p in 0..plane {
            let v = cube.values()[p * b + band] as f32;
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    let wavelengths = cube
        .wavelengths_nm()
        .iter()
        .map(|w| format!("{w}"))
        .collect::<Vec<_>>()
        .join(",");
    let header = format!(
        "height={h}\nwidth={w}\nbands={b}\nkind={}\npayload={payload_name}\nwavelengths={wavelengths}\n",
        cube.kind()
    );

    fs::write(header_path, header)?;
    fs::write(payload_path, bytes)?;
    Ok(())
}

/// Write the nonzero labels as `row,col,class_id` CSV, with an `id,name`
/// sidecar at `<path stem>.classes.csv`.
pub fn write_labels(labels: &LabelMap, path: &Path) -> Result<()> {
    let mut csv = String::from("row,col,class_id\n");
    for r in 0..labels.height() {
        for c in 0..labels.width() {
            let id = labels.class_at(r, c);
            if id != 0 {
                csv.push_str(&format!("{r},{c},{id}\n"));
            }
        }
    }
    fs::write(path, csv)?;

    let mut names = String::from("id,name\n");
    for (i, name) in labels.class_names().iter().enumerate() {
        names.push_str(&format!("{},{}\n", i + 1, name));
    }
    fs::write(sidecar_path(path), names)?;
    Ok(())
}

/// Load labels written by [`write_labels`]. Height and width come from the
/// paired cube; the CSV only stores nonzero pixels.
pub fn load_labels(path: &Path, height: usize, width: usize) -> Result<LabelMap> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Ingestion(format!("cannot read labels {path:?}: {e}")))?;
    let names_text = fs::read_to_string(sidecar_path(path)).map_err(|e| {
        Error::Ingestion(format!(
            "cannot read class-name sidecar for {path:?}: {e}"
        ))
    })?;

    let mut names: Vec<(u32, String)> = Vec::new();
    for (lineno, line) in names_text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let (id, name) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("bad sidecar line {line:?}")))?;
        let id: u32 = id
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad class id in sidecar line {line:?}")))?;
        names.push((id, name.trim().to_string()));
    }
    names.sort_by_key(|(id, _)| *id);
    for (i, (id, _)) in names.iter().enumerate() {
        if *id != i as u32 + 1 {
            return Err(Error::Data(format!(
                "class ids must be contiguous 1..C, found id {id} at position {i}"
            )));
        }
    }
    let class_names: Vec<String> = names.into_iter().map(|(_, n)| n).collect();

    let mut classes = vec![0u32; height * width];
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("bad label line {line:?}")));
        }
        let r: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad row in {line:?}")))?;
        let c: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad col in {line:?}")))?;
        let id: u32 = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad class id in {line:?}")))?;
        if r >= height || c >= width {
            return Err(Error::Data(format!(
                "label at ({r},{c}) outside {height}x{width} image"
            )));
        }
        classes[r * width + c] = id;
    }

    LabelMap::new(height, width, classes, class_names)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "labels".into());
    path.with_file_name(format!("{stem}.classes.csv"))
}

fn resolve_sibling(anchor: &Path, name: &str) -> PathBuf {
    let candidate = Path::new(name);
    if candidate.is_absolute() {
        candidate.to_path_buf()
    } else {
        anchor
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(candidate)
    }
}
