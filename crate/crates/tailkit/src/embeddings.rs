//! Embedding files.
//!
//! Binary layout: magic `EMB1`, u32 LE row count, u32 LE dimension, then
//! `count * dim` f32 LE values row-major. Row ids live in a JSON sidecar
//! `<file>.ids.json` (array of strings); without one, ids are the row
//! indices. Files ending in `.csv` use the table layout with a header of
//! `id` followed by dimension names.

use std::fs;
use std::path::{Path, PathBuf};

use tailkit_core::data::EmbeddingSet;
use tailkit_core::math::Matrix;

use crate::error::{Error, Result};
use crate::table::{read_table, write_rows};

pub const MAGIC: &[u8; 4] = b"EMB1";

pub fn ids_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.json");
    PathBuf::from(s)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a binary or CSV embedding file; the result is not normalized.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    if is_csv(path) {
        load_csv(path)
    } else {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (count, dim, values) = decode_binary(path, &bytes)?;
        let sidecar = ids_sidecar(path);
        let ids: Vec<String> = if sidecar.exists() {
            let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(&sidecar, e.to_string()))?
        } else {
            (0..count).map(|i| i.to_string()).collect()
        };
        if ids.len() != count {
            return Err(Error::format(
                &sidecar,
                format!("{} ids for {count} embedding rows", ids.len()),
            ));
        }
        let m = Matrix::from_vec(count, dim, values)?;
        EmbeddingSet::new(ids, m).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Decodes the binary body into `(count, dim, values)`.
pub fn decode_binary(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "bad magic: expected `EMB1` header"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "header size overflow"))?;
    if body.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "dimension mismatch: header says {count}x{dim} ({expected} bytes), body has {} bytes",
                body.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(count * dim);
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::format(
                path,
                format!("non-finite value at row {}", k / dim.max(1)),
            ));
        }
        values.push(f64::from(v));
    }
    Ok((count, dim, values))
}

fn load_csv(path: &Path) -> Result<EmbeddingSet> {
    let table = read_table(path)?;
    let dim = table.columns.len();
    let mut values = Vec::with_capacity(table.rows.len() * dim);
    for (line, cells) in &table.rows {
        if cells.len() != dim {
            return Err(Error::parse(
                path,
                *line,
                format!("dimension mismatch: {} values, expected {dim}", cells.len()),
            ));
        }
        for cell in cells {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(path, *line, format!("not a number: `{cell}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, *line, format!("non-finite value `{cell}`")));
            }
            values.push(v);
        }
    }
    let m = Matrix::from_vec(table.ids.len(), dim, values)?;
    Ok(EmbeddingSet::new(table.ids, m)?)
}

/// Encodes values as f32; callers wanting a bit-exact round trip should store
/// values that are already representable in f32.
pub fn encode_binary(e: &EmbeddingSet) -> Result<Vec<u8>> {
    let count = u32::try_from(e.len()).map_err(|_| Error::Usage("too many embedding rows".into()))?;
    let dim = u32::try_from(e.dim()).map_err(|_| Error::Usage("embedding dimension too large".into()))?;
    let mut out = Vec::with_capacity(12 + 4 * e.len() * e.dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for &v in e.vectors().as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Writes the binary file and its ids sidecar.
pub fn save_embeddings_binary(path: impl AsRef<Path>, e: &EmbeddingSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_binary(e)?).map_err(|err| Error::io(path, err))?;
    let sidecar = ids_sidecar(path);
    fs::write(&sidecar, serde_json::to_string(e.ids())?).map_err(|err| Error::io(&sidecar, err))
}

pub fn save_embeddings_csv(path: impl AsRef<Path>, e: &EmbeddingSet) -> Result<()> {
    let header: Vec<String> = (0..e.dim()).map(|d| format!("d{d}")).collect();
    write_rows(path.as_ref(), &header, e.ids(), |i| {
        e.vectors().row(i).iter().map(|v| format!("{v}")).collect()
    })
}
