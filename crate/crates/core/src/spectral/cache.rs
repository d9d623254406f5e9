//! Binary basis cache keyed by mesh content hash and requested K.
//!
//! Layout (little-endian): magic `EMBASIS\0`, `u32` version, 64-byte ASCII
//! mesh hash, `u64` requested K, `u64` stored K, `u64` vertex count, then the
//! eigenvalues, the column-major eigenvectors and the mass diagonal as `f64`.

use std::path::{Path, PathBuf};

use log::{info, warn};

use super::{compute_eigenbasis, SpectralBasis};
use crate::error::{Error, Result};
use crate::laplace::{assemble_cotan_laplacian, assemble_mass_matrix, MassMatrix};
use crate::mesh::TriangleMesh;

const MAGIC: &[u8; 8] = b"EMBASIS\0";
const VERSION: u32 = 1;
const HASH_LEN: usize = 64;

pub fn save_basis(path: &Path, basis: &SpectralBasis, mesh_hash: &str) -> Result<()> {
    if mesh_hash.len() != HASH_LEN {
        return Err(Error::Parameter(format!(
            "mesh hash must be {HASH_LEN} hex characters"
        )));
    }
    let m = basis.vertex_count();
    let k = basis.len();
    let mut out = Vec::with_capacity(100 + 8 * (k + m * k + m));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(mesh_hash.as_bytes());
    for v in [basis.requested_len(), k, m] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let floats = basis
        .eigenvalues()
        .iter()
        .chain(basis.eigenvector_data())
        .chain(basis.mass().diagonal());
    for x in floats {
        out.extend_from_slice(&x.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a cached basis. Returns `Ok(None)` when the file belongs to another
/// mesh or K, or is not a basis cache of this version.
pub fn load_basis(path: &Path, mesh_hash: &str, requested: usize) -> Result<Option<SpectralBasis>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = 8 + 4 + HASH_LEN + 24;
    if bytes.len() < header || &bytes[..8] != MAGIC {
        return Ok(None);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    if u32_at(8) != VERSION || &bytes[12..12 + HASH_LEN] != mesh_hash.as_bytes() {
        return Ok(None);
    }
    let o = 12 + HASH_LEN;
    let (req, k, m) = (u64_at(o), u64_at(o + 8), u64_at(o + 16));
    if req != requested {
        return Ok(None);
    }
    let count = k
        .checked_mul(m)
        .and_then(|km| km.checked_add(k + m))
        .ok_or_else(|| Error::parse("basis cache", 0, "size overflow"))?;
    if bytes.len() != header + 8 * count {
        return Err(Error::parse("basis cache", 0, "truncated or oversized file"));
    }
    let floats: Vec<f64> = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let eigenvalues = floats[..k].to_vec();
    let vectors = floats[k..k + k * m].to_vec();
    let mass = MassMatrix::from_diagonal(floats[k + k * m..].to_vec())?;
    SpectralBasis::from_parts(eigenvalues, vectors, mass, requested).map(Some)
}

fn cache_path(dir: &Path, hash: &str, k: usize) -> PathBuf {
    dir.join(format!("basis-{}-k{k}.bin", &hash[..16]))
}

/// Compute the eigenbasis of `mesh`, reusing a cache file under `cache_dir`
/// when one matches the mesh hash and `k`.
pub fn cached_eigenbasis(
    mesh: &TriangleMesh,
    k: usize,
    tolerance: f64,
    cache_dir: Option<&Path>,
) -> Result<SpectralBasis> {
    let hash = mesh.content_hash();
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, &hash, k);
        if path.exists() {
            match load_basis(&path, &hash, k) {
                Ok(Some(b)) if b.vertex_count() == mesh.vertex_count() => {
                    info!("loaded basis cache {}", path.display());
                    return Ok(b);
                }
                Ok(_) => warn!("ignoring stale basis cache {}", path.display()),
                Err(e) => warn!("ignoring unreadable basis cache {}: {e}", path.display()),
            }
        }
    }
    let basis = compute_eigenbasis(
        &assemble_cotan_laplacian(mesh),
        &assemble_mass_matrix(mesh),
        k,
        tolerance,
    )?;
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, &hash, k);
        if let Err(e) = save_basis(&path, &basis, &hash) {
            warn!("could not write basis cache: {e}");
        }
    }
    Ok(basis)
}
