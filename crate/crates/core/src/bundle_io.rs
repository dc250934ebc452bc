//! Binary bundle files and a JSON dump.
//!
//! All numbers are little-endian. Layout, in order:
//!
//! ```text
//! header   magic "HJBB" | u32 version | u32 n | u32 levels | u32 tuples | u32 nodes
//!          f64 t0 | f64 T | f64 step | [u8; 32] config hash | u64 seed | f64 L_g
//! levels   per level: f64 gamma | u32 requested | u32 stored | u8 degenerate
//! times    nodes × f64, descending from T
//! phi      per node: n × n f64, row-major
//! tuples   per tuple: u32 level | u32 index | xi nodes×n f64 | lambda nodes×n f64 | q nodes f64
//! trailer  SHA-256 of every preceding byte
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::characteristics::{CharacteristicBundle, TimeGrid, Trajectory};
use crate::cost::{Level, LevelData};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HJBB";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn to_bytes(b: &CharacteristicBundle) -> Vec<u8> {
    let n = b.dim();
    let nodes = b.grid.len();
    let mut out = Vec::with_capacity(64 + b.tuples.len() * nodes * (2 * n + 1) * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, n);
    put_u32(&mut out, b.levels.levels.len());
    put_u32(&mut out, b.tuples.len());
    put_u32(&mut out, nodes);
    put_f64(&mut out, b.grid.t0);
    put_f64(&mut out, b.grid.t_final);
    put_f64(&mut out, b.grid.step);
    out.extend_from_slice(&b.config_hash);
    out.extend_from_slice(&b.seed.to_le_bytes());
    put_f64(&mut out, b.lipschitz);
    for l in &b.levels.levels {
        put_f64(&mut out, l.gamma);
        put_u32(&mut out, l.requested);
        put_u32(&mut out, l.points.len());
        out.push(u8::from(l.degenerate));
    }
    for &s in b.grid.nodes() {
        put_f64(&mut out, s);
    }
    for phi in &b.phi {
        for i in 0..n {
            for j in 0..n {
                put_f64(&mut out, phi[(i, j)]);
            }
        }
    }
    for tr in &b.tuples {
        put_u32(&mut out, tr.level);
        put_u32(&mut out, tr.index);
        for v in tr.xi.iter().chain(&tr.lambda) {
            for &x in v.iter() {
                put_f64(&mut out, x);
            }
        }
        for &q in &tr.q {
            put_f64(&mut out, q);
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.buf.len() {
            return Err(Error::BundleFormat("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vector(&mut self, n: usize) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(n);
        for x in v.iter_mut() {
            *x = self.f64()?;
        }
        Ok(v)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<CharacteristicBundle> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::BundleFormat("missing magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::BundleVersion {
            found: version,
            expected: VERSION,
        });
    }
    if bytes.len() < 40 {
        return Err(Error::BundleChecksum);
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(Error::BundleChecksum);
    }
    let mut r = Reader { buf: body, pos: 8 };
    let n = r.u32()?;
    let num_levels = r.u32()?;
    let num_tuples = r.u32()?;
    let nodes = r.u32()?;
    let t0 = r.f64()?;
    let t_final = r.f64()?;
    let step = r.f64()?;
    let config_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let seed = r.u64()?;
    let lipschitz = r.f64()?;
    if n == 0 || num_levels == 0 || nodes < 2 {
        return Err(Error::BundleFormat("empty dimensions".into()));
    }

    let mut headers = Vec::with_capacity(num_levels);
    for _ in 0..num_levels {
        let gamma = r.f64()?;
        let requested = r.u32()?;
        let stored = r.u32()?;
        let degenerate = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::BundleFormat(format!("bad degenerate flag {v}"))),
        };
        headers.push((gamma, requested, stored, degenerate));
    }
    if headers.iter().map(|h| h.2).sum::<usize>() != num_tuples {
        return Err(Error::BundleFormat("level counts do not add up to the tuple count".into()));
    }

    let grid = TimeGrid::new(t0, t_final, step)?;
    let mut times = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        times.push(r.f64()?);
    }
    if grid.len() != nodes || grid.nodes().iter().zip(&times).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::BundleFormat("stored node times do not match the grid".into()));
    }
    let mut phi = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = r.f64()?;
            }
        }
        phi.push(m);
    }

    let mut levels: Vec<Level> = headers
        .iter()
        .map(|&(gamma, requested, stored, degenerate)| Level {
            gamma,
            requested,
            degenerate,
            points: Vec::with_capacity(stored),
            subgradients: Vec::with_capacity(stored),
        })
        .collect();
    let mut tuples = Vec::with_capacity(num_tuples);
    for _ in 0..num_tuples {
        let level = r.u32()?;
        let index = r.u32()?;
        let lvl = levels
            .get_mut(level)
            .ok_or_else(|| Error::BundleFormat(format!("tuple refers to level {level}")))?;
        if index != lvl.points.len() || index >= headers[level].2 {
            return Err(Error::BundleFormat("tuples are out of order".into()));
        }
        let xi = (0..nodes).map(|_| r.vector(n)).collect::<Result<Vec<_>>>()?;
        let lambda = (0..nodes).map(|_| r.vector(n)).collect::<Result<Vec<_>>>()?;
        let q = (0..nodes).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        lvl.points.push(xi[0].clone());
        lvl.subgradients.push(lambda[0].clone());
        tuples.push(Trajectory {
            level,
            index,
            xi,
            lambda,
            q,
        });
    }
    if r.pos != body.len() {
        return Err(Error::BundleFormat("trailing bytes".into()));
    }
    Ok(CharacteristicBundle {
        grid,
        levels: LevelData { levels },
        lipschitz,
        phi,
        tuples,
        seed,
        config_hash,
    })
}

pub fn save_bundle(bundle: &CharacteristicBundle, path: &Path) -> Result<u64> {
    let bytes = to_bytes(bundle);
    std::fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

pub fn load_bundle(path: &Path) -> Result<CharacteristicBundle> {
    from_bytes(&std::fs::read(path)?)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.as_slice())
}

/// Debug dump. Floats print in shortest round-trip form.
pub fn to_json(b: &CharacteristicBundle) -> Value {
    let n = b.dim();
    json!({
        "version": VERSION,
        "n": n,
        "t0": b.grid.t0,
        "t_final": b.grid.t_final,
        "step": b.grid.step,
        "seed": b.seed,
        "config_hash": hex(&b.config_hash),
        "lipschitz": b.lipschitz,
        "times": b.grid.nodes(),
        "levels": b.levels.levels.iter().map(|l| json!({
            "gamma": l.gamma,
            "requested": l.requested,
            "stored": l.points.len(),
            "degenerate": l.degenerate,
        })).collect::<Vec<_>>(),
        "phi": b.phi.iter().map(|m| (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "tuples": b.tuples.iter().map(|t| json!({
            "level": t.level,
            "index": t.index,
            "xi": t.xi.iter().map(vec_json).collect::<Vec<_>>(),
            "lambda": t.lambda.iter().map(vec_json).collect::<Vec<_>>(),
            "q": t.q,
        })).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::precompute;
    use crate::presets;

    fn bundle() -> CharacteristicBundle {
        let (sys, cost, gammas, counts, grid) = presets::example_problem_small();
        let mut b = precompute(&sys, &cost, &gammas, &counts, &grid, 3).unwrap();
        b.config_hash = [7; 32];
        b
    }

    #[test]
    fn round_trip_is_exact() {
        let b = bundle();
        let bytes = to_bytes(&b);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn truncation_and_corruption_fail_checksum() {
        let bytes = to_bytes(&bundle());
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(Error::BundleChecksum)));
        assert!(matches!(from_bytes(&bytes[..100]), Err(Error::BundleChecksum)));
        let mut bad = bytes.clone();
        bad[200] ^= 1;
        assert!(matches!(from_bytes(&bad), Err(Error::BundleChecksum)));
    }

    #[test]
    fn version_zero_is_rejected() {
        let mut bytes = to_bytes(&bundle());
        bytes[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::BundleVersion { found: 0, expected: 1 })
        ));
        assert!(matches!(from_bytes(b"nope"), Err(Error::BundleFormat(_))));
    }

    #[test]
    fn json_floats_round_trip() {
        let b = bundle();
        let v = to_json(&b);
        let text = serde_json::to_string(&v).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        let q0 = back["tuples"][5]["q"][17].as_f64().unwrap();
        assert_eq!(q0.to_bits(), b.tuples[5].q[17].to_bits());
        assert_eq!(back["tuples"].as_array().unwrap().len(), b.tuples.len());
    }
}
