//! Binary projector checkpoints (`GWMP`).
//!
//! Layout, little-endian throughout: magic `GWMP`, format version (u32), hops `L`
//! (u32), `d_in` (u32), `d_out` (u32), activation (u32: 0 tanh, 1 identity), then for
//! each hop `0..=L` the weight matrix row-major followed by the bias, all f32.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::embed::{Activation, AffineMap, Projector};
use crate::error::{GwmError, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GWMP";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 5 * 4;

pub fn projector_to_bytes<T: Scalar>(p: &Projector<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * p.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let act = match p.activation() {
        Activation::Tanh => 0u32,
        Activation::Identity => 1,
    };
    for v in [CHECKPOINT_FORMAT_VERSION, p.hops() as u32, p.d_in() as u32, p.d_out() as u32, act] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for layer in p.layers() {
        for v in layer.weight.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    out
}

pub fn projector_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Projector<T>> {
    let bad = |m: &str| GwmError::SchemaViolation(format!("projector checkpoint: {m}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let (version, hops, d_in, d_out, act) = (field(0), field(1), field(2), field(3), field(4));
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let activation = match act {
        0 => Activation::Tanh,
        1 => Activation::Identity,
        other => return Err(bad(&format!("unknown activation code {other}"))),
    };
    let (hops, d_in, d_out) = (hops as usize, d_in as usize, d_out as usize);
    let per_layer = d_out
        .checked_mul(d_in)
        .and_then(|n| n.checked_add(d_out))
        .ok_or_else(|| bad("dimensions overflow"))?;
    let expected = per_layer
        .checked_mul(hops + 1)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("dimensions overflow"))?;
    if bytes.len() - HEADER_LEN != expected {
        return Err(bad(&format!("body has {} bytes, header implies {expected}", bytes.len() - HEADER_LEN)));
    }
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| T::of_f32(f32::from_le_bytes(c.try_into().expect("4 bytes"))));
    let layers = (0..=hops)
        .map(|_| {
            let weight = Array2::from_shape_simple_fn((d_out, d_in), || values.next().expect("length checked"));
            let bias = Array1::from_shape_simple_fn(d_out, || values.next().expect("length checked"));
            AffineMap { weight, bias }
        })
        .collect();
    Projector::new(layers, activation).map_err(|e| bad(&e.to_string()))
}

pub fn save_projector<T: Scalar>(p: &Projector<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, projector_to_bytes(p))?;
    Ok(())
}

pub fn load_projector<T: Scalar>(path: impl AsRef<Path>) -> Result<Projector<T>> {
    projector_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_projector_round_trips_exactly() {
        let p = Projector::<f32>::random(2, 3, 4, Activation::Identity, 9);
        let b = projector_to_bytes(&p);
        assert_eq!(b.len(), 24 + 4 * 3 * (12 + 4));
        assert_eq!(projector_from_bytes::<f32>(&b).unwrap(), p);
        for cut in 0..b.len() {
            assert!(matches!(projector_from_bytes::<f32>(&b[..cut]), Err(GwmError::SchemaViolation(_))));
        }
    }
}
