//! Binary model file. Layout (all integers `u32` LE, floats `f64` LE):
//!
//! ```text
//! magic            8 bytes  "PKDENSv1"
//! format_version   u32      = 1
//! num_estimators   u32
//! alpha            u32
//! gamma            u32
//! in_features      u32
//! out_features     u32
//! n_hidden         u32
//! hidden_widths    n_hidden x u32
//! dropout_enabled  u8       0 | 1
//! dropout_p        f64
//! n_layers         u32
//! per layer:       role u8 (0 first, 1 hidden, 2 last),
//!                  in_width, out_width, groups, per_group_in, per_group_out (u32 each)
//! per layer:       weights (groups*per_group_out*per_group_in f64), then biases (out_width f64)
//! ```
//!
//! The plan table must equal the plans derived from the stored spec.

use std::fs;
use std::path::Path;

use super::params::{LayerParams, Params};
use super::spec::{plan_layers, LayerPlan, LayerRole, PackedSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PKDENSv1";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_model(spec: &PackedSpec, params: &Params) -> Result<Vec<u8>> {
    let plans = plan_layers(spec)?;
    params.check_shapes(&plans)?;

    let mut buf = Vec::with_capacity(64 + 8 * params.len());
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    for v in [
        spec.num_estimators,
        spec.alpha,
        spec.gamma,
        spec.in_features,
        spec.out_features,
        spec.hidden_widths.len(),
    ] {
        put_usize(&mut buf, v)?;
    }
    for &h in &spec.hidden_widths {
        put_usize(&mut buf, h)?;
    }
    buf.push(spec.dropout_enabled as u8);
    buf.extend_from_slice(&spec.dropout_p.to_le_bytes());
    put_usize(&mut buf, plans.len())?;
    for p in &plans {
        buf.push(match p.role {
            LayerRole::First => 0,
            LayerRole::Hidden => 1,
            LayerRole::Last => 2,
        });
        for v in [p.in_width, p.out_width, p.groups, p.per_group_in, p.per_group_out] {
            put_usize(&mut buf, v)?;
        }
    }
    for layer in &params.layers {
        for v in layer.weights.iter().chain(&layer.biases) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<(PackedSpec, Params)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let num_estimators = r.usize()?;
    let alpha = r.usize()?;
    let gamma = r.usize()?;
    let in_features = r.usize()?;
    let out_features = r.usize()?;
    let n_hidden = r.usize()?;
    let hidden_widths = (0..n_hidden).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let dropout_enabled = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::ModelFormat(format!("bad dropout flag {b}"))),
    };
    let dropout_p = r.f64()?;
    let spec = PackedSpec {
        num_estimators,
        alpha,
        gamma,
        in_features,
        out_features,
        hidden_widths,
        dropout_enabled,
        dropout_p,
    };
    let expected = plan_layers(&spec)?;

    let n_layers = r.usize()?;
    let mut plans = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let role = match r.take(1)?[0] {
            0 => LayerRole::First,
            1 => LayerRole::Hidden,
            2 => LayerRole::Last,
            b => return Err(Error::ModelFormat(format!("bad layer role {b}"))),
        };
        plans.push(LayerPlan {
            role,
            in_width: r.usize()?,
            out_width: r.usize()?,
            groups: r.usize()?,
            per_group_in: r.usize()?,
            per_group_out: r.usize()?,
        });
    }
    if plans != expected {
        return Err(Error::ModelFormat(
            "layer table does not match the stored architecture".into(),
        ));
    }

    let mut layers = Vec::with_capacity(plans.len());
    for p in &plans {
        let weights = (0..p.weight_count()).map(|_| r.f64()).collect::<Result<_>>()?;
        let biases = (0..p.out_width).map(|_| r.f64()).collect::<Result<_>>()?;
        layers.push(LayerParams { weights, biases });
    }
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok((spec, Params { layers }))
}

pub fn save_model(path: &Path, spec: &PackedSpec, params: &Params) -> Result<()> {
    let bytes = encode_model(spec, params)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(PackedSpec, Params)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_usize(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::ModelFormat(format!("{v} exceeds u32")))?;
    put_u32(buf, v);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::ModelFormat(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
