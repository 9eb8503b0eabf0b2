//! Binary network checkpoints. The layout is described in
//! `docs/checkpoint-format.md`; all integers and floats are little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{Activation, DenseLayer, DenseNetwork, DropoutScaling};

const MAGIC: &[u8; 8] = b"UANET\0\0\0";
const VERSION: u32 = 1;

pub fn encode_network(net: &DenseNetwork) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    b.push(match net.scaling() {
        DropoutScaling::None => 0,
        DropoutScaling::Inverted => 1,
    });
    b.extend_from_slice(&net.dropconnect().to_le_bytes());
    for p in net.dropout() {
        b.extend_from_slice(&p.to_le_bytes());
    }
    for layer in net.layers() {
        b.extend_from_slice(&(layer.in_dim as u32).to_le_bytes());
        b.extend_from_slice(&(layer.out_dim as u32).to_le_bytes());
        let name = layer.activation.name().as_bytes();
        b.push(name.len() as u8);
        b.extend_from_slice(name);
        for w in layer.weights.iter().chain(&layer.bias) {
            b.extend_from_slice(&w.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&b);
    b.extend_from_slice(&digest[..8]);
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode_network(bytes: &[u8]) -> Result<DenseNetwork> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("not a network checkpoint".into()));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 8);
    if Sha256::digest(body)[..8] != *sum {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(Error::Checkpoint("no layers".into()));
    }
    let scaling = match r.u8()? {
        0 => DropoutScaling::None,
        1 => DropoutScaling::Inverted,
        other => return Err(Error::Checkpoint(format!("unknown scaling tag {other}"))),
    };
    let dropconnect = r.f64()?;
    let dropout = r.f64s(count - 1)?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let len = r.u8()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("activation name is not UTF-8".into()))?;
        let activation = Activation::from_name(name)
            .ok_or_else(|| Error::UnsupportedActivation(name.to_string()))?;
        let weights = r.f64s(in_dim * out_dim)?;
        let bias = r.f64s(out_dim)?;
        layers.push(DenseLayer::new(in_dim, out_dim, weights, bias, activation)?);
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            body.len() - r.pos
        )));
    }
    Ok(DenseNetwork::new(layers, dropout, dropconnect)?.with_scaling(scaling))
}

pub fn save_network(net: &DenseNetwork, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_network(net)).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<DenseNetwork> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes)
}
