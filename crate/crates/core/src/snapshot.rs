//! Flat little-endian weight snapshots.
//!
//! EDLA layout:
//!
//! | field | encoding |
//! |---|---|
//! | magic | `EDLASNP1` (8 bytes) |
//! | version | u32 = 1 |
//! | n_in | u32 |
//! | L (hidden layers) | u32 |
//! | hidden sizes | L x u32 |
//! | hidden, output activation | u8, u8 (0 sigmoid, 1 relu, 2 identity) |
//! | rms enabled | u8 |
//! | gamma, init scale | f64, f64 |
//! | weights | per layer: blocks pp, pn, np, nn, each `n_post x (n_pre + 1)` row-major f64 |
//!
//! MLP layout: magic `MLPSNAP1`, version u32, hidden activation u8, layer
//! count u32, then per layer rows u32, cols u32 and the row-major f64 values.
//!
//! All integers and reals are little-endian.

use std::path::Path;

use crate::activation::ActivationKind;
use crate::error::{EdlaError, Result};
use crate::mlp::MlpNetwork;
use crate::network::{BlockKind, EdlaLayer, EdlaNetwork, EdlaSpec, RMS_GAIN};
use crate::tensor::Matrix;

const EDLA_MAGIC: &[u8; 8] = b"EDLASNP1";
const MLP_MAGIC: &[u8; 8] = b"MLPSNAP1";
const VERSION: u32 = 1;

pub fn encode_edla(net: &EdlaNetwork) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend(EDLA_MAGIC);
    b.extend(VERSION.to_le_bytes());
    b.extend((net.n_in() as u32).to_le_bytes());
    b.extend((net.depth() as u32).to_le_bytes());
    for &h in net.hidden_sizes() {
        b.extend((h as u32).to_le_bytes());
    }
    b.push(net.hidden_activation().code());
    b.push(net.output_activation().code());
    b.push(u8::from(net.rms_enabled()));
    b.extend(net.gamma().to_le_bytes());
    b.extend(net.init_scale().to_le_bytes());
    for layer in net.layers() {
        for kind in BlockKind::ALL {
            for v in layer.block(kind).iter() {
                b.extend(v.to_le_bytes());
            }
        }
    }
    b
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(EdlaError::format(self.path, "truncated snapshot"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.take(8)? != magic {
            return Err(EdlaError::format(self.path, "not a snapshot of this kind"));
        }
        let v = self.u32()?;
        if v != VERSION as usize {
            return Err(EdlaError::format(self.path, format!("unsupported snapshot version {v}")));
        }
        Ok(())
    }

    fn activation(&mut self) -> Result<ActivationKind> {
        let c = self.u8()?;
        ActivationKind::from_code(c)
            .ok_or_else(|| EdlaError::format(self.path, format!("unknown activation code {c}")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n <= (self.bytes.len() - self.at) / 8)
            .ok_or_else(|| EdlaError::format(self.path, "truncated snapshot"))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<_>>()?;
        Matrix::from_vec(rows, cols, data)
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(EdlaError::format(
                self.path,
                format!("{} trailing bytes", self.bytes.len() - self.at),
            ));
        }
        Ok(())
    }
}

pub fn decode_edla(bytes: &[u8], path: &Path) -> Result<EdlaNetwork> {
    let mut r = Reader { bytes, at: 0, path };
    r.header(EDLA_MAGIC)?;
    let n_in = r.u32()?;
    let depth = r.u32()?;
    if depth > (bytes.len() - r.at) / 4 {
        return Err(EdlaError::format(path, "truncated snapshot"));
    }
    let hidden: Vec<usize> = (0..depth).map(|_| r.u32()).collect::<Result<_>>()?;
    let hidden_act = r.activation()?;
    let output_act = r.activation()?;
    let rms = match r.u8()? {
        0 => false,
        1 => true,
        c => return Err(EdlaError::format(path, format!("bad rms flag {c}"))),
    };
    let gamma = r.f64()?;
    if gamma != RMS_GAIN {
        return Err(EdlaError::format(path, format!("unsupported RMS gain {gamma}")));
    }
    let init_scale = r.f64()?;
    let spec = EdlaSpec {
        n_in,
        hidden_sizes: hidden.clone(),
        hidden_activation: hidden_act,
        output_activation: output_act,
        rms_enabled: rms,
        init_scale,
    };
    let mut layers = Vec::with_capacity(depth + 1);
    let mut n_pre = n_in;
    for &n_post in hidden.iter().chain(std::iter::once(&1)) {
        let mut layer = EdlaLayer::zeros(0, 0);
        for kind in BlockKind::ALL {
            *layer.block_mut(kind) = r.matrix(n_post, n_pre + 1)?;
        }
        layers.push(layer);
        n_pre = n_post;
    }
    r.finish()?;
    EdlaNetwork::from_layers(&spec, layers).map_err(|e| EdlaError::format(path, e.to_string()))
}

pub fn save_edla(net: &EdlaNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, encode_edla(net)).map_err(|e| EdlaError::io(path, e))
}

pub fn load_edla(path: &Path) -> Result<EdlaNetwork> {
    let bytes = std::fs::read(path).map_err(|e| EdlaError::io(path, e))?;
    decode_edla(&bytes, path)
}

pub fn encode_mlp(net: &MlpNetwork) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend(MLP_MAGIC);
    b.extend(VERSION.to_le_bytes());
    b.push(net.hidden_activation().code());
    b.extend((net.layers().len() as u32).to_le_bytes());
    for w in net.layers() {
        b.extend((w.rows() as u32).to_le_bytes());
        b.extend((w.cols() as u32).to_le_bytes());
        for v in w.iter() {
            b.extend(v.to_le_bytes());
        }
    }
    b
}

pub fn decode_mlp(bytes: &[u8], path: &Path) -> Result<MlpNetwork> {
    let mut r = Reader { bytes, at: 0, path };
    r.header(MLP_MAGIC)?;
    let act = r.activation()?;
    let n = r.u32()?;
    if n > bytes.len() {
        return Err(EdlaError::format(path, "truncated snapshot"));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = r.u32()?;
        let cols = r.u32()?;
        layers.push(r.matrix(rows, cols)?);
    }
    r.finish()?;
    MlpNetwork::from_layers(layers, act).map_err(|e| EdlaError::format(path, e.to_string()))
}

pub fn save_mlp(net: &MlpNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, encode_mlp(net)).map_err(|e| EdlaError::io(path, e))
}

pub fn load_mlp(path: &Path) -> Result<MlpNetwork> {
    let bytes = std::fs::read(path).map_err(|e| EdlaError::io(path, e))?;
    decode_mlp(&bytes, path)
}
