//! Binary parameter files.
//!
//! Network layout: magic `BGNET`, a format byte, the layer count as `u32`,
//! then `(inputs: u32, outputs: u32, activation: u8)` per layer, then each
//! layer's weights (row-major) and bias as little-endian `f64`.
//!
//! Optimiser layout: magic `BGADM`, a format byte, rate, beta1, beta2 and
//! epsilon as `f64`, the step count as `u64`, the layer count and shapes as
//! above, then all first moments followed by all second moments.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, AdamConfig, AdamState, Layer, Network};
use crate::{Error, Real, Result};

const NET_MAGIC: &[u8; 5] = b"BGNET";
const ADAM_MAGIC: &[u8; 5] = b"BGADM";
const FORMAT: u8 = 1;
/// Refuses absurd headers before allocating.
const MAX_ELEMENTS: u64 = 1 << 32;

fn io_err(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::format("payload", "file is truncated")
    } else {
        Error::format("payload", e.to_string())
    }
}

fn put_f64<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(b[0])
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn get_values<T: Real, R: Read>(r: &mut R, n: usize) -> Result<Vec<T>> {
    (0..n).map(|_| get_f64(r).map(T::lit)).collect()
}

fn check_header<R: Read>(r: &mut R, magic: &[u8; 5]) -> Result<()> {
    let mut m = [0u8; 5];
    r.read_exact(&mut m).map_err(io_err)?;
    if &m != magic {
        return Err(Error::format("magic", format!("expected {:?}, found {:?}", String::from_utf8_lossy(magic), m)));
    }
    let version = get_u8(r)?;
    if version != FORMAT {
        return Err(Error::format("version", format!("unsupported format {version}")));
    }
    Ok(())
}

fn put_shapes<W: Write>(w: &mut W, shapes: &[(usize, usize)]) -> Result<()> {
    w.write_all(&(shapes.len() as u32).to_le_bytes()).map_err(io_err)?;
    for &(i, o) in shapes {
        w.write_all(&(i as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(o as u32).to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

fn get_shape<R: Read>(r: &mut R, total: &mut u64) -> Result<(usize, usize)> {
    let i = get_u32(r)? as usize;
    let o = get_u32(r)? as usize;
    *total += (i as u64 + 1) * o as u64;
    if *total > MAX_ELEMENTS {
        return Err(Error::format("layer shape", "parameter count exceeds the supported size"));
    }
    Ok((i, o))
}

fn put_pairs<T: Real, W: Write>(w: &mut W, pairs: &[(Array2<T>, Array1<T>)]) -> Result<()> {
    for (m, b) in pairs {
        put_f64(w, m.iter().map(|v| v.as_f64()))?;
        put_f64(w, b.iter().map(|v| v.as_f64()))?;
    }
    Ok(())
}

fn get_pairs<T: Real, R: Read>(r: &mut R, shapes: &[(usize, usize)]) -> Result<Vec<(Array2<T>, Array1<T>)>> {
    shapes
        .iter()
        .map(|&(i, o)| {
            let m = Array2::from_shape_vec((i, o), get_values(r, i * o)?).expect("length matches shape");
            let b = Array1::from(get_values(r, o)?);
            Ok((m, b))
        })
        .collect()
}

pub fn write_network<T: Real, W: Write>(net: &Network<T>, w: &mut W) -> Result<()> {
    w.write_all(NET_MAGIC).map_err(io_err)?;
    w.write_all(&[FORMAT]).map_err(io_err)?;
    w.write_all(&(net.n_layers() as u32).to_le_bytes()).map_err(io_err)?;
    for l in net.layers() {
        w.write_all(&(l.inputs() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(l.outputs() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&[l.activation.code()]).map_err(io_err)?;
    }
    for l in net.layers() {
        put_f64(w, l.weights.iter().map(|v| v.as_f64()))?;
        put_f64(w, l.bias.iter().map(|v| v.as_f64()))?;
    }
    Ok(())
}

pub fn read_network<T: Real, R: Read>(r: &mut R) -> Result<Network<T>> {
    check_header(r, NET_MAGIC)?;
    let n = get_u32(r)? as usize;
    let mut total = 0;
    let mut shapes = Vec::new();
    let mut activations = Vec::new();
    for k in 0..n {
        shapes.push(get_shape(r, &mut total)?);
        let code = get_u8(r)?;
        activations.push(
            Activation::from_code(code).ok_or_else(|| Error::format("activation", format!("layer {k} has unknown code {code}")))?,
        );
    }
    let layers = get_pairs(r, &shapes)?
        .into_iter()
        .zip(activations)
        .map(|((weights, bias), activation)| Layer { weights, bias, activation })
        .collect();
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err)? != 0 {
        return Err(Error::format("payload", "trailing bytes after the last layer"));
    }
    Network::new(layers)
}

pub fn save_network<T: Real>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_network(net, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_network<T: Real>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    read_network(&mut r)
}

pub fn save_adam<T: Real>(adam: &AdamState<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    w.write_all(ADAM_MAGIC).map_err(io_err)?;
    w.write_all(&[FORMAT]).map_err(io_err)?;
    let c = adam.config;
    put_f64(&mut w, [c.rate, c.beta1, c.beta2, c.epsilon].into_iter())?;
    w.write_all(&adam.steps.to_le_bytes()).map_err(io_err)?;
    let shapes: Vec<_> = adam.first.iter().map(|(m, _)| m.dim()).collect();
    put_shapes(&mut w, &shapes)?;
    put_pairs(&mut w, &adam.first)?;
    put_pairs(&mut w, &adam.second)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_adam<T: Real>(path: impl AsRef<Path>) -> Result<AdamState<T>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    check_header(&mut r, ADAM_MAGIC)?;
    let config = AdamConfig { rate: get_f64(&mut r)?, beta1: get_f64(&mut r)?, beta2: get_f64(&mut r)?, epsilon: get_f64(&mut r)? };
    config.validate()?;
    let steps = get_u64(&mut r)?;
    let n = get_u32(&mut r)? as usize;
    let mut total = 0;
    let shapes = (0..n).map(|_| get_shape(&mut r, &mut total)).collect::<Result<Vec<_>>>()?;
    let first = get_pairs(&mut r, &shapes)?;
    let second = get_pairs(&mut r, &shapes)?;
    Ok(AdamState { config, steps, first, second })
}
