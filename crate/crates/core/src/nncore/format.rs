//! Binary model format.
//!
//! Little-endian throughout:
//! - magic `b"PRFM"`
//! - format version: u16
//! - layer count: u32
//! - per layer: input_dim u32, output_dim u32, activation u8, then
//!   `input_dim * output_dim` f32 weights (row-major, input-major) and
//!   `output_dim` f32 biases.
//!
//! Bit 7 of the activation byte flags a normalization layer; its
//! gamma, beta, running mean and running variance follow the biases as
//! `output_dim` f32 each.

use std::io::{Read, Write};
use std::path::Path;

use super::matrix::{Matrix, Scalar};
use super::mlp::{Activation, BatchNorm, Layer, LayerSpec, Mlp};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"PRFM";
pub const MODEL_VERSION: u16 = 1;
const NORM_FLAG: u8 = 0x80;

pub fn write_model<T: Scalar, W: Write>(model: &Mlp<T>, mut w: W) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(model.layers().len() as u32).to_le_bytes())?;
    for layer in model.layers() {
        let s = layer.spec;
        w.write_all(&(s.input_dim as u32).to_le_bytes())?;
        w.write_all(&(s.output_dim as u32).to_le_bytes())?;
        let flag = if layer.norm.is_some() { NORM_FLAG } else { 0 };
        w.write_all(&[s.activation.code() | flag])?;
        write_f32s(&mut w, layer.weights.data())?;
        write_f32s(&mut w, &layer.bias)?;
        if let Some(bn) = &layer.norm {
            for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                write_f32s(&mut w, v)?;
            }
        }
    }
    Ok(())
}

pub fn read_model<T: Scalar, R: Read>(mut r: R) -> Result<Mlp<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let input_dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let output_dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let [code] = read_array::<1, _>(&mut r)?;
        let activation = Activation::from_code(code & !NORM_FLAG)
            .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
        let has_norm = code & NORM_FLAG != 0;
        let weights = read_f32s::<T, _>(&mut r, input_dim * output_dim)?;
        let bias = read_f32s(&mut r, output_dim)?;
        let norm = if has_norm {
            Some(BatchNorm {
                gamma: read_f32s(&mut r, output_dim)?,
                beta: read_f32s(&mut r, output_dim)?,
                running_mean: read_f32s(&mut r, output_dim)?,
                running_var: read_f32s(&mut r, output_dim)?,
            })
        } else {
            None
        };
        layers.push(Layer {
            spec: LayerSpec::new(input_dim, output_dim, activation).with_batch_norm(has_norm),
            weights: Matrix::from_vec(input_dim, output_dim, weights)?,
            bias,
            norm,
        });
    }
    Mlp::from_layers(layers, 0)
}

pub fn save_model<T: Scalar>(model: &Mlp<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    crate::experiment::write_atomic(path, &buf)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<Mlp<T>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    read_model(&bytes[..])
}

pub(crate) fn write_f32s<T: Scalar, W: Write>(w: &mut W, values: &[T]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f32s<T: Scalar, R: Read>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    let out: Vec<T> = buf
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite parameter".into()));
    }
    Ok(out)
}

pub(crate) fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::mlp::stack;
    use crate::nncore::mlp::Mode;

    #[test]
    fn header_layout_is_bit_exact() {
        let mut net = Mlp::<f32>::new(vec![LayerSpec::new(2, 1, Activation::Sigmoid)], 0).unwrap();
        net.params_mut()[0].copy_from_slice(&[1.0, -2.0]);
        net.params_mut()[1].copy_from_slice(&[0.5]);
        let mut buf = Vec::new();
        write_model(&net, &mut buf).unwrap();
        let mut expected = b"PRFM".to_vec();
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(3);
        for v in [1.0f32, -2.0, 0.5] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(buf, expected);
    }

    #[test]
    fn round_trip_with_batch_norm() {
        let mut net = Mlp::<f32>::with_init_std(
            stack(&[3, 4, 2], Activation::Relu, Activation::Softmax, true),
            9,
            0.3,
        )
        .unwrap();
        let x = Matrix::from_rows(&[[1.0f32, 0.0, 2.0], [0.0, 1.0, -1.0]]).unwrap();
        let trace = net.forward_trace(&x, Mode::Train).unwrap();
        net.update_running_stats(&trace);
        let mut buf = Vec::new();
        write_model(&net, &mut buf).unwrap();
        let back: Mlp<f32> = read_model(&buf[..]).unwrap();
        assert_eq!(back.layers(), net.layers());
        assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn rejects_corrupt_files() {
        assert!(matches!(
            read_model::<f32, _>(&b"XXXX"[..]),
            Err(Error::Format(_))
        ));
        let net = Mlp::<f32>::new(vec![LayerSpec::new(2, 2, Activation::Softmax)], 0).unwrap();
        let mut buf = Vec::new();
        write_model(&net, &mut buf).unwrap();
        assert!(matches!(
            read_model::<f32, _>(&buf[..buf.len() - 1]),
            Err(Error::Format(_))
        ));
        buf[10] = 99; // first layer's input_dim low byte
        assert!(read_model::<f32, _>(&buf[..]).is_err());
    }
}
