//! Flat binary weight format.
//!
//! Header: magic `BAMSPW01`, scale mode (u8 tag + f64), layer count (u32);
//! per layer `in, out` (u32), quantize flag, activation tag, bias flag (u8),
//! activation clip and `α` (f64). Then every layer's weights followed by its
//! bias, as little-endian IEEE-754 doubles.

use std::io::{Read, Write};

use crate::binarize::ScaleMode;
use crate::error::{Error, Result};

use super::{Activation, BinaryLinear, Model};

const MAGIC: &[u8; 8] = b"BAMSPW01";

fn io_err(e: std::io::Error) -> Error {
    Error::Domain(format!("weight file I/O: {e}"))
}

pub fn save_weights(model: &Model, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let (tag, value) = match model.scale() {
        ScaleMode::MeanAbs => (0u8, 0.0),
        ScaleMode::Fixed(c) => (1u8, c),
    };
    buf.push(tag);
    buf.extend_from_slice(&value.to_le_bytes());
    buf.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for l in model.layers() {
        buf.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
        let (act, clip) = match l.activation() {
            Activation::Identity => (0u8, 0.0),
            Activation::Sign { clip } => (1u8, clip),
            Activation::HardTanh => (2u8, 1.0),
        };
        buf.extend_from_slice(&[
            u8::from(l.quantize_weights()),
            act,
            u8::from(l.bias().is_some()),
        ]);
        buf.extend_from_slice(&clip.to_le_bytes());
        buf.extend_from_slice(&l.alpha(model.scale())?.to_le_bytes());
    }
    for x in model.params() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf).map_err(io_err)
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(Error::Domain("truncated weight file".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn load_weights(mut input: impl Read) -> Result<Model> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let mut c = Cursor(&bytes);
    if c.take(8)? != MAGIC {
        return Err(Error::Domain("not a weight file".into()));
    }
    let scale = match (c.u8()?, c.f64()?) {
        (0, _) => ScaleMode::MeanAbs,
        (1, v) => ScaleMode::Fixed(v),
        (t, _) => return Err(Error::Domain(format!("unknown scale tag {t}"))),
    };
    let n = c.u32()? as usize;
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, o) = (c.u32()? as usize, c.u32()? as usize);
        let (quantize, act, has_bias) = (c.u8()? != 0, c.u8()?, c.u8()? != 0);
        let clip = c.f64()?;
        let _alpha = c.f64()?;
        let activation = match act {
            0 => Activation::Identity,
            1 => Activation::Sign { clip },
            2 => Activation::HardTanh,
            t => return Err(Error::Domain(format!("unknown activation tag {t}"))),
        };
        shapes.push((i, o, quantize, activation, has_bias));
    }
    let mut layers = Vec::with_capacity(n);
    for (i, o, quantize, activation, has_bias) in shapes {
        let w = (0..i * o).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        let b = if has_bias {
            Some((0..o).map(|_| c.f64()).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        layers.push(BinaryLinear::new(i, o, w, b, quantize, activation)?);
    }
    if !c.0.is_empty() {
        return Err(Error::Domain("trailing bytes in weight file".into()));
    }
    Model::new(layers, scale)
}
