//! Binary parameter file: magic, header `(V, dim, N, T, vocab)`, then the
//! embedding table, head and bias as little-endian `f64`, row-major.

use std::fs;
use std::path::Path;

use super::ToyModel;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SALADTOY";
const VERSION: u32 = 1;

pub fn save_model(model: &ToyModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.sides as u32).to_le_bytes());
    buf.extend_from_slice(&(model.vocab.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(model.dim as u64).to_le_bytes());
    buf.extend_from_slice(&(model.n_classes as u64).to_le_bytes());
    buf.extend_from_slice(&model.temperature.to_le_bytes());
    for w in &model.vocab {
        buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
        buf.extend_from_slice(w.as_bytes());
    }
    for v in model.emb.iter().chain(&model.head).chain(&model.bias) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err("truncated file")),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| self.err("size overflow"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn err(&self, message: &str) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: 0,
            message: format!("{message} at byte {}", self.pos),
        }
    }
}

pub fn load_model(path: &Path) -> Result<ToyModel> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { buf: &buf, pos: 0, path };
    if c.take(8)? != MAGIC {
        return Err(c.err("not a toy model file"));
    }
    if c.u32()? != VERSION {
        return Err(c.err("unsupported version"));
    }
    let sides = c.u32()? as usize;
    let v = c.u64()?;
    let dim = c.u64()?;
    let n = c.u64()?;
    let t = c.f64()?;
    if !(1..=2).contains(&sides) || n < 2 || dim == 0 || !(t > 0.0) {
        return Err(c.err("invalid header"));
    }
    let mut vocab = Vec::with_capacity(v);
    for _ in 0..v {
        let len = c.u32()? as usize;
        let bytes = c.take(len)?;
        vocab.push(String::from_utf8(bytes.to_vec()).map_err(|_| c.err("vocab is not UTF-8"))?);
    }
    let emb = c.f64s(v * dim)?;
    let head = c.f64s(sides * dim * n)?;
    let bias = c.f64s(n)?;
    if c.pos != buf.len() {
        return Err(c.err("trailing bytes"));
    }
    if emb.iter().chain(&head).chain(&bias).any(|x| !x.is_finite()) {
        return Err(c.err("non-finite parameter"));
    }
    Ok(ToyModel::from_parts(vocab, dim, n, sides, emb, head, bias, t))
}
