//! Named parameter storage, initialisation and checkpoints.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VXPT";
const VERSION: u32 = 1;

/// Parameters keyed by dotted name, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.params.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Adds a Glorot-uniform `[d_in, d_out]` weight `<prefix>.w` and a zero
    /// bias `<prefix>.b`.
    pub fn add_dense(&mut self, prefix: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) {
        let limit = (6.0 / (d_in + d_out).max(1) as f64).sqrt();
        let w = (0..d_in * d_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        self.insert(format!("{prefix}.w"), Tensor::from_parts(vec![d_in, d_out], w));
        self.insert(format!("{prefix}.b"), Tensor::zeros([d_out]));
    }

    /// Copies every entry of `other` into `self`, replacing same-named ones.
    pub fn merge(&mut self, other: ParamStore) {
        self.params.extend(other.params);
    }

    /// Entries whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in &self.params {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::CorruptFile("not a checkpoint (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::UnsupportedFormat(format!("checkpoint version {version}")));
        }
        let count = read_u32(r)?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            if len > 4096 {
                return Err(Error::CorruptFile(format!("parameter name of {len} bytes")));
            }
            let mut name = vec![0u8; len];
            read_exact(r, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::CorruptFile("parameter name is not UTF-8".into()))?;
            let ndim = read_u32(r)? as usize;
            if ndim > 8 {
                return Err(Error::CorruptFile(format!("`{name}` has {ndim} dimensions")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                read_exact(r, &mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= 1 << 32)
                .ok_or_else(|| Error::CorruptFile(format!("`{name}` shape {shape:?} too large")))?;
            let mut data = Vec::with_capacity(numel);
            let mut b = [0u8; 8];
            for _ in 0..numel {
                read_exact(r, &mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            store.insert(name, Tensor::from_parts(shape, data));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(Error::with_path(path))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(Error::with_path(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(Error::with_path(path))?;
        Self::read_from(&mut BufReader::new(f))
            .map_err(|e| e.context(format!("loading {}", path.display())))
    }

    /// Errors unless every name in `expected` is present with the given shape.
    pub fn check_shapes<'a>(&self, expected: impl IntoIterator<Item = (&'a str, &'a [usize])>) -> Result<()> {
        for (name, shape) in expected {
            match self.get(name) {
                None => return Err(Error::invalid(format!("checkpoint lacks `{name}`"))),
                Some(t) if t.shape() != shape => {
                    return Err(Error::shape(format!(
                        "`{name}` is {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::CorruptFile("checkpoint is truncated".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut rng = crate::seed::rng(1);
        let mut s = ParamStore::new();
        s.add_dense("a.x", 3, 4, &mut rng);
        s.add_dense("b", 4, 1, &mut rng);
        s.insert("c", Tensor::scalar(-0.0));
        s
    }

    #[test]
    fn glorot_bounds() {
        let s = store();
        let lim = (6.0f64 / 7.0).sqrt();
        assert!(s.get("a.x.w").unwrap().data().iter().all(|v| v.abs() <= lim));
        assert!(s.get("a.x.b").unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(s.numel(), 12 + 4 + 4 + 1 + 1);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let s = store();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = ParamStore::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), s.len());
        for ((n1, t1), (n2, t2)) in s.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn corrupt_checkpoints() {
        let s = store();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(ParamStore::read_from(&mut &cut[..]), Err(Error::CorruptFile(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(ParamStore::read_from(&mut bad.as_slice()), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn shape_check() {
        let s = store();
        assert!(s.check_shapes([("b.w", &[4usize, 1][..])]).is_ok());
        assert!(s.check_shapes([("b.w", &[1usize, 4][..])]).is_err());
        assert!(s.check_shapes([("zz", &[1usize][..])]).is_err());
    }
}
