//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ASDF" | version: u32
//! meta_count: u32 | { key_len: u32, key, value_len: u32, value }*
//! param_count: u32 | { name_len: u32, name, ndim: u32, dims: u32*, values: f64* }*
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{AutodiffError, ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"ASDF";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters plus string metadata (variant, heatmap resolution, ...).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_u32(&mut out, self.meta.len());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.params.len());
        for (name, t) in self.params.iter() {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AutodiffError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(AutodiffError::Checkpoint("bad magic, expected \"ASDF\"".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(AutodiffError::Checkpoint(format!(
                "unsupported version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let mut meta = Vec::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            meta.push((k, v));
        }
        let mut params = ParamStore::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| AutodiffError::Checkpoint("size overflow".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        if r.pos != bytes.len() {
            return Err(AutodiffError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), AutodiffError> {
        let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, AutodiffError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| io_err(path, e))?;
        Self::from_bytes(&bytes)
            .map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> AutodiffError {
    AutodiffError::Checkpoint(format!("{}: {e}", path.display()))
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AutodiffError> {
        if self.buf.len() - self.pos < n {
            return Err(AutodiffError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, AutodiffError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| AutodiffError::Checkpoint("name is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params.insert("sdf_h.l0.weight", Tensor::matrix(2, 3, vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5e-300, -7.25, 1e300])).unwrap();
        params.insert("sdf_h.l0.bias", Tensor::row(&[0.1, 0.2, 0.3])).unwrap();
        Checkpoint { meta: vec![("heatmap_res".into(), "16".into())], params }
    }

    #[test]
    fn header_layout() {
        let b = sample().to_bytes();
        assert_eq!(&b[..4], b"ASDF");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), CHECKPOINT_VERSION);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut b = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 3]).is_err());
        b[0] = b'X';
        assert!(Checkpoint::from_bytes(&b).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let mut params = ParamStore::new();
            params.insert("w", Tensor::row(&vals)).unwrap();
            let c = Checkpoint { meta: vec![("k".into(), "v".into())], params };
            let bytes = c.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            let a: Vec<u64> = back.params.get("w").unwrap().data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = vals.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
