//! Model artifact: little-endian binary.
//!
//! ```text
//! "ITMC" | version u16 = 1 | input_dim u32 | hidden_dim u32 |
//! w1 (hidden x input) | b1 (hidden) | w2 (2 x hidden) | b2 (2)   all f64
//! ```

use std::fs;
use std::path::Path;

use super::head::MlpHead;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"ITMC";
pub const MODEL_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

impl MlpHead {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.w1.len() + self.b1.len() + self.w2.len() + 2;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_dim as u32).to_le_bytes());
        for v in self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "model artifact truncated: {} bytes, header needs {HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MODEL_MAGIC {
            return Err(Error::Format(format!("bad model magic {:?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let input_dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let hidden_dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Format("model dims must be >= 1".into()));
        }
        let overflow = || Error::Format(format!("model dims overflow: {hidden_dim} x {input_dim}"));
        let n_w1 = hidden_dim.checked_mul(input_dim).ok_or_else(overflow)?;
        let n_w2 = hidden_dim.checked_mul(2).ok_or_else(overflow)?;
        let n_params = n_w1
            .checked_add(hidden_dim)
            .and_then(|n| n.checked_add(n_w2))
            .and_then(|n| n.checked_add(2))
            .ok_or_else(overflow)?;
        let expected = n_params
            .checked_mul(8)
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(overflow)?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "model artifact has {} bytes, header implies {expected}",
                bytes.len()
            )));
        }

        let mut values = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<f64>>();
        let w1 = take(n_w1);
        let b1 = take(hidden_dim);
        let w2 = take(n_w2);
        let b2 = take(2);
        MlpHead::from_parameters(input_dim, hidden_dim, w1, b1, w2, [b2[0], b2[1]])
            .map_err(|e| Error::Format(format!("model artifact: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let mut head = MlpHead::init(5, 3, 17).unwrap();
        head.set_b2([0.125, -3.5]);
        let bytes = head.to_bytes();
        assert_eq!(&bytes[0..4], b"ITMC");
        assert_eq!(bytes.len(), HEADER_LEN + 8 * (15 + 3 + 6 + 2));
        assert_eq!(MlpHead::from_bytes(&bytes).unwrap(), head);
    }

    #[test]
    fn header_layout() {
        let bytes = MlpHead::zeros(768, 256).to_bytes();
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &768u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &256u32.to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_artifacts() {
        let good = MlpHead::init(4, 2, 1).unwrap().to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(MlpHead::from_bytes(&bad_magic), Err(Error::Format(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(MlpHead::from_bytes(&bad_version).is_err());

        assert!(MlpHead::from_bytes(&good[..good.len() - 1]).is_err());
        assert!(MlpHead::from_bytes(&good[..10]).is_err());

        let mut huge = good[..HEADER_LEN].to_vec();
        huge[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(MlpHead::from_bytes(&huge).is_err());

        let mut nan = good.clone();
        nan[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(MlpHead::from_bytes(&nan).is_err());
    }
}
