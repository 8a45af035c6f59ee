//! PEMB: per-layer, time-mean pooled hidden states for one clip.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PEMB"
//! 4       4     u32 version (= 1)
//! 8       4     u32 n_layers
//! 12      4     u32 dim
//! 16      4·n   f32 values, layer-major (layer 0 first)
//! ```
//!
//! The file name carries clip and model: `<clip_id>.<model_name>.pemb`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PEMB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic {0:?}, expected \"PEMB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported PEMB version {0}")]
    VersionMismatch(u32),
    #[error("truncated PEMB data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid stack: {0}")]
    InvalidStack(String),
    #[error("layer {layer} out of range for {n_layers}-layer stack")]
    LayerOutOfRange { layer: usize, n_layers: usize },
    #[error("refusing to overwrite existing file {0}")]
    AlreadyExists(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStack {
    pub clip_id: String,
    pub model_name: String,
    pub n_layers: usize,
    pub dim: usize,
    /// `n_layers × dim`, layer-major.
    pub vectors: Vec<f32>,
}

impl EmbeddingStack {
    pub fn new(
        clip_id: impl Into<String>,
        model_name: impl Into<String>,
        n_layers: usize,
        dim: usize,
        vectors: Vec<f32>,
    ) -> Result<Self, EmbeddingError> {
        let s = Self {
            clip_id: clip_id.into(),
            model_name: model_name.into(),
            n_layers,
            dim,
            vectors,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.n_layers == 0 || self.dim == 0 {
            return Err(EmbeddingError::InvalidStack(format!(
                "shape {}x{} must be positive",
                self.n_layers, self.dim
            )));
        }
        if self.vectors.len() != self.n_layers * self.dim {
            return Err(EmbeddingError::InvalidStack(format!(
                "{} values for shape {}x{}",
                self.vectors.len(),
                self.n_layers,
                self.dim
            )));
        }
        if self.vectors.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidStack("non-finite value".into()));
        }
        Ok(())
    }

    /// Pooled vector for `layer`; layer 0 is the input embedding.
    pub fn layer_vector(&self, layer: usize) -> Result<&[f32], EmbeddingError> {
        if layer >= self.n_layers {
            return Err(EmbeddingError::LayerOutOfRange {
                layer,
                n_layers: self.n_layers,
            });
        }
        Ok(&self.vectors[layer * self.dim..(layer + 1) * self.dim])
    }

    pub fn file_name(&self) -> String {
        stack_file_name(&self.clip_id, &self.model_name)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.vectors.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, EmbeddingError> {
        self.validate()?;
        let n_layers = u32::try_from(self.n_layers)
            .map_err(|_| EmbeddingError::InvalidStack("n_layers exceeds u32".into()))?;
        let dim = u32::try_from(self.dim)
            .map_err(|_| EmbeddingError::InvalidStack("dim exceeds u32".into()))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&n_layers.to_le_bytes());
        out.extend_from_slice(&dim.to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Decodes a PEMB payload. Clip and model names come from the caller
    /// (normally the file name).
    pub fn from_bytes(
        bytes: &[u8],
        clip_id: impl Into<String>,
        model_name: impl Into<String>,
    ) -> Result<Self, EmbeddingError> {
        if bytes.len() < 4 {
            return Err(EmbeddingError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(EmbeddingError::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(EmbeddingError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != VERSION {
            return Err(EmbeddingError::VersionMismatch(version));
        }
        let (n_layers, dim) = (word(8) as usize, word(12) as usize);
        let expected = n_layers
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| EmbeddingError::InvalidStack("shape overflows".into()))?;
        if bytes.len() < expected {
            return Err(EmbeddingError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(EmbeddingError::InvalidStack(format!(
                "{} trailing bytes",
                bytes.len() - expected
            )));
        }
        let vectors = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::new(clip_id, model_name, n_layers, dim, vectors)
    }
}

pub fn stack_file_name(clip_id: &str, model_name: &str) -> String {
    format!("{clip_id}.{model_name}.pemb")
}

/// Writes a stack. Existing files are never rewritten.
pub fn write_stack(s: &EmbeddingStack, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    let bytes = s.to_bytes()?;
    let mut file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => EmbeddingError::AlreadyExists(path.to_path_buf()),
            _ => EmbeddingError::Io(e),
        })?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

/// Reads a stack; clip and model names are parsed from
/// `<clip_id>.<model_name>.pemb` when the name has that shape.
pub fn read_stack(path: impl AsRef<Path>) -> Result<EmbeddingStack, EmbeddingError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (clip_id, model_name) = names_from_path(path);
    EmbeddingStack::from_bytes(&bytes, clip_id, model_name)
}

fn names_from_path(path: &Path) -> (String, String) {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match stem.rsplit_once('.') {
        Some((clip, model)) => (clip.to_string(), model.to_string()),
        None => (stem, String::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn file_sizes() {
        let s = EmbeddingStack::new("c", "m", 2, 3, vec![0.0; 6]).unwrap();
        assert_eq!(s.to_bytes().unwrap().len(), 40);
        let big = EmbeddingStack::new("c", "m", 25, 1024, vec![0.5; 25 * 1024]).unwrap();
        assert_eq!(big.to_bytes().unwrap().len() - HEADER_LEN, 102_400);
    }

    #[test]
    fn header_is_little_endian() {
        let s = EmbeddingStack::new("c", "m", 2, 1, vec![1.0, -2.0]).unwrap();
        let b = s.to_bytes().unwrap();
        assert_eq!(&b[..16], b"PEMB\x01\0\0\0\x02\0\0\0\x01\0\0\0");
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
    }

    #[test]
    fn disk_round_trip_and_names() {
        let dir = tempfile::tempdir().unwrap();
        let s = EmbeddingStack::new("clip_7", "hubert-large", 3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        let p = dir.path().join(s.file_name());
        write_stack(&s, &p).unwrap();
        assert_eq!(read_stack(&p).unwrap(), s);
        assert!(matches!(write_stack(&s, &p), Err(EmbeddingError::AlreadyExists(_))));
    }

    #[test]
    fn malformed_files() {
        let s = EmbeddingStack::new("c", "m", 2, 3, vec![0.25; 6]).unwrap();
        let mut b = s.to_bytes().unwrap();
        let truncated = &b[..b.len() - 5];
        assert!(matches!(
            EmbeddingStack::from_bytes(truncated, "c", "m"),
            Err(EmbeddingError::Truncated { expected: 40, found: 35 })
        ));
        assert!(matches!(
            EmbeddingStack::from_bytes(&b[..10], "c", "m"),
            Err(EmbeddingError::Truncated { .. })
        ));
        b[4] = 2;
        assert!(matches!(
            EmbeddingStack::from_bytes(&b, "c", "m"),
            Err(EmbeddingError::VersionMismatch(2))
        ));
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            EmbeddingStack::from_bytes(&b, "c", "m"),
            Err(EmbeddingError::BadMagic(m)) if &m == b"XXXX"
        ));
    }

    #[test]
    fn layer_access() {
        let vectors: Vec<f32> = (0..25 * 4).map(|i| i as f32).collect();
        let s = EmbeddingStack::new("c", "m", 25, 4, vectors).unwrap();
        assert_eq!(s.layer_vector(0).unwrap(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(s.layer_vector(24).unwrap()[0], 96.0);
        assert!(matches!(
            s.layer_vector(25),
            Err(EmbeddingError::LayerOutOfRange { layer: 25, n_layers: 25 })
        ));
        let v = s.layer_vector(3).unwrap();
        let c = crate::similarity::cosine_similarity_f32(v, v).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(EmbeddingStack::new("c", "m", 0, 3, vec![]).is_err());
        assert!(EmbeddingStack::new("c", "m", 2, 3, vec![0.0; 5]).is_err());
        assert!(EmbeddingStack::new("c", "m", 1, 1, vec![f32::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(
            n_layers in 1usize..6,
            dim in 1usize..16,
            seed in prop::collection::vec(any::<u32>(), 96),
        ) {
            let vectors: Vec<f32> = (0..n_layers * dim)
                .map(|i| {
                    let v = f32::from_bits(seed[i % seed.len()].rotate_left(i as u32));
                    if v.is_finite() { v } else { i as f32 }
                })
                .collect();
            let s = EmbeddingStack::new("c", "m", n_layers, dim, vectors).unwrap();
            let back = EmbeddingStack::from_bytes(&s.to_bytes().unwrap(), "c", "m").unwrap();
            let a: Vec<u32> = s.vectors.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.vectors.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
