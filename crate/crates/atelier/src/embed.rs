//! Face embeddings: unit vectors, Euclidean distance, a deterministic mock
//! embedder, and the on-disk store.
//!
//! Real deployments plug a neural embedder in by importing its vectors from
//! a text or binary store. The mock embedder exists so the rest of the
//! pipeline can run and be tested without model weights: it summarizes a crop
//! by mean-centered block intensities and normalizes the result, which is
//! enough to give visually distinct faces distinct directions.

use std::io::{Read, Write};

use thiserror::Error;

use crate::align::PixelGrid;

/// Embedding dimensionality produced by [`mock_embed`] and assumed by the
/// pipeline defaults.
pub const EMBED_DIM: usize = 128;

/// Store file magic.
pub const STORE_MAGIC: &[u8; 4] = b"FEMB";
/// Store format version written by [`write_store`].
pub const STORE_VERSION: u32 = 1;

const BLOCK_COLS: u32 = 16;
const BLOCK_ROWS: u32 = 8;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("embedding for {face_id:?} has zero norm")]
    ZeroVectorFace { face_id: String },
    #[error("vector has a non-finite component")]
    NonFinite,
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("mock embedder needs a {want}x{want} crop, got {width}x{height}")]
    BadCropSize { width: u32, height: u32, want: u32 },
    #[error("store byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("store line {line}: {message}")]
    TextFormat { line: usize, message: String },
    #[error("store holds {expected}-d vectors but {face_id:?} has {got} components")]
    InconsistentDim {
        expected: usize,
        got: usize,
        face_id: String,
    },
    #[error("face id of {len} bytes exceeds the {max}-byte store limit")]
    IdTooLong { len: usize, max: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One embedded face.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub face_id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(face_id: impl Into<String>, values: Vec<f64>) -> Self {
        EmbeddingVector {
            face_id: face_id.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Scales a vector to unit Euclidean norm.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>, EmbedError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Euclidean distance between two vectors of equal length.
pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Deterministic stand-in embedder: 128 mean-centered block intensities.
///
/// The crop is converted to grayscale (channel mean), tiled into a 16-column
/// by 8-row grid of 10x20-pixel blocks, and each block's mean intensity minus
/// the global mean becomes one component. Blocks are ordered column by
/// column, so the first 64 components cover the left half of the crop. The
/// result is normalized; a constant crop (all components zero) falls back to
/// the first basis vector so the output is always a unit vector.
pub fn mock_embed(crop: &PixelGrid) -> Result<Vec<f64>, EmbedError> {
    let want = crate::align::DEFAULT_CROP_SIZE;
    if crop.width() != want || crop.height() != want {
        return Err(EmbedError::BadCropSize {
            width: crop.width(),
            height: crop.height(),
            want,
        });
    }
    let block_w = want / BLOCK_COLS;
    let block_h = want / BLOCK_ROWS;
    let channels = crop.channels();
    let mut means = Vec::with_capacity(EMBED_DIM);
    for col in 0..BLOCK_COLS {
        for row in 0..BLOCK_ROWS {
            let mut sum = 0.0;
            for y in row * block_h..(row + 1) * block_h {
                for x in col * block_w..(col + 1) * block_w {
                    let mut px = 0.0;
                    for c in 0..channels {
                        px += crop.get(x, y, c) as f64;
                    }
                    sum += px / channels as f64;
                }
            }
            means.push(sum / (block_w * block_h) as f64);
        }
    }
    let global = means.iter().sum::<f64>() / means.len() as f64;
    let features: Vec<f64> = means.iter().map(|m| m - global).collect();
    if features.iter().all(|&f| f == 0.0) {
        let mut e1 = vec![0.0; EMBED_DIM];
        e1[0] = 1.0;
        return Ok(e1);
    }
    normalize(&features)
}

/// Embeds one aligned face, keeping its id.
pub fn embed_face(face: &crate::align::FaceInstance) -> Result<EmbeddingVector, EmbedError> {
    Ok(EmbeddingVector::new(
        face.face_id.clone(),
        mock_embed(&face.crop)?,
    ))
}

/// Re-normalizes loaded vectors. Stored embeddings may drift from unit norm
/// (or come from an embedder that never normalized); every consumer in this
/// crate expects unit vectors, so loads go through here.
pub fn renormalized(vectors: Vec<EmbeddingVector>) -> Result<Vec<EmbeddingVector>, EmbedError> {
    vectors
        .into_iter()
        .map(|v| match normalize(&v.values) {
            Ok(values) => Ok(EmbeddingVector {
                face_id: v.face_id,
                values,
            }),
            Err(EmbedError::ZeroVector) => Err(EmbedError::ZeroVectorFace { face_id: v.face_id }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Writes the binary store: `FEMB`, version, dimension, then one record per
/// vector (id length, id bytes, little-endian f64 components).
pub fn write_store<W: Write>(vectors: &[EmbeddingVector], mut w: W) -> Result<(), EmbedError> {
    let dim = vectors.first().map(|v| v.dim()).unwrap_or(0);
    for v in vectors {
        if v.dim() != dim {
            return Err(EmbedError::InconsistentDim {
                expected: dim,
                got: v.dim(),
                face_id: v.face_id.clone(),
            });
        }
        if v.face_id.len() > u16::MAX as usize {
            return Err(EmbedError::IdTooLong {
                len: v.face_id.len(),
                max: u16::MAX as usize,
            });
        }
    }
    w.write_all(STORE_MAGIC)?;
    w.write_all(&STORE_VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    for v in vectors {
        w.write_all(&(v.face_id.len() as u16).to_le_bytes())?;
        w.write_all(v.face_id.as_bytes())?;
        for x in &v.values {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    /// Fills `buf` or reports a format error naming the current byte offset.
    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<(), EmbedError> {
        let offset = self.offset;
        let mut filled = 0;
        while filled < buf.len() {
            let n = self.inner.read(&mut buf[filled..])?;
            if n == 0 {
                return Err(EmbedError::Format {
                    offset: offset + filled as u64,
                    message: format!("truncated while reading {what}"),
                });
            }
            filled += n;
            self.offset += n as u64;
        }
        Ok(())
    }

    /// Like `read_exact`, but a clean end-of-file before the first byte
    /// returns `None`.
    fn read_exact_or_eof(&mut self, buf: &mut [u8], what: &str) -> Result<bool, EmbedError> {
        let mut first = [0u8; 1];
        let n = self.inner.read(&mut first)?;
        if n == 0 {
            return Ok(false);
        }
        buf[0] = first[0];
        self.offset += 1;
        self.read_exact(&mut buf[1..], what)?;
        Ok(true)
    }
}

/// Reads a binary store written by [`write_store`]. Round-trips bit-exactly;
/// callers that need unit vectors follow up with [`renormalized`].
pub fn read_store<R: Read>(r: R) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let mut r = OffsetReader {
        inner: r,
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if &magic != STORE_MAGIC {
        return Err(EmbedError::Format {
            offset: 0,
            message: format!("bad magic {magic:?}, expected {STORE_MAGIC:?}"),
        });
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != STORE_VERSION {
        return Err(EmbedError::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    r.read_exact(&mut word, "dimension")?;
    let dim = u32::from_le_bytes(word) as usize;
    let mut vectors = Vec::new();
    let mut len_buf = [0u8; 2];
    while r.read_exact_or_eof(&mut len_buf, "record id length")? {
        let id_len = u16::from_le_bytes(len_buf) as usize;
        let id_offset = r.offset;
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes, "record id")?;
        let face_id = String::from_utf8(id_bytes).map_err(|e| EmbedError::Format {
            offset: id_offset,
            message: format!("face id is not UTF-8: {e}"),
        })?;
        let mut values = Vec::with_capacity(dim);
        let mut comp = [0u8; 8];
        for _ in 0..dim {
            r.read_exact(&mut comp, "vector component")?;
            values.push(f64::from_le_bytes(comp));
        }
        vectors.push(EmbeddingVector { face_id, values });
    }
    Ok(vectors)
}

/// Parses the text store format: one face per line, id first, then
/// whitespace-separated components. Every line must carry the same number of
/// components.
pub fn parse_text_store(text: &str) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let mut vectors: Vec<EmbeddingVector> = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut tokens = raw.split_whitespace();
        let face_id = tokens
            .next()
            .expect("non-blank line has a first token")
            .to_string();
        let mut values = Vec::new();
        for tok in tokens {
            let x: f64 = tok.parse().map_err(|e| EmbedError::TextFormat {
                line,
                message: format!("bad component {tok:?}: {e}"),
            })?;
            values.push(x);
        }
        if values.is_empty() {
            return Err(EmbedError::TextFormat {
                line,
                message: "no vector components".into(),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(EmbedError::TextFormat {
                    line,
                    message: format!("expected {d} components, got {}", values.len()),
                });
            }
            _ => {}
        }
        vectors.push(EmbeddingVector { face_id, values });
    }
    Ok(vectors)
}

/// Renders the text store format.
pub fn render_text_store(vectors: &[EmbeddingVector]) -> String {
    let mut out = String::new();
    for v in vectors {
        out.push_str(&v.face_id);
        for x in &v.values {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

/// Reads a store in either format, sniffing the binary magic.
pub fn read_store_auto(bytes: &[u8]) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if bytes.starts_with(STORE_MAGIC) {
        read_store(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| EmbedError::Format {
            offset: e.valid_up_to() as u64,
            message: "store is neither FEMB binary nor UTF-8 text".into(),
        })?;
        parse_text_store(text)
    }
}
