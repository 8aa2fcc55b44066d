use std::collections::BTreeMap;
use std::path::Path;

use super::{NotesEmbeddingSequence, NotesError};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EHRE";
pub const EMBEDDING_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], NotesError> {
        let end = self.pos.checked_add(n).ok_or(NotesError::Truncated(what))?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(NotesError::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, NotesError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Parse an embedding file held in memory. Stored f32 values are widened to f64.
pub fn read_embeddings(
    bytes: &[u8],
) -> Result<BTreeMap<String, NotesEmbeddingSequence>, NotesError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if &magic != EMBEDDING_MAGIC {
        return Err(NotesError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != EMBEDDING_VERSION {
        return Err(NotesError::UnsupportedVersion(version));
    }
    let count = r.u32("episode count")? as usize;
    let dim = r.u32("dimension")? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let id_len = r.u32("id length")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "id")?)
            .map_err(|_| NotesError::InvalidId)?
            .to_string();
        let hours = r.u32("hour count")? as usize;
        let bitmap = r.take(hours.div_ceil(8), "presence bitmap")?;
        let mut seq = NotesEmbeddingSequence::empty(hours, dim);
        let mut row = vec![0.0; dim];
        for h in 0..hours {
            if bitmap[h / 8] >> (h % 8) & 1 == 0 {
                continue;
            }
            let raw = r.take(4 * dim, "embedding rows")?;
            for (x, b) in row.iter_mut().zip(raw.chunks_exact(4)) {
                *x = f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")));
            }
            seq.set_row(h, &row);
        }
        if out.insert(id.clone(), seq).is_some() {
            return Err(NotesError::DuplicateEpisode(id));
        }
    }
    if r.pos != bytes.len() {
        // leftover bytes are rows the bitmap did not account for
        let extra = bytes.len() - r.pos;
        if let Some((id, seq)) = out.iter().next_back() {
            if dim > 0 && extra % (4 * dim) == 0 {
                return Err(NotesError::RowCountMismatch {
                    id: id.clone(),
                    expected: seq.present_hours(),
                    actual: seq.present_hours() + extra / (4 * dim),
                });
            }
        }
        return Err(NotesError::TrailingBytes);
    }
    Ok(out)
}

pub fn load_embeddings(
    path: &Path,
) -> Result<BTreeMap<String, NotesEmbeddingSequence>, NotesError> {
    read_embeddings(&std::fs::read(path)?)
}

/// Serialize sequences (all sharing one dimension) in id order.
pub fn write_embeddings(
    sequences: &BTreeMap<String, NotesEmbeddingSequence>,
    dim: usize,
) -> Result<Vec<u8>, NotesError> {
    let mut out = Vec::new();
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(sequences.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (id, seq) in sequences {
        if seq.dim != dim {
            return Err(NotesError::DimensionMismatch {
                expected: dim,
                actual: seq.dim,
            });
        }
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&(seq.hours as u32).to_le_bytes());
        let mut bitmap = vec![0u8; seq.hours.div_ceil(8)];
        for (h, &p) in seq.presence.iter().enumerate() {
            if p {
                bitmap[h / 8] |= 1 << (h % 8);
            }
        }
        out.extend_from_slice(&bitmap);
        for h in (0..seq.hours).filter(|&h| seq.presence[h]) {
            for &x in seq.row(h) {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}
