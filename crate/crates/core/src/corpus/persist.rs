//! Binary index container.
//!
//! ```text
//! magic     4 bytes  "QEVI"
//! version   u16
//! vocab     u32 count, then per phrase: u32 byte length, UTF-8 bytes
//!           (tokens joined by one space), u32 document frequency
//! vectors   u32 count, then per document: u32 byte length, UTF-8 id,
//!           u32 word count, words as u64
//! ```
//!
//! All integers are little-endian.

use std::io::{Read, Write};

use super::{CorpusError, CorpusIndex, DocBitVector, Phrase, VocabularyIndex};

pub const MAGIC: &[u8; 4] = b"QEVI";
pub const FORMAT_VERSION: u16 = 1;

/// What a container holds: enough to evaluate queries, not to append.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersistedIndex {
    pub vocab: VocabularyIndex,
    pub vectors: Vec<DocBitVector>,
}

impl From<&CorpusIndex> for PersistedIndex {
    fn from(index: &CorpusIndex) -> Self {
        PersistedIndex { vocab: index.vocab().clone(), vectors: index.vectors().to_vec() }
    }
}

fn put_u32(out: &mut impl Write, v: usize) -> Result<(), CorpusError> {
    let v = u32::try_from(v).map_err(|_| CorpusError::Format(format!("{v} does not fit in u32")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str(out: &mut impl Write, s: &str) -> Result<(), CorpusError> {
    put_u32(out, s.len())?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_index(mut out: impl Write, vocab: &VocabularyIndex, vectors: &[DocBitVector]) -> Result<(), CorpusError> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    put_u32(&mut out, vocab.len())?;
    for (phrase, freq) in vocab.entries() {
        put_str(&mut out, &phrase.joined())?;
        out.write_all(&freq.to_le_bytes())?;
    }
    put_u32(&mut out, vectors.len())?;
    for v in vectors {
        if v.bit_length() != vocab.len() {
            return Err(CorpusError::Format(format!(
                "vector `{}` covers {} bits but the vocabulary has {}",
                v.doc_id(),
                v.bit_length(),
                vocab.len()
            )));
        }
        put_str(&mut out, v.doc_id())?;
        put_u32(&mut out, v.words().len())?;
        for w in v.words() {
            out.write_all(&w.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N], CorpusError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => CorpusError::Format("truncated file".into()),
            _ => CorpusError::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, CorpusError> {
        Ok(u32::from_le_bytes(self.exact()?))
    }

    fn string(&mut self) -> Result<String, CorpusError> {
        let len = self.u32()? as usize;
        let mut buf = Vec::new();
        (&mut self.inner).take(len as u64).read_to_end(&mut buf)?;
        if buf.len() != len {
            return Err(CorpusError::Format("truncated file".into()));
        }
        String::from_utf8(buf).map_err(|_| CorpusError::Format("invalid UTF-8".into()))
    }
}

pub fn read_index(input: impl Read) -> Result<PersistedIndex, CorpusError> {
    let mut r = Reader { inner: input };
    if &r.exact::<4>()? != MAGIC {
        return Err(CorpusError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.exact()?);
    if version != FORMAT_VERSION {
        return Err(CorpusError::Format(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let text = r.string()?;
        let phrase = Phrase::new(text.split(' ').map(String::from).collect())
            .ok_or_else(|| CorpusError::Format(format!("invalid phrase `{text}`")))?;
        let freq = r.u32()?;
        entries.push((phrase, freq));
    }
    let vocab = VocabularyIndex::from_entries(entries)?;
    let count = r.u32()? as usize;
    let mut vectors = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = r.string()?;
        let words_len = r.u32()? as usize;
        let mut words = Vec::with_capacity(words_len.min(1 << 20));
        for _ in 0..words_len {
            words.push(u64::from_le_bytes(r.exact()?));
        }
        vectors.push(DocBitVector::from_words(id, words, n)?);
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(CorpusError::Format("trailing bytes".into()));
    }
    Ok(PersistedIndex { vocab, vectors })
}
