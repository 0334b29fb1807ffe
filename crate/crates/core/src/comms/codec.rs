use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x47, 0x4F];
pub const HEADER_LEN: usize = 25;
pub const ENTRY_LEN: usize = 6;
pub const MAX_ENTRIES: usize = 64;

/// Dataset entry kinds.
pub mod kind {
    pub const PICKED_UP: u8 = 1;
    pub const TRIPPED: u8 = 2;
    pub const BREAKER_CLOSED: u8 = 3;
    pub const SOURCE_IN_SERVICE: u8 = 4;
    pub const LINE_IN_SERVICE: u8 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DataEntry {
    pub kind: u8,
    pub id: u32,
    pub value: bool,
}

impl DataEntry {
    pub fn new(kind: u8, id: u32, value: bool) -> Self {
        Self { kind, id, value }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GooseFrame {
    pub app_id: u16,
    pub publisher: u32,
    pub st_num: u32,
    pub sq_num: u32,
    pub timestamp_ns: u64,
    pub dataset: Vec<DataEntry>,
}

impl GooseFrame {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + ENTRY_LEN * self.dataset.len()
    }

    pub fn entry(&self, kind: u8, id: u32) -> Option<bool> {
        self.dataset
            .iter()
            .find(|e| e.kind == kind && e.id == id)
            .map(|e| e.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("truncated frame: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("frame declares {expected} bytes but {got} were supplied")]
    TrailingBytes { expected: usize, got: usize },
    #[error("dataset has {0} entries, limit is 64")]
    TooManyEntries(usize),
    #[error("entry {index} carries non-boolean value {byte:#04x}")]
    InvalidBoolean { index: usize, byte: u8 },
}

pub fn encode_frame(frame: &GooseFrame) -> Result<Vec<u8>, CodecError> {
    if frame.dataset.len() > MAX_ENTRIES {
        return Err(CodecError::TooManyEntries(frame.dataset.len()));
    }
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&frame.app_id.to_be_bytes());
    out.extend_from_slice(&frame.publisher.to_be_bytes());
    out.extend_from_slice(&frame.st_num.to_be_bytes());
    out.extend_from_slice(&frame.sq_num.to_be_bytes());
    out.extend_from_slice(&frame.timestamp_ns.to_be_bytes());
    out.push(frame.dataset.len() as u8);
    for e in &frame.dataset {
        out.push(e.kind);
        out.extend_from_slice(&e.id.to_be_bytes());
        out.push(e.value as u8);
    }
    Ok(out)
}

fn be<const N: usize>(bytes: &[u8], at: usize) -> [u8; N] {
    bytes[at..at + N].try_into().expect("length checked")
}

pub fn decode_frame(bytes: &[u8]) -> Result<GooseFrame, CodecError> {
    if bytes.len() < 2 {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    if bytes[..2] != MAGIC {
        return Err(CodecError::BadMagic([bytes[0], bytes[1]]));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let count = bytes[24] as usize;
    if count > MAX_ENTRIES {
        return Err(CodecError::TooManyEntries(count));
    }
    let expected = HEADER_LEN + ENTRY_LEN * count;
    if bytes.len() < expected {
        return Err(CodecError::Truncated {
            needed: expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CodecError::TrailingBytes {
            expected,
            got: bytes.len(),
        });
    }
    let dataset = (0..count)
        .map(|i| {
            let at = HEADER_LEN + ENTRY_LEN * i;
            let value = match bytes[at + 5] {
                0 => false,
                1 => true,
                byte => return Err(CodecError::InvalidBoolean { index: i, byte }),
            };
            Ok(DataEntry {
                kind: bytes[at],
                id: u32::from_be_bytes(be(bytes, at + 1)),
                value,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GooseFrame {
        app_id: u16::from_be_bytes(be(bytes, 2)),
        publisher: u32::from_be_bytes(be(bytes, 4)),
        st_num: u32::from_be_bytes(be(bytes, 8)),
        sq_num: u32::from_be_bytes(be(bytes, 12)),
        timestamp_ns: u64::from_be_bytes(be(bytes, 16)),
        dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> GooseFrame {
        GooseFrame {
            app_id: 1,
            publisher: 12,
            st_num: 1,
            sq_num: 0,
            timestamp_ns: 0,
            dataset: vec![],
        }
    }

    #[test]
    fn empty_frame_layout() {
        let b = encode_frame(&empty()).unwrap();
        assert_eq!(b.len(), 25);
        assert_eq!(&b[..4], &[0x47, 0x4F, 0x00, 0x01]);
        assert_eq!(&b[4..8], &[0, 0, 0, 12]);
        assert_eq!(b[24], 0);
    }

    #[test]
    fn entries_are_big_endian() {
        let mut f = empty();
        f.dataset
            .push(DataEntry::new(kind::TRIPPED, 0x0102_0304, true));
        let b = encode_frame(&f).unwrap();
        assert_eq!(&b[25..], &[2, 1, 2, 3, 4, 1]);
        assert_eq!(decode_frame(&b).unwrap(), f);
    }

    #[test]
    fn too_many_entries() {
        let mut f = empty();
        f.dataset = vec![DataEntry::new(1, 1, true); 65];
        assert_eq!(encode_frame(&f), Err(CodecError::TooManyEntries(65)));
        f.dataset.truncate(64);
        assert!(encode_frame(&f).is_ok());
    }

    #[test]
    fn distinct_errors() {
        let good = encode_frame(&GooseFrame {
            dataset: vec![DataEntry::new(1, 7, false)],
            ..empty()
        })
        .unwrap();
        assert!(matches!(
            decode_frame(&good[..10]),
            Err(CodecError::Truncated { got: 10, .. })
        ));
        assert!(matches!(
            decode_frame(&good[..28]),
            Err(CodecError::Truncated { needed: 31, .. })
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            decode_frame(&long),
            Err(CodecError::TrailingBytes { .. })
        ));
        let mut magic = good.clone();
        magic[0] = 0;
        assert!(matches!(decode_frame(&magic), Err(CodecError::BadMagic(_))));
        let mut boolean = good.clone();
        boolean[30] = 2;
        assert!(matches!(
            decode_frame(&boolean),
            Err(CodecError::InvalidBoolean { index: 0, byte: 2 })
        ));
        let mut count = good;
        count[24] = 200;
        assert_eq!(decode_frame(&count), Err(CodecError::TooManyEntries(200)));
        assert!(decode_frame(&[]).is_err());
    }
}
