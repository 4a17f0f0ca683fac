//! Checkpoint container: little-endian binary sections with a version
//! string and a CRC per section payload.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};

pub const VERSION: &str = "chardense-ckpt-1";

/// CRC-32 (IEEE), table-driven.
pub fn crc32(bytes: &[u8]) -> u32 {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *slot = c;
        }
        t
    });
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = table[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

#[derive(Default)]
pub struct SectionWriter {
    sections: Vec<(String, Vec<u8>)>,
}

impl SectionWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, payload: Vec<u8>) {
        self.sections.push((name.to_string(), payload));
    }

    pub fn finish(self) -> Vec<u8> {
        let mut out = Vec::new();
        let v = VERSION.as_bytes();
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
        out.extend_from_slice(v);
        for (name, payload) in self.sections {
            let n = name.as_bytes();
            out.extend_from_slice(&(n.len() as u32).to_le_bytes());
            out.extend_from_slice(n);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            let crc = crc32(&payload);
            out.extend_from_slice(&payload);
            out.extend_from_slice(&crc.to_le_bytes());
        }
        out
    }
}

#[derive(Debug)]
pub struct SectionReader {
    sections: BTreeMap<String, Vec<u8>>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::CkptTruncated {
                section: section.to_string(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }
}

impl SectionReader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let vlen = cur.u32("header")? as usize;
        if vlen > 256 {
            return Err(CoreError::CkptMalformed(format!(
                "implausible version length {vlen}"
            )));
        }
        let version = String::from_utf8_lossy(cur.take(vlen, "header")?).into_owned();
        if version != VERSION {
            return Err(CoreError::CkptVersion {
                expected: VERSION.to_string(),
                found: version,
            });
        }
        let mut sections = BTreeMap::new();
        while cur.pos < bytes.len() {
            let nlen = cur.u32("section name")? as usize;
            let name = String::from_utf8(cur.take(nlen, "section name")?.to_vec())
                .map_err(|_| CoreError::CkptMalformed("non-UTF8 section name".into()))?;
            let plen = cur.u64(&name)? as usize;
            let payload = cur.take(plen, &name)?.to_vec();
            let stored_crc = cur.u32(&name)?;
            if crc32(&payload) != stored_crc {
                return Err(CoreError::CkptChecksum { section: name });
            }
            sections.insert(name, payload);
        }
        Ok(Self { sections })
    }

    pub fn get(&self, name: &str) -> Result<&[u8]> {
        self.sections
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| CoreError::CkptMalformed(format!("missing section {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.sections.keys()
    }
}
