use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HCFS";
pub const VERSION: u8 = 1;
/// magic, version, width, height, lambda index, slice count.
pub const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1 + 1;

/// Parsed `.hcfs` file. Little-endian layout: header, z-segment length and
/// bytes, then one length per slice followed by the slice segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedStream {
    pub width: u32,
    pub height: u32,
    pub lambda_index: u8,
    pub z_segment: Vec<u8>,
    pub slice_segments: Vec<Vec<u8>>,
}

impl CodedStream {
    /// Entropy-coded bytes, excluding header and length fields.
    pub fn payload_len(&self) -> usize {
        self.z_segment.len() + self.slice_segments.iter().map(Vec::len).sum::<usize>()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let slices = u8::try_from(self.slice_segments.len())
            .map_err(|_| Error::InvalidArgument("more than 255 slices".into()))?;
        let len32 = |v: &Vec<u8>| {
            u32::try_from(v.len()).map_err(|_| Error::InvalidArgument("segment longer than 4 GiB".into()))
        };
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (1 + slices as usize) + self.payload_len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.lambda_index);
        out.push(slices);
        out.extend_from_slice(&len32(&self.z_segment)?.to_le_bytes());
        out.extend_from_slice(&self.z_segment);
        for s in &self.slice_segments {
            out.extend_from_slice(&len32(s)?.to_le_bytes());
        }
        for s in &self.slice_segments {
            out.extend_from_slice(s);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take("magic", 4)? != MAGIC {
            return Err(Error::BadMagic { expected: "HCFS" });
        }
        let version = r.u8("version")?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let width = r.u32("width")?;
        let height = r.u32("height")?;
        let lambda_index = r.u8("lambda index")?;
        let slices = r.u8("slice count")? as usize;
        let z_len = r.u32("z-segment length")? as usize;
        let z_segment = r.take("z-segment", z_len)?.to_vec();
        let lens = (0..slices)
            .map(|_| r.u32("slice length").map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let slice_segments = lens
            .into_iter()
            .map(|n| r.take("slice segment", n).map(<[u8]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} trailing bytes after the last segment",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            width,
            height,
            lambda_index,
            z_segment,
            slice_segments,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, what: &'static str, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::LengthOverrun {
                what,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(what, 1)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what, 4)?.try_into().unwrap()))
    }
}
