//! Reader (and fixture writer) for Norpix `.seq` video containers.
//!
//! Layout, little-endian throughout (see `docs/FORMATS.md`):
//!
//! ```text
//! 0      u32      magic 0xFEED
//! 4      u16[10]  "Norpix seq" (UTF-16LE)
//! 24     4 bytes  reserved
//! 28     i32      version
//! 32     u32      header size (1024)
//! 36     u16[256] description (UTF-16LE, NUL padded)
//! 548    u32      width
//! 552    u32      height
//! 556    u32      bit depth
//! 560    u32      real bit depth
//! 564    u32      image size in bytes
//! 568    u32      image format code
//! 572    u32      allocated frame count
//! 576    u32      origin (0)
//! 580    u32      true image size
//! 584    f64      frame rate
//! 592..1024       reserved (zero)
//! ```
//!
//! Compressed frames follow the header back to back. Each record is a `u32`
//! length `L` that counts itself, `L - 4` payload bytes, then an 8-byte
//! timestamp (`u32` seconds, `u16` milliseconds, `u16` microseconds).

use serde::Serialize;
use thiserror::Error;

pub const SEQ_MAGIC: u32 = 0xFEED;
pub const HEADER_SIZE: usize = 1024;
pub const SIGNATURE: &str = "Norpix seq";
/// Length prefix plus timestamp.
pub const RECORD_OVERHEAD: usize = 4 + TIMESTAMP_SIZE;
const TIMESTAMP_SIZE: usize = 8;
const DESCRIPTION_OFFSET: usize = 36;
const DESCRIPTION_BYTES: usize = 512;

/// Image format codes whose frames are JPEG streams.
pub const JPEG_FORMATS: [u32; 2] = [102, 201];

#[derive(Debug, Error, PartialEq)]
pub enum SeqError {
    #[error("not a seq file: magic {found:#x}, expected {SEQ_MAGIC:#x}")]
    BadMagic { found: u32 },
    #[error("truncated seq file: {detail}")]
    Truncated { detail: String },
    #[error("unsupported image format code {0}")]
    UnsupportedFormat(u32),
    #[error("header declares {declared} frames but {found} frame records are present")]
    FrameCountMismatch { declared: u32, found: usize },
    #[error("header declares {declared} frames but {given} payloads were given")]
    CountMismatch { declared: u32, given: usize },
    #[error("frame index {index} out of range (frame count {count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeqHeader {
    pub magic: u32,
    pub version: i32,
    pub description: String,
    pub width: u32,
    pub height: u32,
    pub bit_depth: u32,
    pub bit_depth_real: u32,
    pub image_size_bytes: u32,
    pub image_format: u32,
    pub frame_count: u32,
    pub true_image_size: u32,
    pub fps: f64,
}

impl SeqHeader {
    /// An 8-bit RGB JPEG header with the given geometry.
    pub fn jpeg(width: u32, height: u32, frame_count: u32, fps: f64) -> Self {
        Self {
            magic: SEQ_MAGIC,
            version: 3,
            description: String::new(),
            width,
            height,
            bit_depth: 24,
            bit_depth_real: 8,
            image_size_bytes: width * height * 3,
            image_format: JPEG_FORMATS[0],
            frame_count,
            true_image_size: width * height * 3 + TIMESTAMP_SIZE as u32,
            fps,
        }
    }

    pub fn is_jpeg(&self) -> bool {
        JPEG_FORMATS.contains(&self.image_format)
    }

    fn validate(&self) -> Result<(), SeqError> {
        if self.magic != SEQ_MAGIC {
            return Err(SeqError::BadMagic { found: self.magic });
        }
        if self.width == 0 || self.height == 0 {
            return Err(SeqError::InvalidHeader(format!(
                "frame size {}x{} must be positive",
                self.width, self.height
            )));
        }
        if !self.is_jpeg() {
            return Err(SeqError::UnsupportedFormat(self.image_format));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Timestamp {
    pub seconds: u32,
    pub milliseconds: u16,
    pub microseconds: u16,
}

impl Timestamp {
    pub fn as_secs_f64(&self) -> f64 {
        self.seconds as f64 + self.milliseconds as f64 / 1e3 + self.microseconds as f64 / 1e6
    }
}

/// Location of one frame record inside the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameEntry {
    /// Start of the record (the length prefix).
    pub byte_offset: usize,
    pub payload_size: usize,
}

impl FrameEntry {
    pub fn record_len(&self) -> usize {
        self.payload_size + RECORD_OVERHEAD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord<'a> {
    pub index: usize,
    pub byte_offset: usize,
    pub payload_size: usize,
    pub timestamp: Timestamp,
    pub payload: &'a [u8],
}

impl FrameRecord<'_> {
    /// Whether the payload starts with the JPEG start-of-image marker.
    pub fn has_jpeg_soi(&self) -> bool {
        self.payload.starts_with(&[0xFF, 0xD8])
    }
}

/// An opened `.seq` file; frames are read by random access through the index.
#[derive(Debug, Clone)]
pub struct SeqFile {
    data: Vec<u8>,
    header: SeqHeader,
    index: Vec<FrameEntry>,
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes(b[off..off + 2].try_into().unwrap())
}

fn decode_utf16z(b: &[u8]) -> String {
    let units: Vec<u16> = b
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .take_while(|&u| u != 0)
        .collect();
    String::from_utf16_lossy(&units)
}

pub fn parse_header(bytes: &[u8]) -> Result<SeqHeader, SeqError> {
    if bytes.len() < HEADER_SIZE {
        return Err(SeqError::Truncated {
            detail: format!("header needs {HEADER_SIZE} bytes, file has {}", bytes.len()),
        });
    }
    let magic = u32_at(bytes, 0);
    if magic != SEQ_MAGIC {
        return Err(SeqError::BadMagic { found: magic });
    }
    let header = SeqHeader {
        magic,
        version: u32_at(bytes, 28) as i32,
        description: decode_utf16z(&bytes[DESCRIPTION_OFFSET..DESCRIPTION_OFFSET + DESCRIPTION_BYTES]),
        width: u32_at(bytes, 548),
        height: u32_at(bytes, 552),
        bit_depth: u32_at(bytes, 556),
        bit_depth_real: u32_at(bytes, 560),
        image_size_bytes: u32_at(bytes, 564),
        image_format: u32_at(bytes, 568),
        frame_count: u32_at(bytes, 572),
        true_image_size: u32_at(bytes, 580),
        fps: f64::from_le_bytes(bytes[584..592].try_into().unwrap()),
    };
    header.validate()?;
    Ok(header)
}

/// Parses the header and builds the frame index by walking the records.
pub fn open_seq(bytes: Vec<u8>) -> Result<SeqFile, SeqError> {
    let header = parse_header(&bytes)?;
    let mut index = Vec::with_capacity(header.frame_count as usize);
    let mut pos = HEADER_SIZE;
    while pos < bytes.len() {
        if pos + 4 > bytes.len() {
            return Err(SeqError::Truncated {
                detail: format!("frame {} length prefix at offset {pos} runs past end of file", index.len()),
            });
        }
        let len = u32_at(&bytes, pos) as usize;
        if len < 4 {
            return Err(SeqError::Truncated {
                detail: format!("frame {} at offset {pos} has invalid length {len}", index.len()),
            });
        }
        let end = pos + len + TIMESTAMP_SIZE;
        if end > bytes.len() {
            return Err(SeqError::Truncated {
                detail: format!(
                    "frame {} at offset {pos} needs {} bytes, {} remain",
                    index.len(),
                    len + TIMESTAMP_SIZE,
                    bytes.len() - pos
                ),
            });
        }
        index.push(FrameEntry {
            byte_offset: pos,
            payload_size: len - 4,
        });
        pos = end;
    }
    if index.len() != header.frame_count as usize {
        return Err(SeqError::FrameCountMismatch {
            declared: header.frame_count,
            found: index.len(),
        });
    }
    Ok(SeqFile {
        data: bytes,
        header,
        index,
    })
}

impl SeqFile {
    pub fn header(&self) -> &SeqHeader {
        &self.header
    }

    pub fn index(&self) -> &[FrameEntry] {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn file_size(&self) -> usize {
        self.data.len()
    }

    pub fn read_frame(&self, i: usize) -> Result<FrameRecord<'_>, SeqError> {
        let entry = self.index.get(i).ok_or(SeqError::IndexOutOfRange {
            index: i,
            count: self.index.len(),
        })?;
        let start = entry.byte_offset + 4;
        let ts = start + entry.payload_size;
        Ok(FrameRecord {
            index: i,
            byte_offset: entry.byte_offset,
            payload_size: entry.payload_size,
            timestamp: Timestamp {
                seconds: u32_at(&self.data, ts),
                milliseconds: u16_at(&self.data, ts + 4),
                microseconds: u16_at(&self.data, ts + 6),
            },
            payload: &self.data[start..ts],
        })
    }

    pub fn frames(&self) -> impl Iterator<Item = FrameRecord<'_>> + '_ {
        (0..self.len()).map(|i| self.read_frame(i).expect("index entries are in range"))
    }
}

fn timestamp_for(i: usize, fps: f64) -> Timestamp {
    let t = if fps > 0.0 { i as f64 / fps } else { 0.0 };
    let micros = (t * 1e6).round() as u64;
    Timestamp {
        seconds: (micros / 1_000_000) as u32,
        milliseconds: ((micros / 1000) % 1000) as u16,
        microseconds: (micros % 1000) as u16,
    }
}

/// Serializes a header and JPEG payloads into `.seq` bytes.
///
/// Intended for fixtures; timestamps are synthesized as `i / fps`.
pub fn write_seq<P: AsRef<[u8]>>(header: &SeqHeader, payloads: &[P]) -> Result<Vec<u8>, SeqError> {
    header.validate()?;
    if header.frame_count as usize != payloads.len() {
        return Err(SeqError::CountMismatch {
            declared: header.frame_count,
            given: payloads.len(),
        });
    }
    let desc: Vec<u16> = header.description.encode_utf16().collect();
    if desc.len() * 2 > DESCRIPTION_BYTES {
        return Err(SeqError::InvalidHeader(format!(
            "description is {} bytes, limit {DESCRIPTION_BYTES}",
            desc.len() * 2
        )));
    }
    if let Some(i) = payloads.iter().position(|p| !p.as_ref().starts_with(&[0xFF, 0xD8])) {
        return Err(SeqError::InvalidHeader(format!(
            "payload {i} does not start with a JPEG SOI marker"
        )));
    }

    let body: usize = payloads.iter().map(|p| p.as_ref().len() + RECORD_OVERHEAD).sum();
    let mut out = vec![0u8; HEADER_SIZE];
    out.reserve(body);
    out[0..4].copy_from_slice(&header.magic.to_le_bytes());
    for (i, u) in SIGNATURE.encode_utf16().enumerate() {
        out[4 + 2 * i..6 + 2 * i].copy_from_slice(&u.to_le_bytes());
    }
    out[28..32].copy_from_slice(&header.version.to_le_bytes());
    out[32..36].copy_from_slice(&(HEADER_SIZE as u32).to_le_bytes());
    for (i, u) in desc.iter().enumerate() {
        let o = DESCRIPTION_OFFSET + 2 * i;
        out[o..o + 2].copy_from_slice(&u.to_le_bytes());
    }
    let fields = [
        (548, header.width),
        (552, header.height),
        (556, header.bit_depth),
        (560, header.bit_depth_real),
        (564, header.image_size_bytes),
        (568, header.image_format),
        (572, header.frame_count),
        (576, 0),
        (580, header.true_image_size),
    ];
    for (off, v) in fields {
        out[off..off + 4].copy_from_slice(&v.to_le_bytes());
    }
    out[584..592].copy_from_slice(&header.fps.to_le_bytes());

    for (i, p) in payloads.iter().enumerate() {
        let p = p.as_ref();
        out.extend_from_slice(&((p.len() + 4) as u32).to_le_bytes());
        out.extend_from_slice(p);
        let ts = timestamp_for(i, header.fps);
        out.extend_from_slice(&ts.seconds.to_le_bytes());
        out.extend_from_slice(&ts.milliseconds.to_le_bytes());
        out.extend_from_slice(&ts.microseconds.to_le_bytes());
    }
    Ok(out)
}
