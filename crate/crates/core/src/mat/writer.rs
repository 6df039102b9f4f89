//! Minimal MAT-file Level-5 writer used to build test fixtures.
//!
//! It emits exactly the subset [`super::parse_mat`] understands and is not
//! meant for producing files for other tools.

use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use super::{mi, ArrayClass, Endianness, MatArray, MatVariable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteOptions {
    pub endianness: Endianness,
    /// Wrap each top-level variable in a zlib-compressed element.
    pub compress: bool,
    /// Store integer-valued doubles in 0..=255 as `miUINT8`, like MATLAB does.
    pub compact_integers: bool,
    /// Use the packed tag form for elements of at most 4 bytes.
    pub small_elements: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        Self {
            endianness: Endianness::Little,
            compress: false,
            compact_integers: false,
            small_elements: true,
        }
    }
}

struct Writer {
    opts: WriteOptions,
}

impl Writer {
    fn u32(&self, v: u32) -> [u8; 4] {
        match self.opts.endianness {
            Endianness::Little => v.to_le_bytes(),
            Endianness::Big => v.to_be_bytes(),
        }
    }

    fn element(&self, out: &mut Vec<u8>, data_type: u32, data: &[u8]) {
        if self.opts.small_elements && (1..=4).contains(&data.len()) {
            out.extend_from_slice(&self.u32(((data.len() as u32) << 16) | data_type));
            out.extend_from_slice(data);
            out.resize(out.len() + 4 - data.len(), 0);
            return;
        }
        out.extend_from_slice(&self.u32(data_type));
        out.extend_from_slice(&self.u32(data.len() as u32));
        out.extend_from_slice(data);
        if data_type != mi::COMPRESSED {
            let padded = out.len().next_multiple_of(8);
            out.resize(padded, 0);
        }
    }

    fn i32s(&self, vals: &[i32]) -> Vec<u8> {
        vals.iter()
            .flat_map(|&v| self.u32(v as u32))
            .collect()
    }

    fn numeric(&self, out: &mut Vec<u8>, values: &[f64]) {
        let small_ints = values
            .iter()
            .all(|v| v.fract() == 0.0 && (0.0..=255.0).contains(v));
        if self.opts.compact_integers && small_ints && !values.is_empty() {
            let data: Vec<u8> = values.iter().map(|&v| v as u8).collect();
            self.element(out, mi::UINT8, &data);
        } else {
            let data: Vec<u8> = values
                .iter()
                .flat_map(|&v| match self.opts.endianness {
                    Endianness::Little => v.to_le_bytes(),
                    Endianness::Big => v.to_be_bytes(),
                })
                .collect();
            self.element(out, mi::DOUBLE, &data);
        }
    }

    fn matrix(&self, out: &mut Vec<u8>, name: &str, array: &MatArray) {
        let mut body = Vec::new();
        let (class, logical, complex) = match array {
            MatArray::Numeric {
                class,
                logical,
                imag,
                ..
            } => (*class, *logical, imag.is_some()),
            MatArray::Char { .. } => (ArrayClass::Char, false, false),
            MatArray::Cell { .. } => (ArrayClass::Cell, false, false),
            MatArray::Struct { .. } => (ArrayClass::Struct, false, false),
        };
        let flags = class as u32 | if complex { 0x0800 } else { 0 } | if logical { 0x0200 } else { 0 };
        let mut flag_bytes = self.u32(flags).to_vec();
        flag_bytes.extend_from_slice(&self.u32(0));
        // Array flags always take the full tag form.
        body.extend_from_slice(&self.u32(mi::UINT32));
        body.extend_from_slice(&self.u32(8));
        body.extend_from_slice(&flag_bytes);

        let dims: Vec<i32> = array.dims().iter().map(|&d| d as i32).collect();
        self.element(&mut body, mi::INT32, &self.i32s(&dims));
        self.element(&mut body, mi::INT8, name.as_bytes());

        match array {
            MatArray::Numeric { real, imag, .. } => {
                self.numeric(&mut body, real);
                if let Some(im) = imag {
                    self.numeric(&mut body, im);
                }
            }
            MatArray::Char { text, .. } => {
                let data: Vec<u8> = text
                    .encode_utf16()
                    .flat_map(|u| match self.opts.endianness {
                        Endianness::Little => u.to_le_bytes(),
                        Endianness::Big => u.to_be_bytes(),
                    })
                    .collect();
                self.element(&mut body, mi::UINT16, &data);
            }
            MatArray::Cell { cells, .. } => {
                for c in cells {
                    self.matrix(&mut body, "", c);
                }
            }
            MatArray::Struct {
                field_names,
                elements,
                ..
            } => {
                let name_len = field_names.iter().map(|n| n.len() + 1).max().unwrap_or(1).max(8);
                let name_len = name_len.next_multiple_of(8).min(64);
                self.element(&mut body, mi::INT32, &self.i32s(&[name_len as i32]));
                let mut names = Vec::new();
                for n in field_names {
                    let mut b = n.as_bytes().to_vec();
                    b.resize(name_len, 0);
                    names.extend_from_slice(&b);
                }
                self.element(&mut body, mi::INT8, &names);
                for e in elements {
                    for f in e {
                        self.matrix(&mut body, "", f);
                    }
                }
            }
        }
        out.extend_from_slice(&self.u32(mi::MATRIX));
        out.extend_from_slice(&self.u32(body.len() as u32));
        out.extend_from_slice(&body);
    }
}

/// Serializes variables into MAT-file Level-5 bytes.
pub fn write_mat(variables: &[MatVariable], opts: WriteOptions) -> Vec<u8> {
    let w = Writer { opts };
    let mut out = Vec::new();
    let mut text = b"MATLAB 5.0 MAT-file, written by pedkit fixture writer".to_vec();
    text.resize(116, b' ');
    out.extend_from_slice(&text);
    out.extend_from_slice(&[0; 8]);
    match opts.endianness {
        Endianness::Little => {
            out.extend_from_slice(&0x0100u16.to_le_bytes());
            out.extend_from_slice(b"IM");
        }
        Endianness::Big => {
            out.extend_from_slice(&0x0100u16.to_be_bytes());
            out.extend_from_slice(b"MI");
        }
    }
    for v in variables {
        let mut el = Vec::new();
        w.matrix(&mut el, &v.name, &v.array);
        if opts.compress {
            let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
            enc.write_all(&el).expect("in-memory write");
            let z = enc.finish().expect("in-memory write");
            w.element(&mut out, mi::COMPRESSED, &z);
        } else {
            out.extend_from_slice(&el);
        }
    }
    out
}
