use std::io::Read;

use flate2::read::ZlibDecoder;

use super::{mi, ArrayClass, Endianness, MatArray, MatError, MatFile, MatVariable};

const HEADER_LEN: usize = 128;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    endian: Endianness,
    /// Absolute offset of `data[0]` in the input, for error messages.
    /// Inside a compressed element this is the element's own offset.
    base: usize,
    compressed: bool,
}

struct Element<'a> {
    data_type: u32,
    data: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8], endian: Endianness, base: usize, compressed: bool) -> Self {
        Self {
            data,
            pos: 0,
            endian,
            base,
            compressed,
        }
    }

    fn offset(&self) -> usize {
        if self.compressed {
            self.base
        } else {
            self.base + self.pos
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn truncated(&self, detail: impl Into<String>) -> MatError {
        MatError::Truncated {
            offset: self.offset(),
            detail: detail.into(),
        }
    }

    fn u32(&mut self) -> Result<u32, MatError> {
        let b = self
            .data
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| self.truncated("need 4 bytes for a tag word"))?;
        self.pos += 4;
        let b: [u8; 4] = b.try_into().unwrap();
        Ok(match self.endian {
            Endianness::Little => u32::from_le_bytes(b),
            Endianness::Big => u32::from_be_bytes(b),
        })
    }

    /// Reads one data element; both the 8-byte tag and the packed small form.
    fn element(&mut self) -> Result<Element<'a>, MatError> {
        let offset = self.offset();
        let first = self.u32()?;
        if first >> 16 != 0 {
            let data_type = first & 0xFFFF;
            let n = (first >> 16) as usize;
            if n > 4 {
                return Err(MatError::Malformed {
                    offset,
                    detail: format!("small element claims {n} bytes"),
                });
            }
            let data = self
                .data
                .get(self.pos..self.pos + 4)
                .ok_or_else(|| self.truncated("small element payload"))?;
            self.pos += 4;
            return Ok(Element {
                data_type,
                data: &data[..n],
                offset,
            });
        }
        let data_type = first;
        let n = self.u32()? as usize;
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let Some(end) = end else {
            return Err(self.truncated(format!(
                "element of type {data_type} needs {n} bytes, {} remain",
                self.data.len() - self.pos
            )));
        };
        let data = &self.data[self.pos..end];
        self.pos = if data_type == mi::COMPRESSED {
            end
        } else {
            // Padding to the next 8-byte boundary; a missing final pad is tolerated.
            end.next_multiple_of(8).min(self.data.len())
        };
        Ok(Element {
            data_type,
            data,
            offset,
        })
    }
}

fn numeric_values(el: &Element, endian: Endianness) -> Result<Vec<f64>, MatError> {
    macro_rules! conv {
        ($t:ty) => {{
            const N: usize = std::mem::size_of::<$t>();
            if !el.data.len().is_multiple_of(N) {
                return Err(MatError::Malformed {
                    offset: el.offset,
                    detail: format!("{} bytes is not a multiple of {}", el.data.len(), N),
                });
            }
            el.data
                .chunks_exact(N)
                .map(|c| {
                    let b: [u8; N] = c.try_into().unwrap();
                    (match endian {
                        Endianness::Little => <$t>::from_le_bytes(b),
                        Endianness::Big => <$t>::from_be_bytes(b),
                    }) as f64
                })
                .collect()
        }};
    }
    Ok(match el.data_type {
        mi::INT8 => conv!(i8),
        mi::UINT8 => conv!(u8),
        mi::INT16 => conv!(i16),
        mi::UINT16 => conv!(u16),
        mi::INT32 => conv!(i32),
        mi::UINT32 => conv!(u32),
        mi::SINGLE => conv!(f32),
        mi::DOUBLE => conv!(f64),
        mi::INT64 => conv!(i64),
        mi::UINT64 => conv!(u64),
        other => {
            return Err(MatError::UnsupportedElementType {
                data_type: other,
                offset: el.offset,
            })
        }
    })
}

fn char_text(el: &Element, endian: Endianness) -> Result<String, MatError> {
    match el.data_type {
        mi::UINT16 | mi::UTF16 => {
            if !el.data.len().is_multiple_of(2) {
                return Err(MatError::Malformed {
                    offset: el.offset,
                    detail: "odd-length UTF-16 data".into(),
                });
            }
            let units: Vec<u16> = el
                .data
                .chunks_exact(2)
                .map(|c| match endian {
                    Endianness::Little => u16::from_le_bytes([c[0], c[1]]),
                    Endianness::Big => u16::from_be_bytes([c[0], c[1]]),
                })
                .collect();
            Ok(String::from_utf16_lossy(&units))
        }
        mi::UTF8 | mi::UINT8 | mi::INT8 => Ok(String::from_utf8_lossy(el.data).into_owned()),
        other => Err(MatError::UnsupportedElementType {
            data_type: other,
            offset: el.offset,
        }),
    }
}

fn expect_type(el: &Element, types: &[u32], what: &str) -> Result<(), MatError> {
    if types.contains(&el.data_type) {
        Ok(())
    } else {
        Err(MatError::Malformed {
            offset: el.offset,
            detail: format!("{what}: unexpected element type {}", el.data_type),
        })
    }
}

/// Parses the body of a `miMATRIX` element into its name and array.
fn parse_matrix(
    data: &[u8],
    endian: Endianness,
    base: usize,
    compressed: bool,
) -> Result<(String, MatArray), MatError> {
    if data.is_empty() {
        return Ok((String::new(), MatArray::empty()));
    }
    let mut cur = Cursor::new(data, endian, base, compressed);

    let flags_el = cur.element()?;
    expect_type(&flags_el, &[mi::UINT32], "array flags")?;
    if flags_el.data.len() < 4 {
        return Err(MatError::Truncated {
            offset: flags_el.offset,
            detail: "array flags".into(),
        });
    }
    let flags = numeric_values(&flags_el, endian)?[0] as u32;
    let class_code = (flags & 0xFF) as u8;
    let complex = flags & 0x0800 != 0;
    let logical = flags & 0x0200 != 0;
    let class = ArrayClass::from_code(class_code).ok_or(MatError::UnsupportedClass {
        class: class_code,
        offset: flags_el.offset,
    })?;

    let dims_el = cur.element()?;
    expect_type(&dims_el, &[mi::INT32], "dimensions")?;
    let dims: Vec<usize> = numeric_values(&dims_el, endian)?
        .into_iter()
        .map(|d| d.max(0.0) as usize)
        .collect();
    let numel: usize = dims.iter().product();

    let name_el = cur.element()?;
    expect_type(&name_el, &[mi::INT8, mi::UINT8], "array name")?;
    let name = String::from_utf8_lossy(name_el.data).into_owned();

    let array = match class {
        ArrayClass::Char => {
            let text = if cur.at_end() {
                String::new()
            } else {
                char_text(&cur.element()?, endian)?
            };
            MatArray::Char { dims, text }
        }
        ArrayClass::Cell => {
            let mut cells = Vec::with_capacity(numel);
            for _ in 0..numel {
                cells.push(sub_matrix(&mut cur)?);
            }
            MatArray::Cell { dims, cells }
        }
        ArrayClass::Struct => {
            let len_el = cur.element()?;
            expect_type(&len_el, &[mi::INT32], "field name length")?;
            let name_len = numeric_values(&len_el, endian)?
                .first()
                .copied()
                .unwrap_or(0.0) as usize;
            let names_el = cur.element()?;
            expect_type(&names_el, &[mi::INT8, mi::UINT8], "field names")?;
            if name_len == 0 && !names_el.data.is_empty() {
                return Err(MatError::Malformed {
                    offset: names_el.offset,
                    detail: "zero field name length".into(),
                });
            }
            let field_names: Vec<String> = if name_len == 0 {
                Vec::new()
            } else {
                names_el
                    .data
                    .chunks(name_len)
                    .map(|c| {
                        let end = c.iter().position(|&b| b == 0).unwrap_or(c.len());
                        String::from_utf8_lossy(&c[..end]).into_owned()
                    })
                    .collect()
            };
            let mut elements = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut fields = Vec::with_capacity(field_names.len());
                for _ in 0..field_names.len() {
                    fields.push(sub_matrix(&mut cur)?);
                }
                elements.push(fields);
            }
            MatArray::Struct {
                dims,
                field_names,
                elements,
            }
        }
        _ => {
            let real_el = cur.element()?;
            let real = numeric_values(&real_el, endian)?;
            if real.len() != numel {
                return Err(MatError::Malformed {
                    offset: real_el.offset,
                    detail: format!("{} values for {numel} elements", real.len()),
                });
            }
            let imag = if complex {
                Some(numeric_values(&cur.element()?, endian)?)
            } else {
                None
            };
            MatArray::Numeric {
                class,
                logical,
                dims,
                real,
                imag,
            }
        }
    };
    Ok((name, array))
}

fn sub_matrix(cur: &mut Cursor) -> Result<MatArray, MatError> {
    let el = cur.element()?;
    if el.data_type != mi::MATRIX {
        return Err(MatError::UnsupportedElementType {
            data_type: el.data_type,
            offset: el.offset,
        });
    }
    let base = if cur.compressed { cur.base } else { el.offset + 8 };
    parse_matrix(el.data, cur.endian, base, cur.compressed).map(|(_, a)| a)
}

fn top_level(
    el: &Element,
    endian: Endianness,
    out: &mut Vec<MatVariable>,
) -> Result<(), MatError> {
    match el.data_type {
        mi::MATRIX => {
            let (name, array) = parse_matrix(el.data, endian, el.offset + 8, false)?;
            out.push(MatVariable { name, array });
            Ok(())
        }
        mi::COMPRESSED => {
            let mut inflated = Vec::new();
            ZlibDecoder::new(el.data)
                .read_to_end(&mut inflated)
                .map_err(|e| MatError::DecompressFailure {
                    offset: el.offset,
                    reason: e.to_string(),
                })?;
            let mut cur = Cursor::new(&inflated, endian, el.offset, true);
            while !cur.at_end() {
                let inner = cur.element()?;
                match inner.data_type {
                    mi::MATRIX => {
                        let (name, array) = parse_matrix(inner.data, endian, el.offset, true)?;
                        out.push(MatVariable { name, array });
                    }
                    other => {
                        return Err(MatError::UnsupportedElementType {
                            data_type: other,
                            offset: el.offset,
                        })
                    }
                }
            }
            Ok(())
        }
        other => Err(MatError::UnsupportedElementType {
            data_type: other,
            offset: el.offset,
        }),
    }
}

/// Parses a MAT-file Level-5 byte stream into its top-level variables.
pub fn parse_mat(bytes: &[u8]) -> Result<MatFile, MatError> {
    if bytes.len() < HEADER_LEN {
        return Err(MatError::BadHeader(format!(
            "need {HEADER_LEN} header bytes, got {}",
            bytes.len()
        )));
    }
    let endian = match &bytes[126..128] {
        b"IM" => Endianness::Little,
        b"MI" => Endianness::Big,
        other => {
            return Err(MatError::BadHeader(format!(
                "endian indicator {:?} is neither \"IM\" nor \"MI\"",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let vb = [bytes[124], bytes[125]];
    let version = match endian {
        Endianness::Little => u16::from_le_bytes(vb),
        Endianness::Big => u16::from_be_bytes(vb),
    };
    if version != 0x0100 {
        return Err(MatError::BadHeader(format!("version {version:#06x}, expected 0x0100")));
    }
    let text_end = bytes[..116]
        .iter()
        .rposition(|&b| b != b' ' && b != 0)
        .map_or(0, |p| p + 1);
    let header_text = String::from_utf8_lossy(&bytes[..text_end]).into_owned();

    let mut cur = Cursor::new(&bytes[HEADER_LEN..], endian, HEADER_LEN, false);
    let mut variables = Vec::new();
    while !cur.at_end() {
        let el = cur.element()?;
        top_level(&el, endian, &mut variables)?;
    }
    Ok(MatFile {
        header_text,
        endianness: endian,
        variables,
    })
}
