//! A constrained MAT-file Level-5 reader covering what `.vbb` files need:
//! numeric, character, cell and structure arrays, optionally wrapped in
//! zlib-compressed elements, in either byte order.

mod reader;
pub mod writer;

pub use reader::parse_mat;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatError {
    #[error("bad MAT header: {0}")]
    BadHeader(String),
    #[error("unsupported element type {data_type} at offset {offset}")]
    UnsupportedElementType { data_type: u32, offset: usize },
    #[error("unsupported array class {class} at offset {offset}")]
    UnsupportedClass { class: u8, offset: usize },
    #[error("zlib decompression failed at offset {offset}: {reason}")]
    DecompressFailure { offset: usize, reason: String },
    #[error("truncated MAT data at offset {offset}: {detail}")]
    Truncated { offset: usize, detail: String },
    #[error("malformed element at offset {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

/// Data element type codes (`mi*`).
pub mod mi {
    pub const INT8: u32 = 1;
    pub const UINT8: u32 = 2;
    pub const INT16: u32 = 3;
    pub const UINT16: u32 = 4;
    pub const INT32: u32 = 5;
    pub const UINT32: u32 = 6;
    pub const SINGLE: u32 = 7;
    pub const DOUBLE: u32 = 9;
    pub const INT64: u32 = 12;
    pub const UINT64: u32 = 13;
    pub const MATRIX: u32 = 14;
    pub const COMPRESSED: u32 = 15;
    pub const UTF8: u32 = 16;
    pub const UTF16: u32 = 17;
    pub const UTF32: u32 = 18;
}

/// Array class codes (`mx*_CLASS`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayClass {
    Cell = 1,
    Struct = 2,
    Char = 4,
    Double = 6,
    Single = 7,
    Int8 = 8,
    UInt8 = 9,
    Int16 = 10,
    UInt16 = 11,
    Int32 = 12,
    UInt32 = 13,
    Int64 = 14,
    UInt64 = 15,
}

impl ArrayClass {
    pub fn from_code(code: u8) -> Option<Self> {
        use ArrayClass::*;
        Some(match code {
            1 => Cell,
            2 => Struct,
            4 => Char,
            6 => Double,
            7 => Single,
            8 => Int8,
            9 => UInt8,
            10 => Int16,
            11 => UInt16,
            12 => Int32,
            13 => UInt32,
            14 => Int64,
            15 => UInt64,
            _ => return None,
        })
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, ArrayClass::Cell | ArrayClass::Struct | ArrayClass::Char)
    }
}

/// One node of the parsed element tree.
///
/// Numeric data is widened to `f64` regardless of the storage type.
/// Character data is kept in column-major order as stored.
#[derive(Debug, Clone, PartialEq)]
pub enum MatArray {
    Numeric {
        class: ArrayClass,
        logical: bool,
        dims: Vec<usize>,
        real: Vec<f64>,
        imag: Option<Vec<f64>>,
    },
    Char {
        dims: Vec<usize>,
        text: String,
    },
    Cell {
        dims: Vec<usize>,
        cells: Vec<MatArray>,
    },
    Struct {
        dims: Vec<usize>,
        field_names: Vec<String>,
        /// `elements[i][f]` is field `f` of element `i` (column-major).
        elements: Vec<Vec<MatArray>>,
    },
}

impl MatArray {
    pub fn dims(&self) -> &[usize] {
        match self {
            MatArray::Numeric { dims, .. }
            | MatArray::Char { dims, .. }
            | MatArray::Cell { dims, .. }
            | MatArray::Struct { dims, .. } => dims,
        }
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.numel() == 0
    }

    pub fn class_name(&self) -> &'static str {
        match self {
            MatArray::Numeric { .. } => "numeric",
            MatArray::Char { .. } => "char",
            MatArray::Cell { .. } => "cell",
            MatArray::Struct { .. } => "struct",
        }
    }

    pub fn double(dims: Vec<usize>, real: Vec<f64>) -> Self {
        MatArray::Numeric {
            class: ArrayClass::Double,
            logical: false,
            dims,
            real,
            imag: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::double(vec![1, 1], vec![v])
    }

    pub fn row(values: &[f64]) -> Self {
        Self::double(vec![1, values.len()], values.to_vec())
    }

    pub fn empty() -> Self {
        Self::double(vec![0, 0], Vec::new())
    }

    pub fn string(s: &str) -> Self {
        MatArray::Char {
            dims: vec![1, s.encode_utf16().count()],
            text: s.to_string(),
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            MatArray::Numeric { real, .. } => Some(real),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self.as_numeric() {
            Some([v]) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            MatArray::Char { text, .. } => Some(text),
            _ => None,
        }
    }

    /// Field `name` of struct element `index`.
    pub fn field(&self, index: usize, name: &str) -> Option<&MatArray> {
        match self {
            MatArray::Struct {
                field_names,
                elements,
                ..
            } => {
                let f = field_names.iter().position(|n| n == name)?;
                elements.get(index).map(|e| &e[f])
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatVariable {
    pub name: String,
    pub array: MatArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatFile {
    pub header_text: String,
    pub endianness: Endianness,
    pub variables: Vec<MatVariable>,
}

impl MatFile {
    pub fn get(&self, name: &str) -> Option<&MatArray> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .map(|v| &v.array)
    }
}
