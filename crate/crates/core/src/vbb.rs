//! `.vbb` annotation files: the `A` record of a MAT-file mapped to typed
//! per-frame objects.
//!
//! Boxes are kept exactly as stored (1-based left/top). Use
//! [`VbbObject::pixel_box`] to get 0-based pixel coordinates.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::BBox;
use crate::mat::writer::{write_mat, WriteOptions};
use crate::mat::{parse_mat, MatArray, MatError, MatVariable};

pub const ROOT_VARIABLE: &str = "A";
const REQUIRED_FIELDS: [&str; 4] = ["nFrame", "objLists", "objLbl", "maxObj"];
const OBJECT_FIELDS: [&str; 5] = ["id", "pos", "posv", "occl", "lock"];

#[derive(Debug, Error, PartialEq)]
pub enum VbbError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("missing field {0}")]
    MissingField(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OcclusionPolicy {
    /// Use the full extent (`pos`).
    FullBox,
    /// Use the visible region (`posv`), falling back to `pos` when it is empty.
    VisibleBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VbbObject {
    pub id: u32,
    pub frame: usize,
    /// Full extent, 1-based left/top as stored.
    pub pos: BBox,
    /// Visible region, 1-based; all zeros when unset.
    pub posv: BBox,
    pub occluded: bool,
    pub locked: bool,
    pub label: String,
}

impl VbbObject {
    /// Box selected by `policy`, in 0-based pixel coordinates.
    pub fn pixel_box(&self, policy: OcclusionPolicy) -> BBox {
        let b = match policy {
            OcclusionPolicy::VisibleBox if !self.posv.is_empty() => self.posv,
            _ => self.pos,
        };
        BBox::from_one_based(b.left, b.top, b.width, b.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VbbFile {
    pub n_frame: usize,
    pub obj_lists: Vec<Vec<VbbObject>>,
    /// Label of object id `i` is `labels[i - 1]`.
    pub labels: Vec<String>,
    pub max_obj: u32,
    /// Fields of `A` that are carried along but not interpreted, in file order.
    pub extra: Vec<(String, MatArray)>,
}

impl VbbFile {
    pub fn object_count(&self) -> usize {
        self.obj_lists.iter().map(Vec::len).sum()
    }

    pub fn objects(&self) -> impl Iterator<Item = &VbbObject> {
        self.obj_lists.iter().flatten()
    }

    /// Non-fatal findings, currently visible regions that leave the full box.
    pub fn lint(&self) -> Vec<String> {
        self.objects()
            .filter(|o| !o.posv.is_empty() && !o.pos.contains(&o.posv, 0.5))
            .map(|o| {
                format!(
                    "frame {} object {}: visible box {:?} extends outside full box {:?}",
                    o.frame, o.id, o.posv, o.pos
                )
            })
            .collect()
    }
}

fn field<'a>(record: &'a MatArray, index: usize, name: &str) -> Result<&'a MatArray, VbbError> {
    record
        .field(index, name)
        .ok_or_else(|| VbbError::MissingField(name.to_string()))
}

fn scalar(a: &MatArray, what: &str) -> Result<f64, VbbError> {
    a.as_scalar().ok_or_else(|| {
        VbbError::SchemaMismatch(format!(
            "{what} must be a numeric scalar, found {} {:?}",
            a.class_name(),
            a.dims()
        ))
    })
}

fn count(a: &MatArray, what: &str) -> Result<usize, VbbError> {
    let v = scalar(a, what)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(VbbError::SchemaMismatch(format!("{what} = {v} is not a count")));
    }
    Ok(v as usize)
}

fn rect(a: &MatArray, what: &str) -> Result<BBox, VbbError> {
    match a.as_numeric() {
        Some([l, t, w, h]) => Ok(BBox::new(*l, *t, *w, *h)),
        Some([]) => Ok(BBox::new(0.0, 0.0, 0.0, 0.0)),
        _ => Err(VbbError::SchemaMismatch(format!(
            "{what} must have 4 numeric values, found {} {:?}",
            a.class_name(),
            a.dims()
        ))),
    }
}

fn parse_frame(
    frame: usize,
    cell: &MatArray,
    labels: &[String],
    max_obj: u32,
) -> Result<Vec<VbbObject>, VbbError> {
    match cell {
        MatArray::Struct { elements, .. } => {
            let mut objects = Vec::with_capacity(elements.len());
            for i in 0..elements.len() {
                let ctx = |f: &str| format!("objLists{{{}}}({}).{f}", frame + 1, i + 1);
                let id = scalar(field(cell, i, "id")?, &ctx("id"))?;
                if id < 1.0 || id.fract() != 0.0 || id > max_obj as f64 {
                    return Err(VbbError::SchemaMismatch(format!(
                        "{} = {id} outside 1..={max_obj}",
                        ctx("id")
                    )));
                }
                let id = id as u32;
                let label = labels.get(id as usize - 1).ok_or_else(|| {
                    VbbError::SchemaMismatch(format!(
                        "{}: id {id} has no entry in objLbl ({} labels)",
                        ctx("id"),
                        labels.len()
                    ))
                })?;
                let pos = rect(field(cell, i, "pos")?, &ctx("pos"))?;
                if pos.width < 0.0 || pos.height < 0.0 {
                    return Err(VbbError::SchemaMismatch(format!(
                        "{} has negative size {pos:?}",
                        ctx("pos")
                    )));
                }
                objects.push(VbbObject {
                    id,
                    frame,
                    pos,
                    posv: rect(field(cell, i, "posv")?, &ctx("posv"))?,
                    occluded: scalar(field(cell, i, "occl")?, &ctx("occl"))? != 0.0,
                    locked: scalar(field(cell, i, "lock")?, &ctx("lock"))? != 0.0,
                    label: label.clone(),
                });
            }
            Ok(objects)
        }
        other if other.is_empty() => Ok(Vec::new()),
        other => Err(VbbError::SchemaMismatch(format!(
            "objLists{{{}}} must be a struct array, found {}",
            frame + 1,
            other.class_name()
        ))),
    }
}

/// Maps a parsed annotation record into a [`VbbFile`].
pub fn vbb_from_record(a: &MatArray) -> Result<VbbFile, VbbError> {
    let MatArray::Struct { field_names, elements, .. } = a else {
        return Err(VbbError::SchemaMismatch(format!(
            "{ROOT_VARIABLE} must be a struct, found {}",
            a.class_name()
        )));
    };
    if elements.len() != 1 {
        return Err(VbbError::SchemaMismatch(format!(
            "{ROOT_VARIABLE} must be a 1x1 struct, has {} elements",
            elements.len()
        )));
    }
    let n_frame = count(field(a, 0, "nFrame")?, "nFrame")?;
    let max_obj = count(field(a, 0, "maxObj")?, "maxObj")? as u32;

    let labels = match field(a, 0, "objLbl")? {
        MatArray::Cell { cells, .. } => cells
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                MatArray::Char { text, .. } => Ok(text.clone()),
                c if c.is_empty() => Ok(String::new()),
                c => Err(VbbError::SchemaMismatch(format!(
                    "objLbl{{{}}} must be char, found {}",
                    i + 1,
                    c.class_name()
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?,
        c if c.is_empty() => Vec::new(),
        c => {
            return Err(VbbError::SchemaMismatch(format!(
                "objLbl must be a cell array, found {}",
                c.class_name()
            )))
        }
    };

    let obj_lists = match field(a, 0, "objLists")? {
        MatArray::Cell { cells, .. } => {
            if cells.len() != n_frame {
                return Err(VbbError::SchemaMismatch(format!(
                    "objLists has {} cells but nFrame = {n_frame}",
                    cells.len()
                )));
            }
            cells
                .iter()
                .enumerate()
                .map(|(f, c)| parse_frame(f, c, &labels, max_obj))
                .collect::<Result<Vec<_>, _>>()?
        }
        c if c.is_empty() && n_frame == 0 => Vec::new(),
        c => {
            return Err(VbbError::SchemaMismatch(format!(
                "objLists must be a cell array with nFrame cells, found {} {:?}",
                c.class_name(),
                c.dims()
            )))
        }
    };

    let extra = field_names
        .iter()
        .zip(&elements[0])
        .filter(|(n, _)| !REQUIRED_FIELDS.contains(&n.as_str()))
        .map(|(n, v)| (n.clone(), v.clone()))
        .collect();

    Ok(VbbFile {
        n_frame,
        obj_lists,
        labels,
        max_obj,
        extra,
    })
}

pub fn parse_vbb(bytes: &[u8]) -> Result<VbbFile, VbbError> {
    let mat = parse_mat(bytes)?;
    let a = mat
        .get(ROOT_VARIABLE)
        .ok_or_else(|| VbbError::MissingField(ROOT_VARIABLE.to_string()))?;
    vbb_from_record(a)
}

#[derive(Serialize)]
struct JsonObject<'a> {
    frame: usize,
    id: u32,
    label: &'a str,
    pos: [f64; 4],
    posv: [f64; 4],
    occluded: bool,
    locked: bool,
}

#[derive(Serialize)]
struct JsonFile<'a> {
    n_frame: usize,
    objects: Vec<JsonObject<'a>>,
    max_obj: u32,
    labels: &'a [String],
    object_count: usize,
}

fn rect_array(b: &BBox) -> [f64; 4] {
    [b.left, b.top, b.width, b.height]
}

/// Compact JSON dump with a fixed key order (see `docs/FORMATS.md`).
pub fn vbb_to_json(v: &VbbFile) -> String {
    let doc = JsonFile {
        n_frame: v.n_frame,
        objects: v
            .objects()
            .map(|o| JsonObject {
                frame: o.frame,
                id: o.id,
                label: &o.label,
                pos: rect_array(&o.pos),
                posv: rect_array(&o.posv),
                occluded: o.occluded,
                locked: o.locked,
            })
            .collect(),
        max_obj: v.max_obj,
        labels: &v.labels,
        object_count: v.object_count(),
    };
    serde_json::to_string(&doc).expect("serializing plain data")
}

fn bool_scalar(b: bool) -> MatArray {
    MatArray::scalar(if b { 1.0 } else { 0.0 })
}

/// Builds the `A` record for `v`; the inverse of [`vbb_from_record`].
pub fn vbb_to_record(v: &VbbFile) -> MatArray {
    let obj_lists = v
        .obj_lists
        .iter()
        .map(|objs| {
            if objs.is_empty() {
                return MatArray::empty();
            }
            MatArray::Struct {
                dims: vec![1, objs.len()],
                field_names: OBJECT_FIELDS.iter().map(|s| s.to_string()).collect(),
                elements: objs
                    .iter()
                    .map(|o| {
                        vec![
                            MatArray::scalar(o.id as f64),
                            MatArray::row(&rect_array(&o.pos)),
                            MatArray::row(&rect_array(&o.posv)),
                            bool_scalar(o.occluded),
                            bool_scalar(o.locked),
                        ]
                    })
                    .collect(),
            }
        })
        .collect();
    let mut names: Vec<String> = vec![
        "nFrame".into(),
        "objLists".into(),
        "maxObj".into(),
        "objLbl".into(),
    ];
    let mut values = vec![
        MatArray::scalar(v.n_frame as f64),
        MatArray::Cell {
            dims: vec![1, v.n_frame],
            cells: obj_lists,
        },
        MatArray::scalar(v.max_obj as f64),
        MatArray::Cell {
            dims: vec![1, v.labels.len()],
            cells: v.labels.iter().map(|l| MatArray::string(l)).collect(),
        },
    ];
    for (n, a) in &v.extra {
        names.push(n.clone());
        values.push(a.clone());
    }
    MatArray::Struct {
        dims: vec![1, 1],
        field_names: names,
        elements: vec![values],
    }
}

/// Serializes `v` as a `.vbb` MAT-file. Intended for fixtures.
pub fn write_vbb_fixture(v: &VbbFile, opts: WriteOptions) -> Vec<u8> {
    write_mat(
        &[MatVariable {
            name: ROOT_VARIABLE.to_string(),
            array: vbb_to_record(v),
        }],
        opts,
    )
}
