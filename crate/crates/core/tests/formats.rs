mod support;

use pedkit_core::geometry::BBox;
use pedkit_core::mat::writer::{write_mat, WriteOptions};
use pedkit_core::mat::{parse_mat, Endianness, MatArray, MatError, MatVariable};
use pedkit_core::seq::{open_seq, write_seq, SeqError, SeqHeader, HEADER_SIZE, RECORD_OVERHEAD};
use pedkit_core::vbb::{parse_vbb, vbb_to_json, write_vbb_fixture, VbbError, VbbFile, VbbObject};
use proptest::prelude::*;
use rand::Rng;
use support::*;

fn header_bytes(endian: Endianness) -> Vec<u8> {
    let mut h = b"MATLAB 5.0 MAT-file, hand-built".to_vec();
    h.resize(116, b' ');
    h.extend_from_slice(&[0; 8]);
    match endian {
        Endianness::Little => h.extend_from_slice(&[0x00, 0x01, b'I', b'M']),
        Endianness::Big => h.extend_from_slice(&[0x01, 0x00, b'M', b'I']),
    }
    h
}

/// `x = 5.0` as an uncompressed miMATRIX element, assembled field by field.
fn scalar_x(endian: Endianness) -> Vec<u8> {
    let u = |v: u32| match endian {
        Endianness::Little => v.to_le_bytes(),
        Endianness::Big => v.to_be_bytes(),
    };
    let mut b = Vec::new();
    b.extend(u(14)); // miMATRIX
    b.extend(u(56));
    b.extend(u(6)); // array flags: miUINT32, 8 bytes
    b.extend(u(8));
    b.extend(u(6)); // class double, no flags
    b.extend(u(0));
    b.extend(u(5)); // dims: miINT32, 8 bytes
    b.extend(u(8));
    b.extend(u(1));
    b.extend(u(1));
    b.extend(u((1 << 16) | 1)); // name: packed miINT8, 1 byte
    b.extend([b'x', 0, 0, 0]);
    b.extend(u(9)); // miDOUBLE, 8 bytes
    b.extend(u(8));
    match endian {
        Endianness::Little => b.extend(5.0f64.to_le_bytes()),
        Endianness::Big => b.extend(5.0f64.to_be_bytes()),
    }
    b
}

#[test]
fn mat_golden_scalar_both_endiannesses() {
    for endian in [Endianness::Little, Endianness::Big] {
        let mut bytes = header_bytes(endian);
        bytes.extend(scalar_x(endian));
        let m = parse_mat(&bytes).unwrap();
        assert_eq!(m.endianness, endian);
        assert_eq!(m.get("x").and_then(MatArray::as_scalar), Some(5.0));

        let written = write_mat(
            &[MatVariable {
                name: "x".into(),
                array: MatArray::scalar(5.0),
            }],
            WriteOptions {
                endianness: endian,
                ..Default::default()
            },
        );
        assert_eq!(&written[128..], &scalar_x(endian)[..], "{endian:?}");
    }
}

#[test]
fn mat_errors_carry_offsets() {
    let mut bytes = header_bytes(Endianness::Little);
    bytes.extend(scalar_x(Endianness::Little));
    assert!(matches!(parse_mat(&bytes[..100]), Err(MatError::BadHeader(_))));
    assert!(matches!(parse_mat(&bytes[..150]), Err(MatError::Truncated { .. })));
    let mut bad = bytes.clone();
    bad[128] = 99;
    assert!(matches!(
        parse_mat(&bad),
        Err(MatError::UnsupportedElementType { data_type: 99, offset: 128 })
    ));
    let mut z = header_bytes(Endianness::Little);
    z.extend(15u32.to_le_bytes());
    z.extend(8u32.to_le_bytes());
    z.extend([1, 2, 3, 4, 5, 6, 7, 8]);
    assert!(matches!(parse_mat(&z), Err(MatError::DecompressFailure { offset: 128, .. })));
}

#[test]
fn seq_golden_layout() {
    let frames = [jpeg(16, 8, 0), jpeg(16, 8, 1)];
    let bytes = write_seq(&SeqHeader::jpeg(16, 8, 2, 30.0), &frames).unwrap();
    assert_eq!(&bytes[0..4], &0xFEEDu32.to_le_bytes());
    assert_eq!(
        &bytes[4..24],
        "Norpix seq".encode_utf16().flat_map(u16::to_le_bytes).collect::<Vec<u8>>().as_slice()
    );
    assert_eq!(u32::from_le_bytes(bytes[548..552].try_into().unwrap()), 16);
    assert_eq!(u32::from_le_bytes(bytes[572..576].try_into().unwrap()), 2);
    let l0 = u32::from_le_bytes(bytes[HEADER_SIZE..HEADER_SIZE + 4].try_into().unwrap()) as usize;
    assert_eq!(l0, frames[0].len() + 4);
    assert_eq!(bytes.len(), HEADER_SIZE + frames.iter().map(|f| f.len() + RECORD_OVERHEAD).sum::<usize>());
}

#[test]
fn seq_rejects_corruption() {
    let bytes = seq_bytes(16, 8, 3);
    assert!(matches!(open_seq(bytes[..bytes.len() - 3].to_vec()), Err(SeqError::Truncated { .. })));
    let mut wrong = bytes.clone();
    wrong[572] = 4;
    assert!(matches!(
        open_seq(wrong),
        Err(SeqError::FrameCountMismatch { declared: 4, found: 3 })
    ));
    let mut magic = bytes;
    magic[0] = 0;
    assert!(matches!(open_seq(magic), Err(SeqError::BadMagic { .. })));
}

#[test]
fn seq_round_trip_randomized() {
    let mut r = rng(21);
    for case in 0..24 {
        let (w, h) = (r.random_range(8..64), r.random_range(8..64));
        let n = r.random_range(0..6);
        let frames: Vec<Vec<u8>> = (0..n).map(|i| jpeg(w, h, (case * 7 + i) as u8)).collect();
        let mut header = SeqHeader::jpeg(w, h, n as u32, r.random_range(1.0..60.0));
        header.description = format!("fixture {case}");
        let seq = open_seq(write_seq(&header, &frames).unwrap()).unwrap();
        assert_eq!(seq.header(), &header);
        assert_eq!(seq.len(), n);
        for (i, f) in frames.iter().enumerate() {
            let rec = seq.read_frame(i).unwrap();
            assert_eq!(rec.payload, f.as_slice());
            assert!(rec.has_jpeg_soi());
        }
        assert!(matches!(seq.read_frame(n), Err(SeqError::IndexOutOfRange { .. })));
    }
}

const LABELS: [&str; 4] = ["person", "people", "person?", "person-fa"];

fn random_vbb(r: &mut impl Rng) -> VbbFile {
    let n_frame = r.random_range(0..25);
    let max_obj = if n_frame == 0 { 0 } else { r.random_range(0..8u32) };
    let labels: Vec<String> = (0..max_obj).map(|_| LABELS[r.random_range(0..4)].to_string()).collect();
    let coord = |r: &mut dyn rand::RngCore| {
        if r.random_bool(0.5) {
            r.random_range(0..300) as f64
        } else {
            r.random_range(0.0..300.0)
        }
    };
    let obj_lists = (0..n_frame)
        .map(|frame| {
            if max_obj == 0 {
                return Vec::new();
            }
            (0..r.random_range(0..4))
                .map(|_| {
                    let id = r.random_range(1..=max_obj);
                    let pos = BBox::new(coord(r), coord(r), coord(r), coord(r));
                    let posv = if r.random_bool(0.5) {
                        BBox::new(0.0, 0.0, 0.0, 0.0)
                    } else {
                        BBox::new(coord(r), coord(r), coord(r), coord(r))
                    };
                    VbbObject {
                        id,
                        frame,
                        pos,
                        posv,
                        occluded: r.random_bool(0.3),
                        locked: r.random_bool(0.3),
                        label: labels[id as usize - 1].clone(),
                    }
                })
                .collect()
        })
        .collect();
    let extra = if r.random_bool(0.5) {
        vec![("log".to_string(), MatArray::string("annotated"))]
    } else {
        vec![]
    };
    VbbFile {
        n_frame,
        obj_lists,
        labels,
        max_obj,
        extra,
    }
}

#[test]
fn vbb_round_trip_all_writer_variants() {
    let mut r = rng(22);
    let mut count = 0;
    for _ in 0..10 {
        let v = random_vbb(&mut r);
        for endianness in [Endianness::Little, Endianness::Big] {
            for compress in [false, true] {
                for compact_integers in [false, true] {
                    let opts = WriteOptions {
                        endianness,
                        compress,
                        compact_integers,
                        small_elements: r.random_bool(0.5),
                    };
                    let back = parse_vbb(&write_vbb_fixture(&v, opts)).unwrap();
                    assert_eq!(back, v, "{opts:?}");
                    assert_eq!(vbb_to_json(&back), vbb_to_json(&v));
                    count += 1;
                }
            }
        }
    }
    assert!(count >= 80);
}

#[test]
fn vbb_schema_errors() {
    let not_struct = write_mat(
        &[MatVariable {
            name: "A".into(),
            array: MatArray::scalar(1.0),
        }],
        WriteOptions::default(),
    );
    assert!(matches!(parse_vbb(&not_struct), Err(VbbError::SchemaMismatch(_))));
    let other = write_mat(
        &[MatVariable {
            name: "B".into(),
            array: MatArray::scalar(1.0),
        }],
        WriteOptions::default(),
    );
    assert!(matches!(parse_vbb(&other), Err(VbbError::MissingField(_))));
    let mut v = vbb_file(2, vec![object(1, 0, "person", BBox::new(1.0, 1.0, 5.0, 5.0))]);
    v.max_obj = 0;
    v.labels.clear();
    assert!(parse_vbb(&write_vbb_fixture(&v, WriteOptions::default())).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn vbb_round_trip_prop(seed in any::<u64>(), little in any::<bool>(), compress in any::<bool>()) {
        let v = random_vbb(&mut rng(seed));
        let opts = WriteOptions {
            endianness: if little { Endianness::Little } else { Endianness::Big },
            compress,
            ..Default::default()
        };
        prop_assert_eq!(parse_vbb(&write_vbb_fixture(&v, opts)).unwrap(), v);
    }

    #[test]
    fn seq_index_is_consistent(sizes in prop::collection::vec(2usize..300, 0..12)) {
        let frames: Vec<Vec<u8>> = sizes
            .iter()
            .map(|&n| {
                let mut f = vec![0xFF, 0xD8];
                f.resize(n, 0xAB);
                f
            })
            .collect();
        let seq = open_seq(write_seq(&SeqHeader::jpeg(4, 4, frames.len() as u32, 25.0), &frames).unwrap()).unwrap();
        let mut offset = HEADER_SIZE;
        for (e, f) in seq.index().iter().zip(&frames) {
            prop_assert_eq!(e.byte_offset, offset);
            prop_assert_eq!(e.payload_size, f.len());
            offset += f.len() + RECORD_OVERHEAD;
        }
        prop_assert_eq!(offset, seq.file_size());
    }
}
