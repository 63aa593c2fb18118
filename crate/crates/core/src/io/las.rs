//! LAS reader for versions 1.2-1.4, point formats 0-7, and a minimal
//! writer (LAS 1.2, format 0).
//!
//! Only scaled x/y/z, the classification and an integer extra-bytes channel
//! named `treeID` are consumed. Classification 0 marks a non-annotated point;
//! otherwise treeID 0 is non-tree and any other value a tree instance. Files
//! without a treeID channel are read without labels.

use byteorder::{LittleEndian, WriteBytesExt};

use super::{format_err, ByteReader};
use crate::{point, Error, Point3, PointCloud, PointLabel, Result, Scalar};

pub const TREE_ID_CHANNEL: &str = "treeID";

const HEADER_12: u16 = 227;
const VLR_HEADER: usize = 54;
const EXTRA_BYTES_DESCRIPTOR: usize = 192;
const WRITE_SCALE: f64 = 0.001;

/// Size of the standard part of a point record per format.
fn standard_size(format: u8) -> Option<usize> {
    [20, 28, 26, 34, 57, 63, 30, 36].get(format as usize).copied()
}

/// Byte size of an extra-bytes data type; `options` holds the size for type 0.
fn extra_size(data_type: u8, options: u8) -> Option<usize> {
    match data_type {
        0 => Some(options as usize),
        1 | 2 => Some(1),
        3 | 4 => Some(2),
        5 | 6 | 9 => Some(4),
        7 | 8 | 10 => Some(8),
        _ => None,
    }
}

struct TreeIdChannel {
    offset: usize,
    data_type: u8,
}

impl TreeIdChannel {
    fn read(&self, rec: &[u8], at: usize) -> Result<u32> {
        let b = &rec[self.offset..];
        let v: i128 = match self.data_type {
            1 => b[0] as i128,
            2 => b[0] as i8 as i128,
            3 => u16::from_le_bytes([b[0], b[1]]) as i128,
            4 => i16::from_le_bytes([b[0], b[1]]) as i128,
            5 => u32::from_le_bytes(b[..4].try_into().unwrap()) as i128,
            6 => i32::from_le_bytes(b[..4].try_into().unwrap()) as i128,
            7 => u64::from_le_bytes(b[..8].try_into().unwrap()) as i128,
            _ => i64::from_le_bytes(b[..8].try_into().unwrap()) as i128,
        };
        u32::try_from(v).map_err(|_| format_err(at + self.offset, format!("treeID {v} out of range")))
    }
}

pub fn decode_las<T: Scalar>(bytes: &[u8]) -> Result<PointCloud<T>> {
    let mut r = ByteReader::new(bytes);
    if r.take(4, "LAS header")? != b"LASF" {
        return Err(format_err(0, "bad signature, expected LASF"));
    }
    let mut r = ByteReader::at(bytes, 24);
    let (major, minor) = (r.u8("LAS header")?, r.u8("LAS header")?);
    if major != 1 || !(2..=4).contains(&minor) {
        return Err(format_err(24, format!("unsupported LAS version {major}.{minor}")));
    }
    let mut r = ByteReader::at(bytes, 94);
    let header_size = r.u16("LAS header")? as usize;
    let point_offset = r.u32("LAS header")? as usize;
    let n_vlr = r.u32("LAS header")?;
    let format_byte = r.u8("LAS header")?;
    let record_len = r.u16("LAS header")? as usize;
    let legacy_count = r.u32("LAS header")? as u64;
    if format_byte & 0xC0 != 0 {
        return Err(format_err(104, "compressed point data is not supported"));
    }
    let format = format_byte;
    let std_size = standard_size(format).ok_or_else(|| format_err(104, format!("unsupported point format {format}")))?;
    if record_len < std_size {
        return Err(format_err(105, format!("record length {record_len} below {std_size} for format {format}")));
    }
    let mut r = ByteReader::at(bytes, 131);
    let scale = [r.f64("LAS header")?, r.f64("LAS header")?, r.f64("LAS header")?];
    let offset = [r.f64("LAS header")?, r.f64("LAS header")?, r.f64("LAS header")?];
    let mut count = legacy_count;
    if minor >= 4 && header_size >= 255 {
        let full = ByteReader::at(bytes, 247).u64("LAS header")?;
        if full != 0 {
            count = full;
        }
    }
    if header_size < HEADER_12 as usize {
        return Err(format_err(94, format!("header size {header_size} below {HEADER_12}")));
    }

    let mut tree_id = None;
    let mut pos = header_size;
    for _ in 0..n_vlr {
        let mut v = ByteReader::at(bytes, pos);
        v.take(2, "VLR header")?;
        let user = v.take(16, "VLR header")?;
        let record_id = v.u16("VLR header")?;
        let len = v.u16("VLR header")? as usize;
        v.take(32, "VLR header")?;
        let payload_at = v.pos();
        let payload = v.take(len, "VLR payload")?;
        let user = std::str::from_utf8(user).unwrap_or("").trim_end_matches('\0');
        if user == "LASF_Spec" && record_id == 4 {
            tree_id = find_tree_id(payload, payload_at, std_size, record_len)?;
        }
        pos = payload_at + len;
    }
    if point_offset < pos {
        return Err(format_err(96, format!("point data offset {point_offset} overlaps header/VLRs ending at {pos}")));
    }
    let n = usize::try_from(count).map_err(|_| format_err(107, "point count too large"))?;
    let needed = point_offset as u128 + n as u128 * record_len as u128;
    if (bytes.len() as u128) < needed {
        let complete = (bytes.len().saturating_sub(point_offset)) / record_len;
        return Err(format_err(
            point_offset + complete * record_len,
            format!("truncated point record {complete} of {count}"),
        ));
    }

    let class_at = if format >= 6 { 16 } else { 15 };
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(if tree_id.is_some() { n } else { 0 });
    for i in 0..n {
        let at = point_offset + i * record_len;
        let rec = &bytes[at..at + record_len];
        let raw = |k: usize| i32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        let xyz = [0, 1, 2].map(|k| raw(k) * scale[k] + offset[k]);
        if !xyz.iter().all(|v| v.is_finite()) {
            return Err(format_err(at, format!("non-finite coordinate for point {i}")));
        }
        points.push(Point3::new(T::lit(xyz[0]), T::lit(xyz[1]), T::lit(xyz[2])));
        if let Some(ch) = &tree_id {
            let class = if format >= 6 { rec[class_at] } else { rec[class_at] & 0x1F };
            let id = ch.read(rec, at)?;
            labels.push(if class == 0 { PointLabel::NonAnnotated } else { PointLabel::from_tree_id(id) });
        }
    }
    if tree_id.is_some() {
        PointCloud::with_labels(points, labels)
    } else {
        PointCloud::new(points)
    }
}

fn find_tree_id(payload: &[u8], at: usize, std_size: usize, record_len: usize) -> Result<Option<TreeIdChannel>> {
    if payload.len() % EXTRA_BYTES_DESCRIPTOR != 0 {
        return Err(format_err(at, format!("extra-bytes record length {} not a multiple of 192", payload.len())));
    }
    let mut offset = std_size;
    for (k, d) in payload.chunks(EXTRA_BYTES_DESCRIPTOR).enumerate() {
        let d_at = at + k * EXTRA_BYTES_DESCRIPTOR;
        let (data_type, options) = (d[2], d[3]);
        let size = extra_size(data_type, options)
            .ok_or_else(|| format_err(d_at + 2, format!("unsupported extra-bytes data type {data_type}")))?;
        let name = std::str::from_utf8(&d[4..36]).unwrap_or("").trim_end_matches('\0');
        if name.eq_ignore_ascii_case(TREE_ID_CHANNEL) || name.eq_ignore_ascii_case("tree_id") {
            if !(1..=8).contains(&data_type) {
                return Err(format_err(d_at + 2, format!("treeID channel must be an integer type, found {data_type}")));
            }
            if offset + size > record_len {
                return Err(format_err(d_at, "treeID channel extends past the point record"));
            }
            return Ok(Some(TreeIdChannel { offset, data_type }));
        }
        offset += size;
    }
    Ok(None)
}

/// LAS 1.2, point format 0, millimetre scale. Labels are written as a u32
/// `treeID` extra-bytes channel plus classification (0 = non-annotated,
/// 1 = annotated).
pub fn encode_las<T: Scalar>(cloud: &PointCloud<T>) -> Result<Vec<u8>> {
    let n = u32::try_from(cloud.len())
        .map_err(|_| Error::InvalidParameter(format!("{} points exceed the LAS 1.2 limit", cloud.len())))?;
    let (lo, hi) = point::bounds(cloud.points()).unwrap_or((Point3::zero(), Point3::zero()));
    let (lo, hi) = (lo.to_array().map(|v| v.as_f64()), hi.to_array().map(|v| v.as_f64()));
    let offset = lo.map(f64::floor);
    for k in 0..3 {
        if ((hi[k] - offset[k]) / WRITE_SCALE).round() > i32::MAX as f64 {
            return Err(Error::InvalidParameter("cloud extent too large for millimetre LAS coordinates".into()));
        }
    }
    let labeled = cloud.labels().is_some();
    let record_len: u16 = if labeled { 24 } else { 20 };
    let vlr_len = if labeled { VLR_HEADER + EXTRA_BYTES_DESCRIPTOR } else { 0 };
    let point_offset = HEADER_12 as u32 + vlr_len as u32;

    let mut w = Vec::with_capacity(point_offset as usize + cloud.len() * record_len as usize);
    w.extend_from_slice(b"LASF");
    w.extend_from_slice(&[0u8; 4]); // file source id, global encoding
    w.extend_from_slice(&[0u8; 16]); // project GUID
    w.extend_from_slice(&[1, 2]);
    w.extend_from_slice(&padded("forestseg", 32));
    w.extend_from_slice(&padded("forestseg", 32));
    w.extend_from_slice(&[0u8; 4]); // creation day, year
    w.write_u16::<LittleEndian>(HEADER_12).unwrap();
    w.write_u32::<LittleEndian>(point_offset).unwrap();
    w.write_u32::<LittleEndian>(labeled as u32).unwrap();
    w.push(0);
    w.write_u16::<LittleEndian>(record_len).unwrap();
    w.write_u32::<LittleEndian>(n).unwrap();
    for k in 0..5 {
        w.write_u32::<LittleEndian>(if k == 0 { n } else { 0 }).unwrap();
    }
    for _ in 0..3 {
        w.write_f64::<LittleEndian>(WRITE_SCALE).unwrap();
    }
    for v in offset {
        w.write_f64::<LittleEndian>(v).unwrap();
    }
    for k in 0..3 {
        w.write_f64::<LittleEndian>(hi[k]).unwrap();
        w.write_f64::<LittleEndian>(lo[k]).unwrap();
    }
    debug_assert_eq!(w.len(), HEADER_12 as usize);
    if labeled {
        w.extend_from_slice(&[0, 0]);
        w.extend_from_slice(&padded("LASF_Spec", 16));
        w.write_u16::<LittleEndian>(4).unwrap();
        w.write_u16::<LittleEndian>(EXTRA_BYTES_DESCRIPTOR as u16).unwrap();
        w.extend_from_slice(&padded("extra bytes", 32));
        let mut d = [0u8; EXTRA_BYTES_DESCRIPTOR];
        d[2] = 5; // u32
        d[4..4 + TREE_ID_CHANNEL.len()].copy_from_slice(TREE_ID_CHANNEL.as_bytes());
        d[160..176].copy_from_slice(&padded("tree instance id", 16));
        w.extend_from_slice(&d);
    }
    for (i, p) in cloud.points().iter().enumerate() {
        for (k, v) in p.to_array().into_iter().enumerate() {
            w.write_i32::<LittleEndian>(((v.as_f64() - offset[k]) / WRITE_SCALE).round() as i32).unwrap();
        }
        w.extend_from_slice(&[0, 0]); // intensity
        w.push(0b0000_1001); // return 1 of 1
        if let Some(labels) = cloud.labels() {
            let (class, id) = match labels[i] {
                PointLabel::NonAnnotated => (0, 0),
                PointLabel::NonTree => (1, 0),
                PointLabel::Tree(id) => (1, id),
            };
            w.extend_from_slice(&[class, 0, 0]);
            w.write_u16::<LittleEndian>(0).unwrap();
            w.write_u32::<LittleEndian>(id).unwrap();
        } else {
            w.extend_from_slice(&[1, 0, 0]);
            w.write_u16::<LittleEndian>(0).unwrap();
        }
    }
    Ok(w)
}

fn padded(s: &str, len: usize) -> Vec<u8> {
    let mut v = s.as_bytes()[..s.len().min(len)].to_vec();
    v.resize(len, 0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent LAS 1.4 writer for fixtures: formats 0-7, a u16 extra
    /// channel in front of a treeID channel of the given data type.
    fn fixture(format: u8, pts: &[(i32, i32, i32, u8, u32)], tree_type: u8) -> Vec<u8> {
        let std = [20usize, 28, 26, 34, 57, 63, 30, 36][format as usize];
        let tree_size = [0usize, 1, 1, 2, 2, 4, 4, 8, 8][tree_type as usize];
        let rec = std + 2 + tree_size;
        let header = 375usize;
        let vlr = 54 + 2 * 192;
        let mut b = vec![0u8; header];
        b[..4].copy_from_slice(b"LASF");
        b[24] = 1;
        b[25] = 4;
        b[94..96].copy_from_slice(&(header as u16).to_le_bytes());
        b[96..100].copy_from_slice(&((header + vlr) as u32).to_le_bytes());
        b[100..104].copy_from_slice(&1u32.to_le_bytes());
        b[104] = format;
        b[105..107].copy_from_slice(&(rec as u16).to_le_bytes());
        // legacy count left 0; the 1.4 count field is authoritative
        for (k, s) in [0.01f64, 0.01, 0.001].iter().enumerate() {
            b[131 + 8 * k..139 + 8 * k].copy_from_slice(&s.to_le_bytes());
        }
        for (k, o) in [1000.0f64, -50.0, 2.0].iter().enumerate() {
            b[155 + 8 * k..163 + 8 * k].copy_from_slice(&o.to_le_bytes());
        }
        b[247..255].copy_from_slice(&(pts.len() as u64).to_le_bytes());
        let mut v = vec![0u8; 54];
        v[2..11].copy_from_slice(b"LASF_Spec");
        v[18..20].copy_from_slice(&4u16.to_le_bytes());
        v[20..22].copy_from_slice(&(384u16).to_le_bytes());
        let mut d0 = vec![0u8; 192];
        d0[2] = 3;
        d0[4..9].copy_from_slice(b"other");
        let mut d1 = vec![0u8; 192];
        d1[2] = tree_type;
        d1[4..10].copy_from_slice(b"treeID");
        b.extend(v);
        b.extend(d0);
        b.extend(d1);
        for &(x, y, z, class, id) in pts {
            let mut r = vec![0u8; rec];
            r[0..4].copy_from_slice(&x.to_le_bytes());
            r[4..8].copy_from_slice(&y.to_le_bytes());
            r[8..12].copy_from_slice(&z.to_le_bytes());
            if format >= 6 {
                r[16] = class;
                r[15] = 0xFF; // flags byte must be ignored
            } else {
                r[15] = class | 0xE0; // synthetic/keypoint/withheld bits set
            }
            r[std..std + 2].copy_from_slice(&0xBEEFu16.to_le_bytes());
            r[std + 2..std + 2 + tree_size].copy_from_slice(&(id as u64).to_le_bytes()[..tree_size]);
            b.extend(r);
        }
        b
    }

    #[test]
    fn reads_fixture_in_every_format() {
        let pts = [(100, 200, 3000, 5, 17u32), (-7, 0, 0, 2, 0), (1, 1, 1, 0, 42)];
        for format in 0..=7 {
            for tree_type in [1u8, 3, 5, 7] {
                let c: PointCloud<f64> = decode_las(&fixture(format, &pts, tree_type)).unwrap();
                assert_eq!(c.len(), 3);
                let p = c.points()[0];
                assert!((p.x - 1001.0).abs() < 1e-9 && (p.y - -48.0).abs() < 1e-9 && (p.z - 5.0).abs() < 1e-9);
                assert!((c.points()[1].x - 999.93).abs() < 1e-9);
                assert_eq!(
                    c.labels().unwrap(),
                    &[PointLabel::Tree(17), PointLabel::NonTree, PointLabel::NonAnnotated],
                    "format {format} type {tree_type}"
                );
            }
        }
    }

    #[test]
    fn writer_output_is_valid_las12() {
        let c = PointCloud::with_labels(
            vec![Point3::new(10.0, 20.0, 1.5), Point3::new(10.25, 21.0, -0.5)],
            vec![PointLabel::Tree(3), PointLabel::NonTree],
        )
        .unwrap();
        let b = encode_las(&c).unwrap();
        assert_eq!(&b[..4], b"LASF");
        assert_eq!((b[24], b[25]), (1, 2));
        assert_eq!(u32::from_le_bytes(b[96..100].try_into().unwrap()), 227 + 54 + 192);
        assert_eq!(b.len(), 473 + 2 * 24);
        let back: PointCloud<f64> = decode_las(&b).unwrap();
        assert_eq!(back.labels(), c.labels());
        assert_eq!(back.points()[1], Point3::new(10.25, 21.0, -0.5));
        let unlabeled: PointCloud<f64> = decode_las(&encode_las(&PointCloud::new(vec![Point3::<f64>::zero()]).unwrap()).unwrap()).unwrap();
        assert!(unlabeled.labels().is_none());
    }

    #[test]
    fn malformed_headers_and_records() {
        let good = fixture(6, &[(0, 0, 0, 1, 1), (1, 1, 1, 1, 1)], 5);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_las::<f64>(&bad), Err(Error::Format { offset: 0, .. })));
        let mut v = good.clone();
        v[25] = 9;
        assert!(matches!(decode_las::<f64>(&v), Err(Error::Format { offset: 24, .. })));
        let mut f = good.clone();
        f[104] = 8;
        assert!(matches!(decode_las::<f64>(&f), Err(Error::Format { offset: 104, .. })));
        // drop the last byte: second record is truncated
        let rec = 30 + 2 + 4;
        let start = 375 + 54 + 384;
        match decode_las::<f64>(&good[..good.len() - 1]) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset as usize, start + rec);
                assert!(message.contains("record 1"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_las::<f64>(&good[..100]), Err(Error::Format { offset: 100, .. })));
    }
}
