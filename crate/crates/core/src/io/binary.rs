//! `FSEG` v1, little-endian:
//!
//! ```text
//! magic "FSEG" | u16 version | u64 count | u32 flags
//! count x (f64 x, f64 y, f64 z)
//! if flags & 1: count x (u32 treeID, u8 annotated)
//! if flags & 2: u32 channels, then per channel u16 name length, UTF-8 name, count x f64
//! ```

use byteorder::{LittleEndian, WriteBytesExt};

use super::{format_err, ByteReader};
use crate::{Point3, PointCloud, PointLabel, Result, Scalar};

const MAGIC: &[u8; 4] = b"FSEG";
const VERSION: u16 = 1;
const FLAG_LABELS: u32 = 1;
const FLAG_ATTRIBUTES: u32 = 2;

pub fn encode_binary<T: Scalar>(cloud: &PointCloud<T>) -> Vec<u8> {
    let mut flags = 0;
    if cloud.labels().is_some() {
        flags |= FLAG_LABELS;
    }
    if !cloud.attributes().is_empty() {
        flags |= FLAG_ATTRIBUTES;
    }
    let mut w = Vec::with_capacity(18 + cloud.len() * 29);
    w.extend_from_slice(MAGIC);
    // writes into a Vec cannot fail
    w.write_u16::<LittleEndian>(VERSION).unwrap();
    w.write_u64::<LittleEndian>(cloud.len() as u64).unwrap();
    w.write_u32::<LittleEndian>(flags).unwrap();
    for p in cloud.points() {
        for v in p.to_array() {
            w.write_f64::<LittleEndian>(v.as_f64()).unwrap();
        }
    }
    if let Some(labels) = cloud.labels() {
        for l in labels {
            let (id, flag) = match l {
                PointLabel::NonTree => (0, 1),
                PointLabel::Tree(id) => (*id, 1),
                PointLabel::NonAnnotated => (0, 0),
            };
            w.write_u32::<LittleEndian>(id).unwrap();
            w.push(flag);
        }
    }
    if flags & FLAG_ATTRIBUTES != 0 {
        w.write_u32::<LittleEndian>(cloud.attributes().len() as u32).unwrap();
        for (name, values) in cloud.attributes() {
            w.write_u16::<LittleEndian>(name.len() as u16).unwrap();
            w.extend_from_slice(name.as_bytes());
            for v in values {
                w.write_f64::<LittleEndian>(v.as_f64()).unwrap();
            }
        }
    }
    w
}

pub fn decode_binary<T: Scalar>(bytes: &[u8]) -> Result<PointCloud<T>> {
    let mut r = ByteReader::new(bytes);
    if r.take(4, "header")? != MAGIC {
        return Err(format_err(0, "bad magic, expected FSEG"));
    }
    let version = r.u16("header")?;
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let count = r.u64("header")?;
    let flags_at = r.pos();
    let flags = r.u32("header")?;
    if flags & !(FLAG_LABELS | FLAG_ATTRIBUTES) != 0 {
        return Err(format_err(flags_at, format!("unknown flags {flags:#x}")));
    }
    let n = usize::try_from(count).map_err(|_| format_err(6, "point count too large"))?;
    if (bytes.len() as u128) < 18 + 24 * n as u128 {
        return Err(format_err(r.pos(), format!("truncated point block: {count} points declared")));
    }
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let at = r.pos();
        let (x, y, z) = (r.f64("point")?, r.f64("point")?, r.f64("point")?);
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(format_err(at, format!("non-finite coordinate for point {i}")));
        }
        points.push(Point3::new(T::lit(x), T::lit(y), T::lit(z)));
    }
    let mut cloud = PointCloud::new(points)?;
    if flags & FLAG_LABELS != 0 {
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let id = r.u32("label block")?;
            let at = r.pos();
            labels.push(match r.u8("label block")? {
                0 => PointLabel::NonAnnotated,
                1 => PointLabel::from_tree_id(id),
                f => return Err(format_err(at, format!("annotated flag must be 0 or 1, found {f}"))),
            });
        }
        cloud.set_labels(labels)?;
    }
    if flags & FLAG_ATTRIBUTES != 0 {
        let channels = r.u32("attribute block")?;
        for _ in 0..channels {
            let len = r.u16("attribute name")? as usize;
            let at = r.pos();
            let name = std::str::from_utf8(r.take(len, "attribute name")?)
                .map_err(|_| format_err(at, "attribute name is not UTF-8"))?
                .to_string();
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(T::lit(r.f64("attribute values")?));
            }
            cloud.set_attribute(name, values)?;
        }
    }
    if r.pos() != bytes.len() {
        return Err(format_err(r.pos(), format!("{} trailing bytes", bytes.len() - r.pos())));
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn sample() -> PointCloud<f64> {
        let mut c = PointCloud::with_labels(
            vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-0.1, 0.2, 1e9)],
            vec![PointLabel::Tree(9), PointLabel::NonAnnotated],
        )
        .unwrap();
        c.set_attribute("verticality", vec![0.25, 1.0]).unwrap();
        c
    }

    #[test]
    fn layout_matches_documented_offsets() {
        let b = encode_binary(&sample());
        assert_eq!(&b[..4], b"FSEG");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(u64::from_le_bytes(b[6..14].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[14..18].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(b[18..26].try_into().unwrap()), 1.0);
        // label block follows 2 * 24 coordinate bytes
        assert_eq!(u32::from_le_bytes(b[66..70].try_into().unwrap()), 9);
        assert_eq!(b[70], 1);
        assert_eq!(b[75], 0);
        assert_eq!(b.len(), 18 + 48 + 10 + 4 + 2 + 11 + 16);
    }

    #[test]
    fn round_trip_with_attributes() {
        let c = sample();
        assert_eq!(decode_binary::<f64>(&encode_binary(&c)).unwrap(), c);
        let plain = PointCloud::new(vec![Point3::new(0.5f64, 0.25, 0.125)]).unwrap();
        assert_eq!(decode_binary::<f64>(&encode_binary(&plain)).unwrap(), plain);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let b = encode_binary(&sample());
        assert!(matches!(decode_binary::<f64>(&b[..10]), Err(Error::Format { offset: 6, .. })));
        assert!(matches!(decode_binary::<f64>(&b[..40]), Err(Error::Format { offset: 18, .. })));
        assert!(matches!(decode_binary::<f64>(&b[..70]), Err(Error::Format { offset: 70, .. })));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_binary::<f64>(&bad), Err(Error::Format { offset: 0, .. })));
        let mut extra = b;
        extra.push(0);
        assert!(matches!(decode_binary::<f64>(&extra), Err(Error::Format { .. })));
    }
}
