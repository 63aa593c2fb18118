use std::fmt::Write;

use crate::{Error, Point3, PointCloud, PointLabel, Result, Scalar};

/// Parses `x y z` or `x y z treeID annotated_flag` lines. Blank lines and
/// text after `#` are ignored. All data lines must have the same column count.
pub fn decode_text<T: Scalar>(text: &str) -> Result<PointCloud<T>> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut columns = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| Error::Parse { line: line_no, message };
        if fields.len() != 3 && fields.len() != 5 {
            return Err(err(format!("expected 3 or 5 columns, found {}", fields.len())));
        }
        match columns {
            None => columns = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(err(format!("expected {c} columns like the first data line, found {}", fields.len())))
            }
            _ => {}
        }
        let mut xyz = [0.0f64; 3];
        for (k, v) in xyz.iter_mut().enumerate() {
            *v = fields[k].parse().map_err(|_| err(format!("invalid coordinate `{}`", fields[k])))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite coordinate `{}`", fields[k])));
            }
        }
        points.push(Point3::new(T::lit(xyz[0]), T::lit(xyz[1]), T::lit(xyz[2])));
        if fields.len() == 5 {
            let id: u32 = fields[3].parse().map_err(|_| err(format!("invalid treeID `{}`", fields[3])))?;
            let label = match fields[4] {
                "0" => PointLabel::NonAnnotated,
                "1" => PointLabel::from_tree_id(id),
                f => return Err(err(format!("annotated flag must be 0 or 1, found `{f}`"))),
            };
            labels.push(label);
        }
    }
    if columns == Some(5) {
        PointCloud::with_labels(points, labels)
    } else {
        PointCloud::new(points)
    }
}

/// Shortest round-trip decimal form of every coordinate; attributes are not
/// stored in this format.
pub fn encode_text<T: Scalar>(cloud: &PointCloud<T>) -> String {
    let mut s = String::with_capacity(cloud.len() * 40);
    match cloud.labels() {
        Some(labels) => {
            s.push_str("# x y z treeID annotated\n");
            for (p, l) in cloud.points().iter().zip(labels) {
                let (id, flag) = match l {
                    PointLabel::NonTree => (0, 1),
                    PointLabel::Tree(id) => (*id, 1),
                    PointLabel::NonAnnotated => (0, 0),
                };
                let _ = writeln!(s, "{} {} {} {id} {flag}", p.x, p.y, p.z);
            }
        }
        None => {
            s.push_str("# x y z\n");
            for p in cloud.points() {
                let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
            }
        }
    }
    s
}
