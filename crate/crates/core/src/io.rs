//! CSV readers and writers for point sets, matrices and projections.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back is bitwise the value written.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{InfoOtError, Result};
use crate::kernels::{DistanceKind, DistanceMatrix, PointSet};

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| InfoOtError::InvalidInput(format!("line {line}: `{field}` is not a number")))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Header row required; a trailing column named `label` holds integer ids.
pub fn read_points<R: std::io::Read>(reader: R) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let has_label = headers.iter().next_back() == Some("label");
    let d = headers.len() - usize::from(has_label);
    if d == 0 {
        return Err(InfoOtError::InvalidInput("no feature columns".into()));
    }
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        for field in record.iter().take(d) {
            flat.push(parse_f64(field, line)?);
        }
        if has_label {
            let raw = &record[d];
            labels.push(raw.parse::<usize>().map_err(|_| {
                InfoOtError::InvalidInput(format!("line {line}: label `{raw}` is not an integer"))
            })?);
        }
    }
    let n = flat.len() / d;
    let set = PointSet::new(Array2::from_shape_vec((n, d), flat).expect("rows have d fields"))?;
    if has_label {
        set.with_labels(labels)
    } else {
        Ok(set)
    }
}

pub fn read_points_file(path: &Path) -> Result<PointSet> {
    read_points(std::fs::File::open(path)?)
}

pub fn write_points<W: std::io::Write>(writer: W, set: &PointSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..set.dim()).map(|k| format!("x{k}")).collect();
    if set.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in set.points().rows().into_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(labels) = set.labels() {
            fields.push(labels[i].to_string());
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_points_file(path: &Path, set: &PointSet) -> Result<()> {
    write_points(std::fs::File::create(path)?, set)
}

/// Headerless numeric grid.
pub fn read_matrix<R: std::io::Read>(reader: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut flat = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = line_of(&record);
        for field in record.iter() {
            flat.push(parse_f64(field, line)?);
        }
        cols.get_or_insert(record.len());
        rows += 1;
    }
    let cols = cols.ok_or_else(|| InfoOtError::InvalidInput("empty matrix".into()))?;
    Ok(Array2::from_shape_vec((rows, cols), flat).expect("csv enforces equal row lengths"))
}

pub fn read_matrix_file(path: &Path) -> Result<Array2<f64>> {
    read_matrix(std::fs::File::open(path)?)
}

pub fn write_matrix<W: std::io::Write>(writer: W, m: ArrayView2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: &Path, m: ArrayView2<f64>) -> Result<()> {
    write_matrix(std::fs::File::create(path)?, m)
}

pub fn read_distances_file(path: &Path, kind: DistanceKind) -> Result<DistanceMatrix> {
    DistanceMatrix::from_values(read_matrix_file(path)?, kind)
}

/// `query_id,y0,y1,...`
pub fn write_projection<W: std::io::Write>(
    writer: W,
    ids: &[usize],
    coords: ArrayView2<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["query_id".to_string()];
    header.extend((0..coords.ncols()).map(|k| format!("y{k}")));
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(coords.rows()) {
        let mut fields = vec![id.to_string()];
        fields.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per point for plotting: source rows carry their projection so a
/// segment can be drawn, target rows leave those columns empty.
pub fn write_plot_points<W: std::io::Write>(
    writer: W,
    source: &PointSet,
    target: &PointSet,
    projection: Option<ArrayView2<f64>>,
    outliers: &[usize],
) -> Result<()> {
    let d = source.dim().max(target.dim());
    let pad = |fields: &mut Vec<String>, k: usize| {
        fields.extend(std::iter::repeat_n(String::new(), k));
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "domain".to_string(),
        "index".into(),
        "cluster".into(),
        "outlier".into(),
    ];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.extend((0..target.dim()).map(|k| format!("proj{k}")));
    w.write_record(&header)?;
    let cluster =
        |set: &PointSet, i: usize| set.labels().map(|l| l[i].to_string()).unwrap_or_default();
    for (i, row) in source.points().rows().into_iter().enumerate() {
        let mut fields = vec![
            "source".to_string(),
            i.to_string(),
            cluster(source, i),
            "0".into(),
        ];
        fields.extend(row.iter().map(|v| format!("{v:?}")));
        pad(&mut fields, d - row.len());
        match projection {
            Some(p) => fields.extend(p.row(i).iter().map(|v| format!("{v:?}"))),
            None => pad(&mut fields, target.dim()),
        }
        w.write_record(&fields)?;
    }
    for (j, row) in target.points().rows().into_iter().enumerate() {
        let flag = if outliers.contains(&j) { "1" } else { "0" };
        let mut fields = vec![
            "target".to_string(),
            j.to_string(),
            cluster(target, j),
            flag.into(),
        ];
        fields.extend(row.iter().map(|v| format!("{v:?}")));
        pad(&mut fields, d - row.len() + target.dim());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn points_round_trip_with_labels() {
        let set = PointSet::new(array![[0.1, -2.5], [1e-17, 3.0]])
            .unwrap()
            .with_labels(vec![4, 0])
            .unwrap();
        let mut buf = Vec::new();
        write_points(&mut buf, &set).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "x0,x1,label\n0.1,-2.5,4\n1e-17,3.0,0\n"
        );
        let back = read_points(buf.as_slice()).unwrap();
        assert_eq!(back.points(), set.points());
        assert_eq!(back.labels(), set.labels());
    }

    #[test]
    fn points_without_labels() {
        let set = read_points("a,b,c\n1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!(set.dim(), 3);
        assert!(set.labels().is_none());
    }

    #[test]
    fn bad_number_reports_line() {
        let err = read_points("x,y\n1,2\n3,oops\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn unit_coupling_is_one_point_zero() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, array![[1.0]].view()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1.0\n");
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = array![[0.1 + 0.2, 1.0 / 3.0], [2e-300, 7.0]];
        let mut buf = Vec::new();
        write_matrix(&mut buf, m.view()).unwrap();
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(read_matrix("1,2\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn projection_layout() {
        let mut buf = Vec::new();
        write_projection(&mut buf, &[3], array![[1.5, 2.0]].view()).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "query_id,y0,y1\n3,1.5,2.0\n"
        );
    }

    #[test]
    fn plot_layout() {
        let x = PointSet::new(array![[0.0, 1.0]])
            .unwrap()
            .with_labels(vec![0])
            .unwrap();
        let y = PointSet::new(array![[2.0, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_plot_points(&mut buf, &x, &y, Some(array![[2.0, 3.0]].view()), &[0]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "domain,index,cluster,outlier,x0,x1,proj0,proj1\n\
             source,0,0,0,0.0,1.0,2.0,3.0\n\
             target,0,,1,2.0,3.0,,\n"
        );
    }
}
