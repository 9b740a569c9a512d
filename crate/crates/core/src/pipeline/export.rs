use std::path::Path;

use super::featurize::RepresentationRecord;
use crate::classifier::FAKE_THRESHOLD;
use crate::error::{Error, Result};
use crate::eval::ScoredSample;
use crate::label::Label;

/// One row of a representation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedRow {
    pub id: String,
    pub label: Label,
    pub n_objects: usize,
    pub values: Vec<f64>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `id,label,n_objects,d_0..d_{dim-1}` using the fused vector. Floats
/// use the shortest text that parses back to the same `f64`.
pub fn export_representations(records: &[RepresentationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let first = records.first().ok_or(Error::EmptyExport)?;
    let dim = first.d_combined.dim();
    if let Some(r) = records.iter().find(|r| r.d_combined.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: r.d_combined.dim(),
        });
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["id".to_string(), "label".to_string(), "n_objects".to_string()];
    header.extend((0..dim).map(|i| format!("d_{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in records {
        let mut row = vec![r.id.clone(), r.label.as_u8().to_string(), r.n_objects.to_string()];
        row.extend(r.d_combined.values().iter().map(f64::to_string));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_representations(path: impl AsRef<Path>) -> Result<Vec<ExportedRow>> {
    let path = path.as_ref();
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = rd.headers().map_err(|e| csv_error(path, e))?.clone();
    let dim = header.len().saturating_sub(3);
    let expected = ["id", "label", "n_objects"];
    if header.len() < 4
        || header.iter().take(3).ne(expected)
        || header.iter().skip(3).enumerate().any(|(i, h)| h != format!("d_{i}"))
    {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let bad = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: m,
        };
        let label = rec[1]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| bad(format!("bad label {:?}", &rec[1])))?;
        let n_objects = rec[2]
            .parse()
            .map_err(|_| bad(format!("bad n_objects {:?}", &rec[2])))?;
        let values = (0..dim)
            .map(|j| rec[3 + j].parse::<f64>().map_err(|e| bad(format!("d_{j}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ExportedRow {
            id: rec[0].to_string(),
            label,
            n_objects,
            values,
        });
    }
    Ok(rows)
}

/// Per-sample scores: `id,label,prob_fake,predicted`.
pub fn write_scores(samples: &[ScoredSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["id", "label", "prob_fake", "predicted"])
        .map_err(|e| csv_error(path, e))?;
    for s in samples {
        let predicted = u8::from(s.score >= FAKE_THRESHOLD);
        w.write_record([
            s.id.clone(),
            s.label.as_u8().to_string(),
            s.score.to_string(),
            predicted.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::fs;

    use proptest::prelude::*;

    use super::*;
    use crate::representation::{Misalignment, MisalignmentKind};

    fn record(id: &str, values: Vec<f64>) -> RepresentationRecord {
        let dim = values.len();
        RepresentationRecord {
            id: id.into(),
            label: Label::Fake,
            d_global: Misalignment::zeros(dim, MisalignmentKind::Global),
            d_local: Misalignment::zeros(dim, MisalignmentKind::LocalMean),
            d_combined: Misalignment::from_values(values, MisalignmentKind::Combined).unwrap(),
            n_objects: 2,
        }
    }

    #[test]
    fn shape_of_small_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reps.csv");
        let recs = [record("a", vec![0.1, -0.2]), record("b", vec![1.0, 0.0]), record("c,d", vec![1e-300, 2.5])];
        export_representations(&recs, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "id,label,n_objects,d_0,d_1");
        let mut rd = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rd.headers().unwrap().len(), 5);
        for rec in rd.records() {
            assert_eq!(rec.unwrap().len(), 5);
        }
        let back = read_representations(&path).unwrap();
        assert_eq!(back[2].id, "c,d");
        assert_eq!(back[2].values, vec![1e-300, 2.5]);
    }

    #[test]
    fn empty_export_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(export_representations(&[], dir.path().join("x.csv")), Err(Error::EmptyExport)));
    }

    #[test]
    fn mixed_dims_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [record("a", vec![0.1, 0.2]), record("b", vec![0.1])];
        assert!(matches!(
            export_representations(&recs, dir.path().join("x.csv")),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "id,label,n_objects,d_0\na,3,1,0.5\n").unwrap();
        assert!(matches!(read_representations(&path), Err(Error::Parse { line: 2, .. })));
        fs::write(&path, "id,lbl,n,d_0\n").unwrap();
        assert!(matches!(read_representations(&path), Err(Error::Format(_))));
    }

    #[test]
    fn scores_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_scores(&[ScoredSample::new("x", 0.5, Label::Real), ScoredSample::new("y", 0.25, Label::Fake)], &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "id,label,prob_fake,predicted\nx,0,0.5,1\ny,1,0.25,0\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 5), 1..8)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.csv");
            let recs: Vec<_> = rows.iter().enumerate().map(|(i, v)| record(&format!("r{i}"), v.clone())).collect();
            export_representations(&recs, &path).unwrap();
            let back = read_representations(&path).unwrap();
            prop_assert_eq!(back.len(), recs.len());
            for (a, b) in recs.iter().zip(&back) {
                prop_assert_eq!(&a.id, &b.id);
                prop_assert_eq!(a.n_objects, b.n_objects);
                for (x, y) in a.d_combined.values().iter().zip(&b.values) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
