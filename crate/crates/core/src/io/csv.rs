//! CSV tables. Every reader requires a header row and looks columns up by name.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use crate::dataset::ScoreRecord;
use crate::features::EmbeddingTable;
use crate::{Error, Result, Scalar};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::file(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::file(path, e))
}

fn line_of(rec: &StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_value<T: Scalar>(rec: &StringRecord, col: usize) -> Result<T> {
    let field = rec.get(col).ok_or_else(|| Error::Parse {
        line: line_of(rec),
        msg: format!("missing field {col}"),
    })?;
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line: line_of(rec),
        msg: format!("`{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line: line_of(rec),
            msg: format!("`{field}` is not finite"),
        });
    }
    Ok(T::lit(v))
}

fn text(rec: &StringRecord, col: usize) -> Result<String> {
    rec.get(col)
        .map(|s| s.trim().to_string())
        .ok_or_else(|| Error::Parse {
            line: line_of(rec),
            msg: format!("missing field {col}"),
        })
}

struct Table<R: Read> {
    reader: csv::Reader<R>,
    columns: HashMap<String, usize>,
}

impl<R: Read> Table<R> {
    fn new(source: R) -> Result<Self> {
        let mut reader = ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let columns = reader
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        Ok(Self { reader, columns })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.columns.get(name).copied().ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column `{name}`"),
        })
    }

    fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    fn records(&mut self) -> impl Iterator<Item = Result<StringRecord>> + '_ {
        self.reader.records().map(|r| r.map_err(Error::from))
    }
}

/// Reads `item_id,annotator_id,score` rows.
pub fn read_scores<T: Scalar, R: Read>(source: R) -> Result<Vec<ScoreRecord<T>>> {
    let mut t = Table::new(source)?;
    let (ci, ca, cs) = (t.column("item_id")?, t.column("annotator_id")?, t.column("score")?);
    t.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ScoreRecord {
                item_id: text(&rec, ci)?,
                annotator_id: text(&rec, ca)?,
                score: parse_value(&rec, cs)?,
            })
        })
        .collect()
}

pub fn read_scores_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord<T>>> {
    read_scores(open(path.as_ref())?)
}

pub fn write_scores<T: Scalar, W: Write>(sink: W, rows: &[ScoreRecord<T>]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    w.write_record(["item_id", "annotator_id", "score"])?;
    for r in rows {
        w.write_record([r.item_id.as_str(), r.annotator_id.as_str(), &r.score.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores_csv<T: Scalar>(path: impl AsRef<Path>, rows: &[ScoreRecord<T>]) -> Result<()> {
    write_scores(create(path.as_ref())?, rows)
}

/// Reads `item_id,score` rows.
pub fn read_truth<T: Scalar, R: Read>(source: R) -> Result<Vec<(String, T)>> {
    let mut t = Table::new(source)?;
    let (ci, cs) = (t.column("item_id")?, t.column("score")?);
    t.records()
        .map(|rec| {
            let rec = rec?;
            Ok((text(&rec, ci)?, parse_value(&rec, cs)?))
        })
        .collect()
}

pub fn read_truth_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, T)>> {
    read_truth(open(path.as_ref())?)
}

pub fn write_truth<T: Scalar, W: Write>(sink: W, rows: &[(String, T)]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    w.write_record(["item_id", "score"])?;
    for (id, s) in rows {
        w.write_record([id.as_str(), &s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth_csv<T: Scalar>(path: impl AsRef<Path>, rows: &[(String, T)]) -> Result<()> {
    write_truth(create(path.as_ref())?, rows)
}

/// Reads `item_id,v0,...` rows without normalizing. A leading row whose first
/// field is `item_id` is treated as the header.
pub fn read_embeddings_csv<T: Scalar, R: Read>(source: R) -> Result<EmbeddingTable<T>> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let mut table: Option<EmbeddingTable<T>> = None;
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Parse {
                line: line_of(&rec),
                msg: "embedding row needs an id and at least one value".into(),
            });
        }
        if rec.get(0) == Some("item_id") && line_of(&rec) == 1 {
            continue;
        }
        let values = (1..rec.len())
            .map(|c| parse_value(&rec, c))
            .collect::<Result<Vec<T>>>()?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        t.insert(text(&rec, 0)?, values)?;
    }
    table.ok_or_else(|| Error::InsufficientData("embedding table has no rows".into()))
}

pub fn write_embeddings<T: Scalar, W: Write>(sink: W, table: &EmbeddingTable<T>) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    let mut header = vec!["item_id".to_string()];
    header.extend((0..table.dim()).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for (id, v) in table.iter() {
        let mut row = vec![id.to_string()];
        row.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_embeddings_csv<T: Scalar>(
    path: impl AsRef<Path>,
    table: &EmbeddingTable<T>,
) -> Result<()> {
    write_embeddings(create(path.as_ref())?, table)
}

/// One row of the neighbor cache.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRow<T> {
    pub item_id: String,
    pub neighbor_id: String,
    pub similarity: T,
}

pub fn read_neighbor_cache<T: Scalar, R: Read>(source: R) -> Result<Vec<NeighborRow<T>>> {
    let mut t = Table::new(source)?;
    let (ci, cn, cs) = (
        t.column("item_id")?,
        t.column("neighbor_id")?,
        t.column("similarity")?,
    );
    t.records()
        .map(|rec| {
            let rec = rec?;
            Ok(NeighborRow {
                item_id: text(&rec, ci)?,
                neighbor_id: text(&rec, cn)?,
                similarity: parse_value(&rec, cs)?,
            })
        })
        .collect()
}

pub fn read_neighbor_cache_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<NeighborRow<T>>> {
    read_neighbor_cache(open(path.as_ref())?)
}

pub fn write_neighbor_cache<T: Scalar, W: Write>(sink: W, rows: &[NeighborRow<T>]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    w.write_record(["item_id", "neighbor_id", "similarity"])?;
    for r in rows {
        w.write_record([
            r.item_id.as_str(),
            r.neighbor_id.as_str(),
            &r.similarity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_neighbor_cache_csv<T: Scalar>(
    path: impl AsRef<Path>,
    rows: &[NeighborRow<T>],
) -> Result<()> {
    write_neighbor_cache(create(path.as_ref())?, rows)
}

/// One row of cleaned output; the `*_denorm` fields are written only when
/// present on every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanedRow<T> {
    pub item_id: String,
    pub score_raw: T,
    pub score_clean: T,
    pub denorm: Option<(T, T)>,
}

pub fn write_cleaned<T: Scalar, W: Write>(sink: W, rows: &[CleanedRow<T>]) -> Result<()> {
    let with_denorm = !rows.is_empty() && rows.iter().all(|r| r.denorm.is_some());
    let mut w = WriterBuilder::new().from_writer(sink);
    let mut header = vec!["item_id", "score_raw", "score_clean"];
    if with_denorm {
        header.extend(["score_raw_denorm", "score_clean_denorm"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.item_id.clone(), r.score_raw.to_string(), r.score_clean.to_string()];
        if let (true, Some((a, b))) = (with_denorm, r.denorm) {
            row.extend([a.to_string(), b.to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cleaned_csv<T: Scalar>(path: impl AsRef<Path>, rows: &[CleanedRow<T>]) -> Result<()> {
    write_cleaned(create(path.as_ref())?, rows)
}

pub fn write_trajectory<T: Scalar, W: Write>(sink: W, rows: &[(T, T)]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    w.write_record(["epoch", "mean_abs_update", "train_loss"])?;
    for (epoch, (upd, loss)) in rows.iter().enumerate() {
        w.write_record([epoch.to_string(), upd.to_string(), loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv<T: Scalar>(path: impl AsRef<Path>, rows: &[(T, T)]) -> Result<()> {
    write_trajectory(create(path.as_ref())?, rows)
}

/// Writes `annotator_id,bias,inconsistency` rows.
pub fn write_annotator_model<T: Scalar, W: Write>(sink: W, rows: &[(String, T, T)]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    w.write_record(["annotator_id", "bias", "inconsistency"])?;
    for (id, b, v) in rows {
        w.write_record([id.as_str(), &b.to_string(), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_annotator_model_csv<T: Scalar>(
    path: impl AsRef<Path>,
    rows: &[(String, T, T)],
) -> Result<()> {
    write_annotator_model(create(path.as_ref())?, rows)
}

/// One item's last-epoch update, as written beside a refine run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow<T> {
    pub item_id: String,
    pub score_raw: T,
    pub reference_id: String,
    pub similarity: T,
    pub residual: T,
    pub reference_score: T,
    pub target: T,
    pub previous: T,
    pub updated: T,
    pub applied: bool,
}

const STEP_COLUMNS: [&str; 10] = [
    "item_id",
    "score_raw",
    "reference_id",
    "similarity",
    "residual",
    "reference_score",
    "target",
    "previous",
    "updated",
    "applied",
];

pub fn write_steps<T: Scalar, W: Write>(sink: W, rows: &[StepRow<T>]) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    w.write_record(STEP_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.item_id.clone(),
            r.score_raw.to_string(),
            r.reference_id.clone(),
            r.similarity.to_string(),
            r.residual.to_string(),
            r.reference_score.to_string(),
            r.target.to_string(),
            r.previous.to_string(),
            r.updated.to_string(),
            u8::from(r.applied).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_steps_csv<T: Scalar>(path: impl AsRef<Path>, rows: &[StepRow<T>]) -> Result<()> {
    write_steps(create(path.as_ref())?, rows)
}

pub fn read_steps<T: Scalar, R: Read>(source: R) -> Result<Vec<StepRow<T>>> {
    let mut t = Table::new(source)?;
    let mut c = [0usize; 10];
    for (slot, name) in c.iter_mut().zip(STEP_COLUMNS) {
        *slot = t.column(name)?;
    }
    t.records()
        .map(|rec| {
            let rec = rec?;
            let applied = match text(&rec, c[9])?.as_str() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        line: line_of(&rec),
                        msg: format!("`{other}` is not 0 or 1"),
                    })
                }
            };
            Ok(StepRow {
                item_id: text(&rec, c[0])?,
                score_raw: parse_value(&rec, c[1])?,
                reference_id: text(&rec, c[2])?,
                similarity: parse_value(&rec, c[3])?,
                residual: parse_value(&rec, c[4])?,
                reference_score: parse_value(&rec, c[5])?,
                target: parse_value(&rec, c[6])?,
                previous: parse_value(&rec, c[7])?,
                updated: parse_value(&rec, c[8])?,
                applied,
            })
        })
        .collect()
}

pub fn read_steps_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<StepRow<T>>> {
    read_steps(open(path.as_ref())?)
}

/// Reads per-item predictions from any of the tables this crate writes.
///
/// With `column` set, that column is used. Otherwise: a scores table
/// (`annotator_id` present) is averaged per item; a cleaned table uses
/// `score_clean_denorm` when present, else `score_clean`; anything else uses
/// `score`. Items keep first-occurrence order.
pub fn read_predictions<T: Scalar, R: Read>(
    source: R,
    column: Option<&str>,
) -> Result<Vec<(String, T)>> {
    let mut t = Table::new(source)?;
    let ci = t.column("item_id")?;
    let name = match column {
        Some(c) => c,
        None if t.has("annotator_id") => "score",
        None if t.has("score_clean_denorm") => "score_clean_denorm",
        None if t.has("score_clean") => "score_clean",
        None => "score",
    };
    let cs = t.column(name)?;
    let mut order: Vec<String> = Vec::new();
    let mut sums: HashMap<String, (T, usize)> = HashMap::new();
    for rec in t.records() {
        let rec = rec?;
        let id = text(&rec, ci)?;
        let v: T = parse_value(&rec, cs)?;
        let e = sums.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            (T::zero(), 0)
        });
        e.0 = e.0 + v;
        e.1 += 1;
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let (s, n) = sums[&id];
            (id, s / T::from_usize(n).expect("count fits scalar"))
        })
        .collect())
}

pub fn read_predictions_csv<T: Scalar>(
    path: impl AsRef<Path>,
    column: Option<&str>,
) -> Result<Vec<(String, T)>> {
    read_predictions(open(path.as_ref())?, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_basic() {
        let rows: Vec<ScoreRecord<f64>> =
            read_scores("item_id,annotator_id,score\na,s1,0.5\n".as_bytes()).unwrap();
        assert_eq!(
            rows,
            vec![ScoreRecord {
                item_id: "a".into(),
                annotator_id: "s1".into(),
                score: 0.5
            }]
        );
    }

    #[test]
    fn scores_bad_number_names_line() {
        let err = read_scores::<f64, _>("item_id,annotator_id,score\na,s1,0.5\nb,s1,abc\n".as_bytes())
            .unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scores_non_finite_and_missing_column() {
        assert!(read_scores::<f64, _>("item_id,annotator_id,score\na,s,NaN\n".as_bytes()).is_err());
        assert!(read_scores::<f64, _>("item_id,annotator_id,score\na,s,inf\n".as_bytes()).is_err());
        let err = read_scores::<f64, _>("item_id,score\na,0.1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("annotator_id"));
    }

    #[test]
    fn scores_empty_after_header() {
        let rows = read_scores::<f64, _>("item_id,annotator_id,score\n".as_bytes()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn embeddings_csv_rows() {
        let t = read_embeddings_csv::<f64, _>("item_id,v0,v1\na,3,4\n".as_bytes())
            .unwrap()
            .finalize()
            .unwrap();
        assert_eq!(t.get("a").unwrap(), &[0.6, 0.8]);

        let zero = read_embeddings_csv::<f64, _>("b,0,0\n".as_bytes()).unwrap().finalize();
        assert!(matches!(zero, Err(Error::ZeroNorm(_))));
        let dup = read_embeddings_csv::<f64, _>("a,1,0\na,0,1\n".as_bytes());
        assert!(matches!(dup, Err(Error::DuplicateId(_))));
        let dims = read_embeddings_csv::<f64, _>("a,1,0\nb,0,1,2\n".as_bytes());
        assert!(matches!(dims, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn embeddings_row_order_irrelevant() {
        let a = read_embeddings_csv::<f64, _>("x,1,2\ny,3,4\nz,5,6\n".as_bytes()).unwrap();
        let b = read_embeddings_csv::<f64, _>("z,5,6\nx,1,2\ny,3,4\n".as_bytes()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predictions_from_each_layout() {
        let scores = "item_id,annotator_id,score\na,s1,0.2\nb,s1,0.5\na,s2,0.4\n";
        let p: Vec<(String, f64)> = read_predictions(scores.as_bytes(), None).unwrap();
        assert_eq!(p[0].0, "a");
        assert!((p[0].1 - 0.3).abs() < 1e-15);
        assert_eq!(p[1], ("b".to_string(), 0.5));

        let cleaned = "item_id,score_raw,score_clean\na,0.1,0.2\n";
        let p: Vec<(String, f64)> = read_predictions(cleaned.as_bytes(), None).unwrap();
        assert_eq!(p, vec![("a".to_string(), 0.2)]);
        let p: Vec<(String, f64)> = read_predictions(cleaned.as_bytes(), Some("score_raw")).unwrap();
        assert_eq!(p, vec![("a".to_string(), 0.1)]);
    }

    #[test]
    fn cleaned_round_trip_layout() {
        let rows = vec![CleanedRow {
            item_id: "a".to_string(),
            score_raw: 0.25f64,
            score_clean: 0.5,
            denorm: Some((1.0, 2.0)),
        }];
        let mut buf = Vec::new();
        write_cleaned(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "item_id,score_raw,score_clean,score_raw_denorm,score_clean_denorm\na,0.25,0.5,1,2\n"
        );
    }

    #[test]
    fn steps_round_trip() {
        let rows = vec![StepRow {
            item_id: "a".to_string(),
            score_raw: 0.5f64,
            reference_id: "b".to_string(),
            similarity: 0.99,
            residual: -0.012345678901234567,
            reference_score: 0.4,
            target: 0.387_654_321_098_765_4,
            previous: 0.5,
            updated: 0.1 * 0.387_654_321_098_765_4 + 0.9 * 0.5,
            applied: true,
        }];
        let mut buf = Vec::new();
        write_steps(&mut buf, &rows).unwrap();
        assert_eq!(read_steps::<f64, _>(buf.as_slice()).unwrap(), rows);
        let bad = "item_id,score_raw,reference_id,similarity,residual,reference_score,target,previous,updated,applied\na,0,b,1,0,0,0,0,0,yes\n";
        assert!(matches!(read_steps::<f64, _>(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
