//! Result tables, run manifests and serialization helpers.
//!
//! JSON keeps full precision; CSV cells are rounded for presentation.
//! Non-finite floats are written as the strings `"inf"` / `"-inf"` in both.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats::{group_summary, GroupSample, TukeyOutcome};

/// Serde adapter for `f64` fields that may be infinite.
pub mod float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => super::parse_float_cell(&t)
                .ok_or_else(|| de::Error::custom(format!("invalid float {t:?}"))),
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => super::serialize(x, s),
                None => s.serialize_none(),
            }
        }

        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}

/// Shortest round-trip text for a float, with `inf` / `-inf` / `nan`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

/// Fixed-decimal text for a float, with `inf` / `-inf` / `nan`.
pub fn format_rounded(v: f64, decimals: usize) -> String {
    if v.is_finite() {
        format!("{v:.decimals$}")
    } else {
        format_float(v)
    }
}

pub fn parse_float_cell(text: &str) -> Option<f64> {
    match text.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        other => other.parse().ok(),
    }
}

/// Decimal places used for a metric's means in CSV cells.
pub fn default_decimals(metric: &str) -> usize {
    match metric.to_ascii_lowercase().as_str() {
        "psnr" | "mse" => 1,
        _ => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub group: String,
    pub n: usize,
    #[serde(with = "float")]
    pub mean: f64,
    /// Sample standard deviation; `None` for a single observation.
    #[serde(with = "float::option")]
    pub std: Option<f64>,
    pub letter: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub decimals: usize,
    pub cells: Vec<TableCell>,
    /// `***`, `**`, `*`, `ns`, or `n/a` when no comparison was possible.
    pub significance: String,
    pub letters_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

/// Input for one metric row.
#[derive(Debug, Clone)]
pub struct MetricInput {
    pub metric: String,
    pub groups: Vec<GroupSample>,
    pub outcome: Option<TukeyOutcome>,
    pub decimals: usize,
}

impl MetricInput {
    pub fn new(metric: impl Into<String>, groups: Vec<GroupSample>, outcome: Option<TukeyOutcome>) -> Self {
        let metric = metric.into();
        Self {
            decimals: default_decimals(&metric),
            metric,
            groups,
            outcome,
        }
    }
}

/// Builds the table: one row per metric, one `"mean letter"` cell per group.
///
/// Rows with two or more groups need a Tukey outcome whose letters name
/// exactly those groups; a single group yields no letters and `n/a`
/// significance.
pub fn build_table(inputs: &[MetricInput]) -> Result<MetricTable> {
    let mut rows = Vec::with_capacity(inputs.len());
    for input in inputs {
        if input.groups.is_empty() {
            return Err(Error::ReportMismatch(format!("metric {:?} has no groups", input.metric)));
        }
        let outcome = match (&input.outcome, input.groups.len()) {
            (_, 1) => None,
            (Some(o), _) => Some(o),
            (None, _) => {
                return Err(Error::ReportMismatch(format!(
                    "metric {:?} has {} groups but no Tukey outcome",
                    input.metric,
                    input.groups.len()
                )))
            }
        };
        if let Some(o) = outcome {
            for name in o.letters.keys() {
                if !input.groups.iter().any(|g| &g.name == name) {
                    return Err(Error::ReportMismatch(format!(
                        "outcome for {:?} cites unknown group {name:?}",
                        input.metric
                    )));
                }
            }
        }
        let mut cells = Vec::with_capacity(input.groups.len());
        for g in &input.groups {
            let s = group_summary(g)?;
            let letter = match outcome {
                Some(o) => Some(o.letters.get(&g.name).cloned().ok_or_else(|| {
                    Error::ReportMismatch(format!("no letter for group {:?} in {:?}", g.name, input.metric))
                })?),
                None => None,
            };
            cells.push(TableCell {
                group: g.name.clone(),
                n: s.n,
                mean: s.mean,
                std: s.sample_std,
                letter,
            });
        }
        rows.push(MetricRow {
            metric: input.metric.clone(),
            decimals: input.decimals,
            cells,
            significance: outcome.map_or_else(|| "n/a".to_owned(), |o| o.anova_p_below.stars().to_owned()),
            letters_alpha: outcome.map(|o| o.letters_alpha),
        });
    }
    Ok(MetricTable { rows })
}

impl MetricTable {
    /// Group columns in first-appearance order across rows.
    pub fn group_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for cell in self.rows.iter().flat_map(|r| &r.cells) {
            if !cols.contains(&cell.group) {
                cols.push(cell.group.clone());
            }
        }
        cols
    }

    /// CSV shaped like a results table: header `Metric,<groups...>`, one
    /// `"mean letter"` row per metric, then the significance row(s).
    pub fn to_csv(&self) -> Result<String> {
        let cols = self.group_columns();
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Serialization(e.to_string());
        let mut header = vec!["Metric".to_owned()];
        header.extend(cols.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.metric.clone()];
            for col in &cols {
                let cell = row.cells.iter().find(|c| &c.group == col);
                rec.push(cell.map_or_else(String::new, |c| {
                    let mean = format_rounded(c.mean, row.decimals);
                    match &c.letter {
                        Some(l) => format!("{mean} {l}"),
                        None => mean,
                    }
                }));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        for row in &self.rows {
            let label = if self.rows.len() == 1 {
                "Significance".to_owned()
            } else {
                format!("Significance ({})", row.metric)
            };
            let mut rec = vec![label];
            for col in &cols {
                let present = row.cells.iter().any(|c| &c.group == col);
                rec.push(if present { row.significance.clone() } else { String::new() });
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Serialization(e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_pretty(value)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Partial,
    Failed,
    UsageError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// UTC, ISO-8601.
    pub timestamp: String,
    pub tool_version: String,
    pub command: Vec<String>,
    /// Fully resolved configuration.
    pub config: BTreeMap<String, String>,
    /// Input path to lowercase hex SHA-256 of its bytes.
    pub input_digests: BTreeMap<String, String>,
    pub status: RunStatus,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub messages: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(run_id: impl Into<String>, command: Vec<String>) -> Self {
        Self {
            run_id: run_id.into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command,
            config: BTreeMap::new(),
            input_digests: BTreeMap::new(),
            status: RunStatus::Failed,
            exit_code: 1,
            messages: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records the SHA-256 of a file's bytes under its path.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.input_digests.insert(path.display().to_string(), digest);
        Ok(())
    }
}

/// Lowercase hex SHA-256 of a file's raw bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Lowercase hex SHA-256 of UTF-8 text.
pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Writes `manifest.json` into `dir`.
pub fn emit_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    write_json(&path, manifest)?;
    Ok(path)
}

/// Creates `<out_dir>/<run_id>`, refusing to reuse an existing directory.
pub fn create_run_dir(out_dir: &Path, run_id: &str) -> Result<PathBuf> {
    if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id == "." || run_id == ".." {
        return Err(Error::InvalidParameter(format!("invalid run id {run_id:?}")));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let dir = out_dir.join(run_id);
    fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{tukey_hsd, PBand};

    fn groups() -> Vec<GroupSample> {
        vec![
            GroupSample::new("Text-image", vec![27.4, 27.5, 27.6]),
            GroupSample::new("Pre-harvest", vec![27.85, 27.9, 27.95]),
            GroupSample::new("Post-harvest", vec![28.7, 28.8, 28.9]),
        ]
    }

    #[test]
    fn table_cells_use_mean_and_letter() {
        let g = groups();
        let t = tukey_hsd(&g, 0.05).unwrap();
        let table = build_table(&[MetricInput::new("PSNR", g, Some(t))]).unwrap();
        let csv = table.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "Metric,Text-image,Pre-harvest,Post-harvest");
        assert_eq!(lines[1], "PSNR,27.5 c,27.9 b,28.8 a");
        assert_eq!(lines[2], "Significance,***,***,***");
    }

    #[test]
    fn single_group_has_no_letters() {
        let g = vec![GroupSample::new("only", vec![0.1234, 0.2])];
        let table = build_table(&[MetricInput::new("SSIM", g, None)]).unwrap();
        assert_eq!(table.rows[0].significance, "n/a");
        assert_eq!(table.rows[0].cells[0].letter, None);
        let csv = table.to_csv().unwrap();
        assert!(csv.contains("SSIM,0.16\n"), "{csv}");
        assert!(csv.contains("Significance,n/a"));
    }

    #[test]
    fn mismatches_are_errors() {
        assert!(matches!(
            build_table(&[MetricInput::new("PSNR", groups(), None)]),
            Err(Error::ReportMismatch(_))
        ));
        let t = tukey_hsd(&groups(), 0.05).unwrap();
        let mut renamed = groups();
        renamed[0].name = "other".into();
        assert!(matches!(
            build_table(&[MetricInput::new("PSNR", renamed, Some(t))]),
            Err(Error::ReportMismatch(_))
        ));
    }

    #[test]
    fn infinite_values_serialize_as_text() {
        let cell = TableCell {
            group: "g".into(),
            n: 2,
            mean: f64::INFINITY,
            std: None,
            letter: None,
        };
        let json = serde_json::to_string(&cell).unwrap();
        assert!(json.contains("\"mean\":\"inf\""), "{json}");
        let back: TableCell = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cell);
        assert_eq!(format_rounded(f64::INFINITY, 1), "inf");
        assert_eq!(parse_float_cell("inf"), Some(f64::INFINITY));
    }

    #[test]
    fn manifest_digests() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        fs::write(&f, b"abc").unwrap();
        let mut m = RunManifest::new("r1", vec!["melonqa".into(), "stats".into()]);
        m.add_input(&f).unwrap();
        assert_eq!(
            m.input_digests[&f.display().to_string()],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let d1 = file_digest(&f).unwrap();
        fs::write(&f, b"abd").unwrap();
        assert_ne!(file_digest(&f).unwrap(), d1);

        let run = create_run_dir(dir.path(), "r1").unwrap();
        emit_manifest(&run, &m).unwrap();
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(create_run_dir(dir.path(), "r1").is_err());
        assert!(create_run_dir(dir.path(), "../x").is_err());
    }

    #[test]
    fn band_in_table_follows_anova() {
        let g = vec![
            GroupSample::new("a", vec![1.0, 2.0, 3.0, 4.0]),
            GroupSample::new("b", vec![1.5, 2.5, 3.5, 4.5]),
        ];
        let t = tukey_hsd(&g, 0.05).unwrap();
        assert_eq!(t.anova_p_below, PBand::NotSignificant);
        let table = build_table(&[MetricInput::new("density", g, Some(t))]).unwrap();
        assert_eq!(table.rows[0].significance, "ns");
        assert_eq!(table.rows[0].cells[0].letter.as_deref(), Some("a"));
    }

    mod props {
        use super::*;
        use crate::detect_eval::{match_annotations, Annotation, BoundingBox};
        use crate::metrics::QualityScore;
        use crate::net_quality::{report_from_areas, IslandReport};
        use proptest::prelude::*;

        fn round_trip<T>(value: &T) -> T
        where
            T: Serialize + for<'de> Deserialize<'de>,
        {
            serde_json::from_str(&to_json_pretty(value).unwrap()).unwrap()
        }

        fn group_sets() -> impl Strategy<Value = Vec<GroupSample>> {
            prop::collection::vec(prop::collection::vec(-1.0e3..1.0e3f64, 2..6), 2..5).prop_map(|sets| {
                sets.into_iter()
                    .enumerate()
                    .map(|(i, v)| GroupSample::new(format!("g{i}"), v))
                    .collect()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn table_json_round_trips_and_csv_rounds(groups in group_sets(), decimals in 0usize..4) {
                let outcome = tukey_hsd(&groups, 0.05).unwrap();
                prop_assert_eq!(&round_trip(&outcome), &outcome);
                let mut input = MetricInput::new("m", groups, Some(outcome));
                input.decimals = decimals;
                let table = build_table(&[input]).unwrap();
                prop_assert_eq!(&round_trip(&table), &table);

                let csv = table.to_csv().unwrap();
                let mut reader = csv::ReaderBuilder::new().from_reader(csv.as_bytes());
                let record = reader.records().next().unwrap().unwrap();
                let half_step = 0.5 * 10f64.powi(-(decimals as i32));
                for (cell, text) in table.rows[0].cells.iter().zip(record.iter().skip(1)) {
                    let mean_text = text.split(' ').next().unwrap();
                    let parsed = parse_float_cell(mean_text).unwrap();
                    prop_assert!((parsed - cell.mean).abs() <= half_step * (1.0 + 1e-9) + 1e-9 * cell.mean.abs());
                }
            }

            #[test]
            fn scores_and_reports_round_trip(
                mse in prop_oneof![Just(0.0), 0.0..65025.0f64],
                ssim in -1.0..1.0f64,
                areas in prop::collection::vec(1usize..5000, 0..20),
                roi in 0usize..100_000,
            ) {
                let score = QualityScore { mse, psnr: crate::metrics::psnr_from_mse(mse), ssim };
                prop_assert_eq!(round_trip(&score), score);
                let report: IslandReport = report_from_areas(areas, roi, 128);
                prop_assert_eq!(&round_trip(&report), &report);
            }

            #[test]
            fn eval_summaries_round_trip(boxes in prop::collection::vec((0.0..90.0f64, 0.0..90.0f64, 1.0..30.0f64, 0u32..2), 0..6)) {
                let anns: Vec<Annotation> = boxes
                    .iter()
                    .map(|&(x, y, s, class_id)| Annotation {
                        image_id: "img".into(),
                        class_id,
                        bbox: BoundingBox::new(x, y, x + s, y + s).unwrap(),
                        confidence: None,
                    })
                    .collect();
                let shifted: Vec<Annotation> = anns
                    .iter()
                    .map(|a| Annotation {
                        bbox: BoundingBox::new(a.bbox.x_min + 1.0, a.bbox.y_min, a.bbox.x_max + 1.0, a.bbox.y_max).unwrap(),
                        ..a.clone()
                    })
                    .collect();
                let summary = match_annotations(&anns, &shifted, 0.5).unwrap();
                prop_assert_eq!(&round_trip(&summary), &summary);
            }

            #[test]
            fn manifests_round_trip(
                argv in prop::collection::vec("[ -~]{0,12}", 1..6),
                config in prop::collection::btree_map("[a-z-]{1,8}", "[ -~]{0,8}", 0..5),
            ) {
                let mut m = RunManifest::new("run", argv);
                m.config = config;
                m.status = RunStatus::Partial;
                m.messages.push("pair x: decode failed".into());
                prop_assert_eq!(&round_trip(&m), &m);
            }
        }
    }
}
