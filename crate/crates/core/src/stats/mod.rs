//! Group comparison: summaries, one-way ANOVA, Tukey HSD and compact
//! letter displays.
//!
//! Significance is reported in bands (p < 0.05, 0.01, 0.001) rather than as
//! exact p-values.

mod anova;
mod distributions;
mod letters;
pub mod quadrature;
mod tukey;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use anova::{one_way_anova, AnovaDegeneracy, AnovaResult};
pub use distributions::{f_upper_tail, studentized_range_critical, studentized_range_upper_tail};
pub use letters::compact_letters;
pub use tukey::{tukey_hsd, PairwiseComparison, TukeyOutcome};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub name: String,
    pub values: Vec<f64>,
}

impl GroupSample {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    #[serde(with = "crate::report::float")]
    pub mean: f64,
    #[serde(with = "crate::report::float")]
    pub population_std: f64,
    /// `None` for a single observation.
    #[serde(with = "crate::report::float::option")]
    pub sample_std: Option<f64>,
}

pub fn group_summary(sample: &GroupSample) -> Result<GroupSummary> {
    let n = sample.values.len();
    if n == 0 {
        return Err(Error::InsufficientData(format!("group {:?} is empty", sample.name)));
    }
    let mean = sample.mean();
    let ss: f64 = sample.values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(GroupSummary {
        name: sample.name.clone(),
        n,
        mean,
        population_std: (ss / n as f64).sqrt(),
        sample_std: (n > 1).then(|| (ss / (n - 1) as f64).sqrt()),
    })
}

/// Tightest conventional level that a p-value clears.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PBand {
    #[serde(rename = "p<0.001")]
    Below0001,
    #[serde(rename = "p<0.01")]
    Below001,
    #[serde(rename = "p<0.05")]
    Below005,
    #[serde(rename = "none")]
    NotSignificant,
}

impl PBand {
    pub fn from_p(p: f64) -> Self {
        if p < 0.001 {
            PBand::Below0001
        } else if p < 0.01 {
            PBand::Below001
        } else if p < 0.05 {
            PBand::Below005
        } else {
            PBand::NotSignificant
        }
    }

    /// Asterisk notation: `***`, `**`, `*` or `ns`.
    pub fn stars(self) -> &'static str {
        match self {
            PBand::Below0001 => "***",
            PBand::Below001 => "**",
            PBand::Below005 => "*",
            PBand::NotSignificant => "ns",
        }
    }
}

impl fmt::Display for PBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stars())
    }
}

pub(crate) fn validate_groups(groups: &[GroupSample]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two groups, got {}",
            groups.len()
        )));
    }
    let mut seen = HashMap::new();
    for g in groups {
        if g.values.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "group {:?} has {} value(s); at least two are required",
                g.name,
                g.values.len()
            )));
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("group {:?} holds a non-finite value", g.name)));
        }
        if seen.insert(g.name.as_str(), ()).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate group name {:?}", g.name)));
        }
    }
    Ok(())
}

/// Reads a `group,value` CSV. A header row is recognised by a non-numeric
/// value on the first line. Groups keep their first-appearance order.
pub fn load_group_csv(path: impl AsRef<Path>) -> Result<Vec<GroupSample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_group_csv(&text, path)
}

pub fn parse_group_csv(text: &str, source: &Path) -> Result<Vec<GroupSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut groups: Vec<GroupSample> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: source.into(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| Error::Parse {
            path: source.into(),
            line,
            message,
        };
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(err(format!("expected 2 fields (group,value), found {}", record.len())));
        }
        let value = match record[1].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ if line == 1 => continue,
            _ => return Err(err(format!("value {:?} is not a finite number", &record[1]))),
        };
        let name = &record[0];
        if name.is_empty() {
            return Err(err("empty group name".into()));
        }
        let slot = *index.entry(name.to_owned()).or_insert_with(|| {
            groups.push(GroupSample::new(name, Vec::new()));
            groups.len() - 1
        });
        groups[slot].values.push(value);
    }
    Ok(groups)
}
