use serde::{Deserialize, Serialize};

use super::{validate_groups, GroupSample, PBand};
use super::distributions::f_upper_tail;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnovaDegeneracy {
    /// No within-group variance but distinct means: F is infinite.
    InfiniteF,
    /// No variance at all: F is 0/0.
    UndefinedF,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// `None` when undefined; may be infinite.
    #[serde(with = "crate::report::float::option")]
    pub f_statistic: Option<f64>,
    pub df_between: usize,
    pub df_within: usize,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ms_between: f64,
    pub ms_within: f64,
    pub p_below: PBand,
    pub degenerate: Option<AnovaDegeneracy>,
}

/// One-way ANOVA with the between/within sum-of-squares split.
pub fn one_way_anova(groups: &[GroupSample]) -> Result<AnovaResult> {
    validate_groups(groups)?;
    let total_n: usize = groups.iter().map(|g| g.values.len()).sum();
    let means: Vec<f64> = groups.iter().map(GroupSample::mean).collect();
    let grand = groups.iter().flat_map(|g| &g.values).sum::<f64>() / total_n as f64;

    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.values.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.values.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = groups.len() - 1;
    let df_within = total_n - groups.len();
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;

    let (f_statistic, degenerate, p_below) = if ms_within > 0.0 {
        let f = ms_between / ms_within;
        let p = f_upper_tail(f, df_between as f64, df_within as f64);
        (Some(f), None, PBand::from_p(p))
    } else if ms_between > 0.0 {
        (Some(f64::INFINITY), Some(AnovaDegeneracy::InfiniteF), PBand::Below0001)
    } else {
        (None, Some(AnovaDegeneracy::UndefinedF), PBand::NotSignificant)
    };
    Ok(AnovaResult {
        f_statistic,
        df_between,
        df_within,
        ss_between,
        ss_within,
        ms_between,
        ms_within,
        p_below,
        degenerate,
    })
}
