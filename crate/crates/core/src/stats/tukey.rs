use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::anova::one_way_anova;
use super::distributions::studentized_range_critical;
use super::letters::compact_letters;
use super::{GroupSample, PBand};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub group_a: String,
    pub group_b: String,
    /// mean(a) - mean(b)
    pub mean_difference: f64,
    #[serde(with = "crate::report::float")]
    pub q_statistic: f64,
    pub significant_at_005: bool,
    pub significant_at_0001: bool,
    /// Significance at the alpha used for the letters.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyOutcome {
    pub pairwise: Vec<PairwiseComparison>,
    /// Group name to compact letter display.
    pub letters: BTreeMap<String, String>,
    pub letters_alpha: f64,
    #[serde(with = "crate::report::float::option")]
    pub anova_f: Option<f64>,
    pub anova_p_below: PBand,
    pub df_within: usize,
    pub ms_within: f64,
    pub q_critical_005: f64,
    pub q_critical_0001: f64,
    pub q_critical_letters: f64,
}

impl TukeyOutcome {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairwiseComparison> {
        self.pairwise
            .iter()
            .find(|p| (p.group_a == a && p.group_b == b) || (p.group_a == b && p.group_b == a))
    }

    pub fn shares_letter(&self, a: &str, b: &str) -> bool {
        match (self.letters.get(a), self.letters.get(b)) {
            (Some(x), Some(y)) => x.chars().any(|c| y.contains(c)),
            _ => false,
        }
    }
}

/// Tukey HSD (Tukey-Kramer for unequal sizes) with a compact letter display
/// built at `letters_alpha`. Letter `a` marks the highest mean.
pub fn tukey_hsd(groups: &[GroupSample], letters_alpha: f64) -> Result<TukeyOutcome> {
    if !(letters_alpha > 0.0 && letters_alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {letters_alpha}"
        )));
    }
    let anova = one_way_anova(groups)?;
    let k = groups.len() as u32;
    let df = anova.df_within as f64;
    let q_005 = studentized_range_critical(k, df, 0.05);
    let q_0001 = studentized_range_critical(k, df, 0.001);
    let q_letters = studentized_range_critical(k, df, letters_alpha);

    let means: Vec<f64> = groups.iter().map(GroupSample::mean).collect();
    let n = groups.len();
    let mut q_matrix = vec![vec![0.0; n]; n];
    let mut pairwise = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let diff = means[i] - means[j];
            let scale = (anova.ms_within / 2.0
                * (1.0 / groups[i].values.len() as f64 + 1.0 / groups[j].values.len() as f64))
                .sqrt();
            let q = if scale > 0.0 {
                diff.abs() / scale
            } else if diff != 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            q_matrix[i][j] = q;
            q_matrix[j][i] = q;
            pairwise.push(PairwiseComparison {
                group_a: groups[i].name.clone(),
                group_b: groups[j].name.clone(),
                mean_difference: diff,
                q_statistic: q,
                significant_at_005: q > q_005,
                significant_at_0001: q > q_0001,
                significant: q > q_letters,
            });
        }
    }

    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    let letter_list = compact_letters(&rank, |a, b| q_matrix[a][b] > q_letters);
    let letters = groups
        .iter()
        .zip(letter_list)
        .map(|(g, l)| (g.name.clone(), l))
        .collect();

    Ok(TukeyOutcome {
        pairwise,
        letters,
        letters_alpha,
        anova_f: anova.f_statistic,
        anova_p_below: anova.p_below,
        df_within: anova.df_within,
        ms_within: anova.ms_within,
        q_critical_005: q_005,
        q_critical_0001: q_0001,
        q_critical_letters: q_letters,
    })
}
