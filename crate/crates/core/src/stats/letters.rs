//! Compact letter display by insert-and-absorb.

use std::collections::BTreeSet;

/// Letter strings for `n` groups so that two groups share a letter exactly
/// when `significant(i, j)` is false.
///
/// `rank` lists group indices in display order (highest mean first); the
/// letter `a` goes to the column holding the first-ranked group.
pub fn compact_letters(rank: &[usize], significant: impl Fn(usize, usize) -> bool) -> Vec<String> {
    let n = rank.len();
    // columns hold positions in `rank`, not raw group indices
    let mut columns: Vec<BTreeSet<usize>> = vec![(0..n).collect()];
    for i in 0..n {
        for j in i + 1..n {
            if !significant(rank[i], rank[j]) {
                continue;
            }
            let mut next = Vec::with_capacity(columns.len() + 1);
            for col in columns.drain(..) {
                if col.contains(&i) && col.contains(&j) {
                    let mut without_i = col.clone();
                    without_i.remove(&i);
                    let mut without_j = col;
                    without_j.remove(&j);
                    next.push(without_i);
                    next.push(without_j);
                } else {
                    next.push(col);
                }
            }
            columns = absorb(next);
        }
    }
    columns.sort();
    let mut letters = vec![String::new(); n];
    for (c, col) in columns.iter().enumerate() {
        let label = column_label(c);
        for &pos in col {
            letters[rank[pos]].push_str(&label);
        }
    }
    letters
}

/// Drops empty columns, duplicates and columns contained in another.
fn absorb(columns: Vec<BTreeSet<usize>>) -> Vec<BTreeSet<usize>> {
    let mut kept: Vec<BTreeSet<usize>> = Vec::with_capacity(columns.len());
    for (idx, col) in columns.iter().enumerate() {
        if col.is_empty() {
            continue;
        }
        let dominated = columns.iter().enumerate().any(|(other_idx, other)| {
            other_idx != idx && col.is_subset(other) && (col.len() < other.len() || other_idx < idx)
        });
        if !dominated {
            kept.push(col.clone());
        }
    }
    kept
}

fn column_label(index: usize) -> String {
    const LOWER: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const UPPER: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    match index {
        0..=25 => (LOWER[index] as char).to_string(),
        26..=51 => (UPPER[index - 26] as char).to_string(),
        _ => format!("[{}]", index + 1),
    }
}
