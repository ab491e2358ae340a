//! Two-pass connected-component labeling with union-find.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::image_core::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            4 => Some(Self::Four),
            8 => Some(Self::Eight),
            _ => None,
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Self::Four => 4,
            Self::Eight => 8,
        }
    }
}

impl FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<u32>()
            .ok()
            .and_then(Self::from_count)
            .ok_or_else(|| format!("connectivity must be 4 or 8, got {s:?}"))
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.count())
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // label 0 is background
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Labels foreground components. Returns the label raster (0 = background,
/// components numbered from 1 in raster order of their first pixel) and the
/// number of components.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            // already-visited neighbours: W, and N (+ NW, NE for 8-connectivity)
            let mut neighbours = [0u32; 4];
            let mut k = 0;
            if x > 0 {
                neighbours[k] = labels[i - 1];
                k += 1;
            }
            if y > 0 {
                neighbours[k] = labels[i - w];
                k += 1;
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neighbours[k] = labels[i - w - 1];
                        k += 1;
                    }
                    if x + 1 < w {
                        neighbours[k] = labels[i - w + 1];
                        k += 1;
                    }
                }
            }
            let mut current = 0u32;
            for &n in neighbours[..k].iter().filter(|&&n| n != 0) {
                current = if current == 0 { n } else { sets.union(current, n) };
            }
            labels[i] = if current == 0 { sets.make() } else { current };
        }
    }

    let mut compact = vec![0u32; sets.parent.len()];
    let mut next = 0u32;
    for label in labels.iter_mut().filter(|l| **l != 0) {
        let root = sets.find(*label) as usize;
        if compact[root] == 0 {
            next += 1;
            compact[root] = next;
        }
        *label = compact[root];
    }
    (labels, next as usize)
}

/// Areas of foreground components at least `min_area` pixels large,
/// largest first.
pub fn component_areas(mask: &BinaryMask, connectivity: Connectivity, min_area: usize) -> Vec<usize> {
    let (labels, count) = label_components(mask, connectivity);
    let mut areas = vec![0usize; count];
    for &l in labels.iter().filter(|&&l| l != 0) {
        areas[l as usize - 1] += 1;
    }
    areas.retain(|&a| a >= min_area);
    areas.sort_unstable_by(|a, b| b.cmp(a));
    areas
}
