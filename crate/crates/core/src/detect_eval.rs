//! Bounding-box detection evaluation over YOLO-format annotation files.
//!
//! Ground truths and predictions are paired greedily: every candidate pair
//! (same image, same class) is ranked by descending IoU, ties broken by
//! ground-truth index then prediction index, and accepted while both sides
//! are still free and the IoU clears the threshold.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in absolute pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min > x_max || y_min > y_max {
            return Err(Error::InvalidParameter(format!(
                "invalid box ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BoundingBox,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub gt_index: usize,
    pub pred_index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub iou_threshold: f64,
    pub ground_truth_count: usize,
    pub prediction_count: usize,
    /// One entry per ground truth in input order; 0 for unmatched ones.
    pub per_gt_iou: Vec<f64>,
    pub matches: Vec<Match>,
    /// Mean over all ground truths, unmatched ones counting as 0.
    pub mean_iou: f64,
    /// Mean over matched ground truths only; `None` when nothing matched.
    pub mean_matched_iou: Option<f64>,
    /// Fraction of ground truths whose matched IoU clears the threshold.
    pub detection_rate: f64,
    pub false_positives: usize,
}

fn candidate_pairs(ground_truth: &[Annotation], predictions: &[Annotation]) -> Vec<Match> {
    let mut by_key: HashMap<(&str, u32), Vec<usize>> = HashMap::new();
    for (j, p) in predictions.iter().enumerate() {
        by_key
            .entry((p.image_id.as_str(), p.class_id))
            .or_default()
            .push(j);
    }
    let mut pairs = Vec::new();
    for (i, g) in ground_truth.iter().enumerate() {
        if let Some(preds) = by_key.get(&(g.image_id.as_str(), g.class_id)) {
            for &j in preds {
                pairs.push(Match {
                    gt_index: i,
                    pred_index: j,
                    iou: iou(&g.bbox, &predictions[j].bbox),
                });
            }
        }
    }
    pairs
}

pub fn match_annotations(
    ground_truth: &[Annotation],
    predictions: &[Annotation],
    iou_threshold: f64,
) -> Result<EvalSummary> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "IoU threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    let mut pairs = candidate_pairs(ground_truth, predictions);
    pairs.retain(|m| m.iou >= iou_threshold);
    pairs.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.gt_index.cmp(&b.gt_index))
            .then(a.pred_index.cmp(&b.pred_index))
    });

    let mut gt_used = vec![false; ground_truth.len()];
    let mut pred_used = vec![false; predictions.len()];
    let mut matches = Vec::new();
    for m in pairs {
        if gt_used[m.gt_index] || pred_used[m.pred_index] {
            continue;
        }
        gt_used[m.gt_index] = true;
        pred_used[m.pred_index] = true;
        matches.push(m);
    }
    matches.sort_by_key(|m| m.gt_index);

    let mut per_gt_iou = vec![0.0; ground_truth.len()];
    for m in &matches {
        per_gt_iou[m.gt_index] = m.iou;
    }
    let n_gt = ground_truth.len();
    let matched_sum: f64 = matches.iter().map(|m| m.iou).sum();
    let mean_iou = if n_gt == 0 {
        0.0
    } else {
        per_gt_iou.iter().sum::<f64>() / n_gt as f64
    };
    let mean_matched_iou = (!matches.is_empty()).then(|| matched_sum / matches.len() as f64);
    let detection_rate = if n_gt == 0 {
        0.0
    } else {
        matches.len() as f64 / n_gt as f64
    };
    Ok(EvalSummary {
        iou_threshold,
        ground_truth_count: n_gt,
        prediction_count: predictions.len(),
        per_gt_iou,
        false_positives: predictions.len() - matches.len(),
        matches,
        mean_iou,
        mean_matched_iou,
        detection_rate,
    })
}

/// Parses YOLO text (`class cx cy w h [confidence]` per line, normalized
/// center coordinates) into absolute corner boxes clamped to the image.
pub fn parse_yolo_annotations(
    text: &str,
    source: &Path,
    image_id: &str,
    image_width: u32,
    image_height: u32,
) -> Result<Vec<Annotation>> {
    let (iw, ih) = (f64::from(image_width), f64::from(image_height));
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 6 {
            return Err(err(format!("expected 5 or 6 fields, found {}", fields.len())));
        }
        let class_id: u32 = fields[0]
            .parse()
            .map_err(|_| err(format!("class id {:?} is not a non-negative integer", fields[0])))?;
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            let v: f64 = field
                .parse()
                .map_err(|_| err(format!("{field:?} is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err(format!("value {v} outside [0, 1]")));
            }
            *slot = v;
        }
        let [cx, cy, w, h, conf] = nums;
        let bbox = BoundingBox {
            x_min: ((cx - w / 2.0) * iw).clamp(0.0, iw),
            y_min: ((cy - h / 2.0) * ih).clamp(0.0, ih),
            x_max: ((cx + w / 2.0) * iw).clamp(0.0, iw),
            y_max: ((cy + h / 2.0) * ih).clamp(0.0, ih),
        };
        out.push(Annotation {
            image_id: image_id.to_owned(),
            class_id,
            bbox,
            confidence: (fields.len() == 6).then_some(conf),
        });
    }
    Ok(out)
}

/// Reads one YOLO annotation file; the image id is the file stem.
pub fn load_yolo_annotations(
    path: impl AsRef<Path>,
    image_width: u32,
    image_height: u32,
) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let image_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_yolo_annotations(&text, path, &image_id, image_width, image_height)
}

/// Reads an `image_id,width,height` CSV (header row optional).
pub fn load_image_sizes(path: impl AsRef<Path>) -> Result<BTreeMap<String, (u32, u32)>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            message: e.to_string(),
        })?;
    let mut sizes = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", record.len())));
        }
        let dims = (record[1].parse::<u32>(), record[2].parse::<u32>());
        match dims {
            (Ok(w), Ok(h)) if w > 0 && h > 0 => {
                sizes.insert(record[0].to_owned(), (w, h));
            }
            _ if line == 1 => continue,
            _ => {
                return Err(parse_err(format!(
                    "width/height {:?},{:?} are not positive integers",
                    &record[1], &record[2]
                )))
            }
        }
    }
    Ok(sizes)
}
