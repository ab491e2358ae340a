//! Resolved settings and execution of each subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::Resolver;
use super::{Command, Failure, Pairing, RunContext, Toggle};
use crate::detect_eval::{load_image_sizes, load_yolo_annotations, match_annotations, Annotation, EvalSummary};
use crate::error::{Error, Result};
use crate::image_core::list_images;
use crate::metrics::{score_pair, QualityScore, ResizePolicy, SsimParams};
use crate::net_quality::{assess_items, pair_with_masks, BinarizeParams, IslandReport, ItemFailure};
use crate::report::{self, build_table, format_float, MetricInput, RunStatus};
use crate::stats::{group_summary, load_group_csv, one_way_anova, tukey_hsd, GroupSample, GroupSummary};
use crate::synthgen::{generate, save_fixture, SynthSpec};

pub(crate) enum Job {
    Metrics(MetricsJob),
    DetectEval(DetectEvalJob),
    NetQuality(NetQualityJob),
    Stats(StatsJob),
    Synth(SynthJob),
}

pub(crate) struct MetricsJob {
    original: Option<PathBuf>,
    generated: Option<PathBuf>,
    pairs_manifest: Option<PathBuf>,
    pairing: Pairing,
    resize: ResizePolicy,
    params: SsimParams,
}

pub(crate) struct DetectEvalJob {
    ground_truth: PathBuf,
    predictions: PathBuf,
    image_sizes: PathBuf,
    iou_threshold: f64,
}

pub(crate) struct NetQualityJob {
    images: PathBuf,
    masks: PathBuf,
    params: BinarizeParams,
}

pub(crate) struct StatsJob {
    input: PathBuf,
    metric: String,
    alpha: f64,
    decimals: usize,
}

pub(crate) struct SynthJob {
    spec_file: Option<PathBuf>,
    spec: SynthSpec,
    count: usize,
}

fn required(resolver: &mut Resolver<'_>, key: &str, flag: Option<String>) -> std::result::Result<PathBuf, String> {
    resolver
        .optional(key, flag)?
        .map(PathBuf::from)
        .ok_or_else(|| format!("missing required --{key}"))
}

/// Resolves every setting of `command`; errors are usage errors.
pub(crate) fn resolve(command: Command, r: &mut Resolver<'_>) -> std::result::Result<Job, String> {
    Ok(match command {
        Command::Metrics(a) => {
            let pairing = r.value("pairing", a.pairing, Pairing::Stem)?;
            let resize = match r.value("resize", a.resize, Toggle::Off)? {
                Toggle::On => ResizePolicy::Bilinear,
                Toggle::Off => ResizePolicy::Off,
            };
            let params = SsimParams::with_window(r.value("ssim-window", a.ssim_window, 11)?);
            params.validate().map_err(|e| e.to_string())?;
            let (original, generated, pairs_manifest) = match pairing {
                Pairing::Stem => {
                    if r.optional("pairs-manifest", a.pairs_manifest)?.is_some() {
                        return Err("--pairs-manifest needs --pairing manifest".into());
                    }
                    (
                        Some(required(r, "original", a.original)?),
                        Some(required(r, "generated", a.generated)?),
                        None,
                    )
                }
                Pairing::Manifest => {
                    let original = r.optional("original", a.original)?;
                    let generated = r.optional("generated", a.generated)?;
                    if original.is_some() || generated.is_some() {
                        return Err("--pairing manifest takes its paths from --pairs-manifest".into());
                    }
                    (None, None, Some(required(r, "pairs-manifest", a.pairs_manifest)?))
                }
            };
            Job::Metrics(MetricsJob {
                original,
                generated,
                pairs_manifest,
                pairing,
                resize,
                params,
            })
        }
        Command::DetectEval(a) => {
            let job = DetectEvalJob {
                ground_truth: required(r, "ground-truth", a.ground_truth)?,
                predictions: required(r, "predictions", a.predictions)?,
                image_sizes: required(r, "image-sizes", a.image_sizes)?,
                iou_threshold: r.value("iou-threshold", a.iou_threshold, 0.5)?,
            };
            if !(job.iou_threshold > 0.0 && job.iou_threshold <= 1.0) {
                return Err(format!("--iou-threshold must lie in (0, 1], got {}", job.iou_threshold));
            }
            Job::DetectEval(job)
        }
        Command::NetQuality(a) => {
            let defaults = BinarizeParams::default();
            let job = NetQualityJob {
                images: required(r, "images", a.images)?,
                masks: required(r, "masks", a.masks)?,
                params: BinarizeParams {
                    method: r.value("threshold", a.threshold, defaults.method)?,
                    polarity: r.value("polarity", a.polarity, defaults.polarity)?,
                    min_island_area: r.value("min-island", a.min_island, defaults.min_island_area)?,
                    connectivity: r.value("connectivity", a.connectivity, defaults.connectivity)?,
                },
            };
            job.params.validate().map_err(|e| e.to_string())?;
            Job::NetQuality(job)
        }
        Command::Stats(a) => {
            let input = required(r, "input", a.input)?;
            let metric = r.value("metric-name", a.metric_name, "value".to_owned())?;
            let alpha = r.value("alpha", a.alpha, 0.05)?;
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(format!("--alpha must lie in (0, 1), got {alpha}"));
            }
            let decimals = r.value("decimals", a.decimals, report::default_decimals(&metric))?;
            Job::Stats(StatsJob {
                input,
                metric,
                alpha,
                decimals,
            })
        }
        Command::Synth(a) => {
            let spec_file = r.optional("spec", a.spec)?.map(PathBuf::from);
            let base = match &spec_file {
                Some(path) => read_spec(path)?,
                None => SynthSpec::grid(64, 64, 16, 4),
            };
            let fruit_radius = r.optional("fruit-radius", a.fruit_radius)?.or(base.fruit_radius);
            let site_count = r.optional("site-count", a.site_count)?.or(base.site_count);
            if let Some(v) = fruit_radius {
                r.record("fruit-radius", v);
            }
            if let Some(v) = site_count {
                r.record("site-count", v);
            }
            let spec = SynthSpec {
                width: r.value("width", a.width, base.width)?,
                height: r.value("height", a.height, base.height)?,
                seed: r.value("seed", a.seed, base.seed)?,
                layout: r.value("layout", a.layout, base.layout)?,
                cell_size: r.value("cell-size", a.cell_size, base.cell_size)?,
                crack_width: r.value("crack-width", a.crack_width, base.crack_width)?,
                skin_level: r.value("skin-level", a.skin_level, base.skin_level)?,
                net_level: r.value("net-level", a.net_level, base.net_level)?,
                fruit_radius,
                site_count,
                connectivity: r.value("connectivity", a.connectivity, base.connectivity)?,
                min_island_area: r.value("min-island", a.min_island, base.min_island_area)?,
            };
            spec.validate().map_err(|e| e.to_string())?;
            let count = r.value("count", a.count, 1)?;
            if count == 0 {
                return Err("--count must be at least 1".into());
            }
            Job::Synth(SynthJob { spec_file, spec, count })
        }
    })
}

fn read_spec(path: &Path) -> std::result::Result<SynthSpec, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: invalid spec: {e}", path.display()))
}

impl Job {
    pub(crate) fn run(self, ctx: &mut RunContext) -> std::result::Result<RunStatus, Failure> {
        match self {
            Job::Metrics(j) => j.run(ctx),
            Job::DetectEval(j) => j.run(ctx),
            Job::NetQuality(j) => j.run(ctx),
            Job::Stats(j) => j.run(ctx),
            Job::Synth(j) => j.run(ctx),
        }
    }
}

/// Status from item counts: everything failed is a failure, some is partial.
fn batch_status(succeeded: usize, failed: usize) -> std::result::Result<RunStatus, Failure> {
    match (succeeded, failed) {
        (_, 0) => Ok(RunStatus::Success),
        (0, _) => Err(Failure::Fatal(Error::InsufficientData(format!("all {failed} items failed")))),
        _ => Ok(RunStatus::Partial),
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone)]
struct PairSpec {
    pair_id: String,
    original: PathBuf,
    generated: PathBuf,
}

#[derive(Serialize)]
struct ScoredPair<'a> {
    pair_id: &'a str,
    original: String,
    generated: String,
    #[serde(flatten)]
    score: &'a QualityScore,
}

#[derive(Serialize)]
struct PairFailure<'a> {
    pair_id: &'a str,
    error: String,
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    pairing: String,
    resize: ResizePolicy,
    ssim: &'a SsimParams,
    pairs: Vec<ScoredPair<'a>>,
    failures: Vec<PairFailure<'a>>,
    unpaired_original: Vec<String>,
    unpaired_generated: Vec<String>,
    summary: Vec<GroupSummary>,
}

fn read_pairs_manifest(path: &Path) -> Result<Vec<PairSpec>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
    let mut pairs = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected `original,generated`, got {} fields", record.len()),
            });
        }
        if line == 1 && record[0].eq_ignore_ascii_case("original") && record[1].eq_ignore_ascii_case("generated") {
            continue;
        }
        let original = base.join(&record[0]);
        pairs.push(PairSpec {
            pair_id: format!("{:04}_{}", pairs.len(), stem_of(&original)),
            generated: base.join(&record[1]),
            original,
        });
    }
    Ok(pairs)
}

impl MetricsJob {
    /// Pairs plus the stems left without a partner on either side.
    fn resolve_pairs(&self) -> Result<(Vec<PairSpec>, Vec<String>, Vec<String>)> {
        if let Some(manifest) = &self.pairs_manifest {
            return Ok((read_pairs_manifest(manifest)?, Vec::new(), Vec::new()));
        }
        let (original, generated) = match (&self.original, &self.generated) {
            (Some(o), Some(g)) => (o, g),
            _ => return Err(Error::InvalidParameter("stem pairing needs --original and --generated".into())),
        };
        match (original.is_dir(), generated.is_dir()) {
            (true, true) => {
                let originals: BTreeMap<String, PathBuf> = list_images(original)?.into_iter().collect();
                let generated: BTreeMap<String, PathBuf> = list_images(generated)?.into_iter().collect();
                let pairs = originals
                    .iter()
                    .filter_map(|(stem, o)| {
                        generated.get(stem).map(|g| PairSpec {
                            pair_id: stem.clone(),
                            original: o.clone(),
                            generated: g.clone(),
                        })
                    })
                    .collect();
                let lonely_o = originals.keys().filter(|s| !generated.contains_key(*s)).cloned().collect();
                let lonely_g = generated.keys().filter(|s| !originals.contains_key(*s)).cloned().collect();
                Ok((pairs, lonely_o, lonely_g))
            }
            (false, false) => Ok((
                vec![PairSpec {
                    pair_id: stem_of(original),
                    original: original.clone(),
                    generated: generated.clone(),
                }],
                Vec::new(),
                Vec::new(),
            )),
            _ => Err(Error::InvalidParameter(
                "--original and --generated must both be directories or both be files".into(),
            )),
        }
    }

    fn run(self, ctx: &mut RunContext) -> std::result::Result<RunStatus, Failure> {
        if let Some(m) = &self.pairs_manifest {
            ctx.add_input(m)?;
        }
        let (pairs, unpaired_original, unpaired_generated) = self.resolve_pairs()?;
        if pairs.is_empty() {
            return Err(Error::InsufficientData("no resolvable original/generated pairs".into()).into());
        }
        for stem in &unpaired_original {
            ctx.note(format!("original {stem:?} has no generated partner"));
        }
        for stem in &unpaired_generated {
            ctx.note(format!("generated {stem:?} has no original partner"));
        }
        let results: Vec<Result<QualityScore>> = pairs
            .par_iter()
            .map(|p| score_pair(&p.original, &p.generated, &self.params, self.resize))
            .collect();
        for p in &pairs {
            for path in [&p.original, &p.generated] {
                if path.is_file() {
                    ctx.add_input(path)?;
                }
            }
        }

        let mut csv = String::from("pair_id,original,generated,mse,psnr,ssim\n");
        let mut scored = Vec::new();
        let mut failures = Vec::new();
        for (p, result) in pairs.iter().zip(&results) {
            match result {
                Ok(score) => {
                    csv.push_str(&csv_line(&[
                        &p.pair_id,
                        &p.original.display().to_string(),
                        &p.generated.display().to_string(),
                        &format_float(score.mse),
                        &format_float(score.psnr),
                        &format_float(score.ssim),
                    ])?);
                    scored.push(ScoredPair {
                        pair_id: &p.pair_id,
                        original: p.original.display().to_string(),
                        generated: p.generated.display().to_string(),
                        score,
                    });
                }
                Err(e) => {
                    ctx.note(format!("pair {}: {e}", p.pair_id));
                    failures.push(PairFailure {
                        pair_id: &p.pair_id,
                        error: e.to_string(),
                    });
                }
            }
        }

        let mut summary = Vec::new();
        if !scored.is_empty() {
            let column = |name: &str, f: fn(&QualityScore) -> f64| {
                GroupSample::new(name, scored.iter().map(|s| f(s.score)).collect())
            };
            for sample in [
                column("mse", |s| s.mse),
                column("psnr", |s| s.psnr),
                column("ssim", |s| s.ssim),
            ] {
                summary.push(group_summary(&sample)?);
            }
        }
        let (ok, failed) = (scored.len(), failures.len());
        let document = MetricsDocument {
            pairing: self.pairing.to_string(),
            resize: self.resize,
            ssim: &self.params,
            pairs: scored,
            failures,
            unpaired_original,
            unpaired_generated,
            summary,
        };
        ctx.write("metrics.csv", &csv)?;
        ctx.write("metrics.json", &report::to_json_pretty(&document)?)?;
        batch_status(ok, failed)
    }
}

fn csv_line(fields: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(fields).map_err(|e| Error::Serialization(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

/// `.txt` files of a directory keyed by stem, sorted.
fn list_label_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_txt = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt"));
        if path.is_file() && is_txt {
            out.insert(stem_of(&path), path);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ImageEval {
    image_id: String,
    summary: EvalSummary,
}

#[derive(Serialize)]
struct DetectDocument {
    iou_threshold: f64,
    aggregate: EvalSummary,
    images: Vec<ImageEval>,
}

impl DetectEvalJob {
    fn run(self, ctx: &mut RunContext) -> std::result::Result<RunStatus, Failure> {
        ctx.add_input(&self.image_sizes)?;
        let sizes = load_image_sizes(&self.image_sizes)?;
        let gt_files = list_label_files(&self.ground_truth)?;
        let pred_files = list_label_files(&self.predictions)?;
        let ids: BTreeSet<&String> = gt_files.keys().chain(pred_files.keys()).collect();
        if let Some(missing) = ids.iter().find(|id| !sizes.contains_key(id.as_str())) {
            return Err(Error::InvalidParameter(format!(
                "image {missing:?} is annotated but has no entry in {}",
                self.image_sizes.display()
            ))
            .into());
        }
        let load = |files: &BTreeMap<String, PathBuf>, id: &str| -> Result<Vec<Annotation>> {
            match files.get(id) {
                Some(path) => {
                    let (w, h) = sizes[id];
                    load_yolo_annotations(path, w, h)
                }
                None => Ok(Vec::new()),
            }
        };
        let mut all_gt = Vec::new();
        let mut all_pred = Vec::new();
        let mut images = Vec::new();
        for id in ids {
            for path in gt_files.get(id).into_iter().chain(pred_files.get(id)) {
                ctx.add_input(path)?;
            }
            let gt = load(&gt_files, id)?;
            let pred = load(&pred_files, id)?;
            images.push(ImageEval {
                image_id: id.clone(),
                summary: match_annotations(&gt, &pred, self.iou_threshold)?,
            });
            all_gt.extend(gt);
            all_pred.extend(pred);
        }
        let document = DetectDocument {
            iou_threshold: self.iou_threshold,
            aggregate: match_annotations(&all_gt, &all_pred, self.iou_threshold)?,
            images,
        };
        ctx.write("detect_eval.json", &report::to_json_pretty(&document)?)?;
        Ok(RunStatus::Success)
    }
}

#[derive(Serialize)]
struct ImageReport<'a> {
    image_id: &'a str,
    #[serde(flatten)]
    report: &'a IslandReport,
}

#[derive(Serialize)]
struct NetDocument<'a> {
    threshold: String,
    polarity: String,
    min_island_area: usize,
    connectivity: String,
    reports: Vec<ImageReport<'a>>,
    failures: &'a [ItemFailure],
}

impl NetQualityJob {
    fn run(self, ctx: &mut RunContext) -> std::result::Result<RunStatus, Failure> {
        let items = pair_with_masks(&self.images, &self.masks)?;
        if items.is_empty() {
            return Err(Error::InsufficientData(format!("no images in {}", self.images.display())).into());
        }
        for item in &items {
            for path in std::iter::once(&item.image).chain(&item.mask) {
                ctx.add_input(path)?;
            }
        }
        let outcome = assess_items(&items, &self.params)?;
        let mut csv = String::from(
            "image_id,island_count,total_skin_area,net_density,net_uniformity,roi_area,degenerate_flag\n",
        );
        for (id, r) in &outcome.reports {
            csv.push_str(&csv_line(&[
                id,
                &r.island_count.to_string(),
                &r.total_skin_area.to_string(),
                &format_float(r.net_density),
                &format_float(r.net_uniformity),
                &r.roi_area.to_string(),
                &r.degenerate.to_string(),
            ])?);
        }
        for f in &outcome.failures {
            ctx.note(format!("image {}: {}", f.image_id, f.error));
        }
        let reports: Vec<ImageReport<'_>> = outcome
            .reports
            .iter()
            .map(|(id, report)| ImageReport { image_id: id, report })
            .collect();
        for r in &reports {
            ctx.write(&format!("net_quality/{}.json", r.image_id), &report::to_json_pretty(r)?)?;
        }
        let document = NetDocument {
            threshold: self.params.method.to_string(),
            polarity: self.params.polarity.to_string(),
            min_island_area: self.params.min_island_area,
            connectivity: self.params.connectivity.to_string(),
            reports,
            failures: &outcome.failures,
        };
        ctx.write("net_quality.csv", &csv)?;
        ctx.write("net_quality.json", &report::to_json_pretty(&document)?)?;
        batch_status(outcome.reports.len(), outcome.failures.len())
    }
}

impl StatsJob {
    fn run(self, ctx: &mut RunContext) -> std::result::Result<RunStatus, Failure> {
        ctx.add_input(&self.input)?;
        let groups = load_group_csv(&self.input)?;
        let anova = one_way_anova(&groups)?;
        let tukey = tukey_hsd(&groups, self.alpha)?;
        let summaries = groups.iter().map(group_summary).collect::<Result<Vec<_>>>()?;
        let mut input = MetricInput::new(self.metric.clone(), groups, Some(tukey.clone()));
        input.decimals = self.decimals;
        let table = build_table(&[input])?;

        #[derive(Serialize)]
        struct StatsDocument<'a> {
            metric: &'a str,
            groups: &'a [GroupSummary],
            anova: &'a crate::stats::AnovaResult,
            tukey: &'a crate::stats::TukeyOutcome,
            table: &'a report::MetricTable,
        }
        let document = StatsDocument {
            metric: &self.metric,
            groups: &summaries,
            anova: &anova,
            tukey: &tukey,
            table: &table,
        };
        ctx.write("metrics.csv", &table.to_csv()?)?;
        ctx.write("metrics.json", &report::to_json_pretty(&document)?)?;
        Ok(RunStatus::Success)
    }
}

impl SynthJob {
    fn run(self, ctx: &mut RunContext) -> std::result::Result<RunStatus, Failure> {
        let spec_json = report::to_json_pretty(&self.spec)?;
        match &self.spec_file {
            Some(path) => ctx.add_input(path)?,
            None => {
                // no input file exists, so the resolved spec stands in for one
                let digest = report::text_digest(&spec_json);
                ctx.manifest.input_digests.insert("<resolved spec>".into(), digest);
            }
        }
        let dir = ctx.dir.clone();
        for sub in ["images", "masks", "truth"] {
            let path = dir.join(sub);
            std::fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        }
        let names: Vec<String> = (0..self.count).map(|i| format!("synth_{i:04}")).collect();
        let results: Vec<Result<()>> = names
            .par_iter()
            .enumerate()
            .map(|(i, name)| {
                let spec = SynthSpec {
                    seed: self.spec.seed.wrapping_add(i as u64),
                    ..self.spec.clone()
                };
                let fixture = generate(&spec)?;
                save_fixture(
                    &fixture,
                    &dir.join("images").join(format!("{name}.png")),
                    &dir.join("masks").join(format!("{name}.png")),
                    &dir.join("truth").join(format!("{name}.json")),
                )
            })
            .collect();
        for (name, result) in names.iter().zip(results) {
            result?;
            for (sub, ext) in [("images", "png"), ("masks", "png"), ("truth", "json")] {
                ctx.manifest.outputs.push(format!("{sub}/{name}.{ext}"));
            }
        }
        ctx.write("spec.json", &spec_json)?;
        Ok(RunStatus::Success)
    }
}
