//! One function per subcommand. Each reads its declared inputs, writes its
//! outputs and a manifest, and returns the first error it hits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use landuse_core::evaluate::{confusion, error_groups, naive_baseline_on, ConfusionReport};
use landuse_core::experiment::{active_labeled_cells, smooth};
use landuse_core::ingest::{ingest_csv, maybe_gzip, write_events_csv, ActivityCube, CubeMetadata};
use landuse_core::postprocess::PredictionGrid;
use landuse_core::rforest::{
    cross_validate, predict_matrix, train_forest_on, tune_weights, ClassWeights, Dataset, Forest, RankedData,
    TuneResult,
};
use landuse_core::signal::{class_average_profiles, compute_signals, write_profiles_csv, FeatureMatrix};
use landuse_core::synth::{generate_events, generate_layout, layout_polygons};
use landuse_core::zoning::{rasterize_zoning, read_geojson, write_geojson};
use landuse_core::{Error, LandUseClass, Result, ZoningGrid};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::manifest::StageRecord;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Writes through a buffered file, flushing before returning.
fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    })
}

fn read_zoning_grid(cfg: &Config, path: &Path) -> Result<ZoningGrid> {
    ZoningGrid::read_csv(cfg.grid()?, open(path)?)
}

fn read_cube(cfg: &Config, csv: &Path, meta: &Path) -> Result<ActivityCube> {
    let meta: CubeMetadata = serde_json::from_reader(open(meta)?)?;
    if meta.grid != cfg.grid()? {
        return Err(Error::Consistency("cube grid differs from the configured grid".into()));
    }
    ActivityCube::read_csv(&meta, open(csv)?)
}

fn read_predictions(cfg: &Config, path: &Path) -> Result<PredictionGrid> {
    PredictionGrid::read_csv(cfg.grid()?, open(path)?)
}

fn finish(rec: StageRecord, cfg: &Config) -> Result<()> {
    rec.finish(&cfg.dir()?, cfg.seed()?, cfg.to_json())?;
    Ok(())
}

pub fn synth(cfg: &Config) -> Result<()> {
    let mut rec = StageRecord::new("synth");
    let sc = cfg.synth()?;
    let zg = generate_layout(&sc)?;
    let polygons = rec.output(cfg.path("zoning_polygons")?)?;
    write_file(&polygons, |w| write_geojson(&layout_polygons(&zg), w))?;
    let truth = rec.output(cfg.path("truth")?)?;
    write_file(&truth, |w| zg.write_csv(w))?;
    let events = rec.output(cfg.path("events")?)?;
    let stream = generate_events(&zg, &sc)?;
    let gz = events.extension().is_some_and(|e| e == "gz");
    write_file(&events, |w| {
        if gz {
            let mut enc = GzEncoder::new(&mut *w, Compression::fast());
            write_events_csv(stream, &mut enc)?;
            enc.finish().map_err(|e| Error::io(&events, e))?;
            Ok(())
        } else {
            write_events_csv(stream, w)
        }
    })?;
    log::info!("synthetic city written to {}", cfg.dir()?.display());
    finish(rec, cfg)
}

pub fn rasterize(cfg: &Config) -> Result<()> {
    let mut rec = StageRecord::new("rasterize");
    let input = rec.input(cfg.path("zoning_polygons")?)?;
    let polygons = read_geojson(open(&input)?)?;
    let zg = rasterize_zoning(&polygons, &cfg.grid()?, cfg.f64("zoning.min_coverage")?)?;
    let shares = zg.class_shares();
    log::info!("{} labeled cells, counts {:?}", shares.labeled, shares.counts);
    let out = rec.output(cfg.path("zoning_grid")?)?;
    write_file(&out, |w| zg.write_csv(w))?;
    finish(rec, cfg)
}

pub fn ingest(cfg: &Config) -> Result<()> {
    let mut rec = StageRecord::new("ingest");
    let input = rec.input(cfg.path("events")?)?;
    let reader = maybe_gzip(File::open(&input).map_err(|e| Error::io(&input, e))?)?;
    let cube = ingest_csv(reader, &cfg.grid()?, &cfg.window()?)?;
    log::info!("binned {} events", cube.stats.binned);
    let csv = rec.output(cfg.path("cube")?)?;
    write_file(&csv, |w| cube.write_csv(w))?;
    let meta = rec.output(cfg.path("cube_meta")?)?;
    write_json(&meta, &cube.metadata())?;
    finish(rec, cfg)
}

pub fn features(cfg: &Config) -> Result<()> {
    let mut rec = StageRecord::new("features");
    let cube = read_cube(cfg, &rec.input(cfg.path("cube")?)?, &rec.input(cfg.path("cube_meta")?)?)?;
    let zg = read_zoning_grid(cfg, &rec.input(cfg.path("zoning_grid")?)?)?;
    let active = active_labeled_cells(&cube, &zg, cfg.u64("activity.min_total_events")?)?;
    log::info!("{} active labeled cells", active.len());
    let signals = compute_signals(&cube, &active)?;
    let out = rec.output(cfg.path("features")?)?;
    write_file(&out, |w| signals.features.write_csv(w))?;
    let profiles = class_average_profiles(&cube, &signals.normalized, &signals.residual, &zg)?;
    let out = rec.output(cfg.path("profiles")?)?;
    write_file(&out, |w| write_profiles_csv(&profiles, w))?;
    finish(rec, cfg)
}

/// Cross-validation and weight-tuning summary written by `train`.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub classes: Vec<LandUseClass>,
    pub class_counts: Vec<usize>,
    pub folds: usize,
    pub uniform_cv_accuracy: f64,
    pub weights: ClassWeights,
    pub vote_thresholds: Vec<f64>,
    pub cv_accuracy: f64,
    pub tuned_objective_score: Option<f64>,
    pub grid_points_evaluated: Option<usize>,
}

pub fn train(cfg: &Config) -> Result<()> {
    let mut rec = StageRecord::new("train");
    let spec = cfg.grid()?;
    let fm = FeatureMatrix::read_csv(spec, open(&rec.input(cfg.path("features")?)?)?)?;
    let zg = read_zoning_grid(cfg, &rec.input(cfg.path("zoning_grid")?)?)?;
    let ds = Dataset::from_features(&fm, &zg, &cfg.classes()?)?;
    let params = cfg.forest()?;
    let folds = cfg.usize("cv.folds")?;
    log::info!("training on {} rows, class counts {:?}", ds.len(), ds.class_counts());
    let cv = cross_validate(&ds, &params, folds)?;
    let uniform = ClassWeights::uniform(ds.classes.len());
    let tuning: Option<TuneResult> = match cfg.weight_grid()? {
        Some(grid) => Some(tune_weights(&cv, &grid, cfg.objective()?)?),
        None => None,
    };
    let weights = tuning.as_ref().map_or_else(|| uniform.clone(), |t| t.weights.clone());
    let oof: Vec<LandUseClass> = cv.predict(&weights).into_iter().map(|k| ds.classes[k]).collect();
    let grid = PredictionGrid::from_cells(spec, &ds.cells, &oof)?;
    let out = rec.output(cfg.path("oof_predictions")?)?;
    write_file(&out, |w| grid.write_csv(w))?;

    let ranked = RankedData::new(&ds);
    let rows: Vec<u32> = (0..ds.len() as u32).collect();
    let forest = train_forest_on(&ranked, &ds.classes, &rows, &params, weights.clone())?;
    let out = rec.output(cfg.path("model")?)?;
    write_file(&out, |w| forest.write_json(w))?;

    let summary = TrainingSummary {
        classes: ds.classes.clone(),
        class_counts: ds.class_counts(),
        folds,
        uniform_cv_accuracy: cv.accuracy(&uniform),
        vote_thresholds: weights.vote_thresholds(),
        cv_accuracy: cv.accuracy(&weights),
        weights,
        tuned_objective_score: tuning.as_ref().map(|t| t.score),
        grid_points_evaluated: tuning.as_ref().map(|t| t.evaluated),
    };
    log::info!("cross-validated accuracy {:.4}", summary.cv_accuracy);
    let out = rec.output(cfg.path("training")?)?;
    write_json(&out, &summary)?;
    finish(rec, cfg)
}

pub fn predict(cfg: &Config) -> Result<()> {
    let mut rec = StageRecord::new("predict");
    let spec = cfg.grid()?;
    let forest = Forest::read_json(open(&rec.input(cfg.path("model")?)?)?)?;
    let fm = FeatureMatrix::read_csv(spec, open(&rec.input(cfg.path("features")?)?)?)?;
    let preds = predict_matrix(&forest, &fm)?;
    let classes: Vec<LandUseClass> = preds.iter().map(|p| p.class).collect();
    let grid = PredictionGrid::from_cells(spec, &fm.cells, &classes)?;
    let out = rec.output(cfg.path("predictions")?)?;
    write_file(&out, |w| grid.write_csv(w))?;
    finish(rec, cfg)
}

fn raw_predictions_key(cfg: &Config) -> Result<&'static str> {
    Ok(match cfg.smooth_input()? {
        "model" => "predictions",
        _ => "oof_predictions",
    })
}

pub fn smooth_stage(cfg: &Config) -> Result<()> {
    let mut rec = StageRecord::new("smooth");
    let raw = read_predictions(cfg, &rec.input(cfg.path(raw_predictions_key(cfg)?)?)?)?;
    let smoothed = smooth(&raw, cfg.smoothing()?)?;
    let changed = raw.predicted.iter().zip(&smoothed.predicted).filter(|(a, b)| a != b).count();
    log::info!("smoothing changed {changed} cells");
    let out = rec.output(cfg.path("smoothed")?)?;
    write_file(&out, |w| smoothed.write_csv(w))?;
    finish(rec, cfg)
}

#[derive(Debug, Serialize)]
struct Report {
    naive_baseline: f64,
    raw: ConfusionReport,
    smoothed: ConfusionReport,
    error_group_focal: LandUseClass,
}

pub fn evaluate(cfg: &Config) -> Result<()> {
    let mut rec = StageRecord::new("evaluate");
    let zg = read_zoning_grid(cfg, &rec.input(cfg.path("zoning_grid")?)?)?;
    let raw = read_predictions(cfg, &rec.input(cfg.path(raw_predictions_key(cfg)?)?)?)?;
    let smoothed = read_predictions(cfg, &rec.input(cfg.path("smoothed")?)?)?;
    let summary: TrainingSummary = serde_json::from_reader(open(&rec.input(cfg.path("training")?)?)?)?;
    let cube = read_cube(cfg, &rec.input(cfg.path("cube")?)?, &rec.input(cfg.path("cube_meta")?)?)?;

    let thresholds = summary.vote_thresholds.clone();
    let raw_report = confusion(&zg, &raw, &summary.classes)?.with_vote_thresholds(thresholds.clone());
    let smoothed_report = confusion(&zg, &smoothed, &summary.classes)?.with_vote_thresholds(thresholds);
    let focal = cfg.focal()?;
    let active: Vec<usize> = raw.active_cells().collect();
    let signals = compute_signals(&cube, &active)?;
    let groups = error_groups(&zg, &raw, &signals.residual, focal)?;
    let report = Report {
        naive_baseline: naive_baseline_on(&zg, &raw)?,
        raw: raw_report,
        smoothed: smoothed_report,
        error_group_focal: focal,
    };
    log::info!(
        "accuracy raw {:.4}, smoothed {:.4}, all-Residential baseline {:.4}",
        report.raw.total_accuracy,
        report.smoothed.total_accuracy,
        report.naive_baseline
    );

    let out = rec.output(cfg.path("report_json")?)?;
    write_json(&out, &report)?;
    let out = rec.output(cfg.path("report_txt")?)?;
    let text = format!(
        "Raw predictions\n{}\nAfter smoothing\n{}\nAll-Residential baseline: {:.2}\n",
        report.raw.to_text(),
        report.smoothed.to_text(),
        report.naive_baseline
    );
    write_file(&out, |w| w.write_all(text.as_bytes()).map_err(|e| Error::io(&out, e)))?;
    let out = rec.output(cfg.path("error_groups")?)?;
    write_file(&out, |w| groups.write_csv(w))?;
    finish(rec, cfg)
}

pub fn pipeline(cfg: &Config) -> Result<()> {
    for (name, stage) in PIPELINE {
        log::info!("stage {name}");
        stage(cfg)?;
    }
    Ok(())
}

type Stage = fn(&Config) -> Result<()>;

const PIPELINE: &[(&str, Stage)] = &[
    ("rasterize", rasterize),
    ("ingest", ingest),
    ("features", features),
    ("train", train),
    ("predict", predict),
    ("smooth", smooth_stage),
    ("evaluate", evaluate),
];
