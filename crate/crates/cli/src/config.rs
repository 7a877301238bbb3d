//! Flat `section.key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use landuse_core::experiment::Smoothing;
use landuse_core::grid::{GridSpec, LandUseClass, DEFAULT_CELL_SIZE};
use landuse_core::ingest::{ObservationWindow, DEFAULT_MIN_TOTAL_EVENTS};
use landuse_core::rforest::{ForestParams, Objective, WeightGrid};
use landuse_core::synth::{CountModel, SynthConfig};
use landuse_core::{Error, Result};
use toml::Value;

/// Every recognized key with its default.
fn defaults() -> BTreeMap<String, Value> {
    let synth = SynthConfig::default();
    let forest = ForestParams::default();
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        m.insert(k.to_string(), v);
    };
    put("seed", Value::Integer(1));
    put("grid.origin_x", Value::Float(0.0));
    put("grid.origin_y", Value::Float(0.0));
    put("grid.cell_size", Value::Float(DEFAULT_CELL_SIZE));
    put("grid.n_rows", Value::Integer(synth.n_rows as i64));
    put("grid.n_cols", Value::Integer(synth.n_cols as i64));
    put("zoning.min_coverage", Value::Float(0.0));
    put("window.start", Value::String(synth.start.to_string()));
    put("window.days", Value::Integer(synth.days as i64));
    put("activity.min_total_events", Value::Integer(DEFAULT_MIN_TOTAL_EVENTS as i64));
    put("classes.subset", Value::String("all".into()));
    put("forest.n_trees", Value::Integer(forest.n_trees as i64));
    put("forest.mtry", Value::Integer(forest.mtry as i64));
    put("forest.min_leaf", Value::Integer(forest.min_leaf as i64));
    put("cv.folds", Value::Integer(5));
    put("weights.tune", Value::Boolean(true));
    put(
        "weights.grid",
        Value::Array(WeightGrid::default().candidates.into_iter().map(Value::Float).collect()),
    );
    put("weights.objective", Value::String("non_residential_macro_recall".into()));
    put("smooth.mode", Value::String("second_pass".into()));
    put("smooth.input", Value::String("oof".into()));
    put("evaluate.focal", Value::String("Residential".into()));
    put("synth.patch_size", Value::Float(synth.patch_size));
    put("synth.gradient", Value::Float(synth.gradient));
    put("synth.noise", Value::Float(synth.noise));
    put("synth.count_model", Value::String("poisson".into()));
    put("synth.utc_offset_hours", Value::Integer(synth.utc_offset_hours as i64));
    put("paths.dir", Value::String("out".into()));
    for (key, file) in ARTIFACTS {
        put(&format!("paths.{key}"), Value::String((*file).into()));
    }
    m
}

/// Artifact keys and default file names, relative to `paths.dir`.
const ARTIFACTS: &[(&str, &str)] = &[
    ("zoning_polygons", "zoning.geojson"),
    ("truth", "truth.csv"),
    ("events", "events.csv.gz"),
    ("zoning_grid", "zoning_grid.csv"),
    ("cube", "cube.csv"),
    ("cube_meta", "cube.meta.json"),
    ("features", "features.csv"),
    ("profiles", "profiles.csv"),
    ("model", "forest.json"),
    ("training", "training.json"),
    ("oof_predictions", "oof_predictions.csv"),
    ("predictions", "predictions.csv"),
    ("smoothed", "smoothed.csv"),
    ("report_json", "report.json"),
    ("report_txt", "report.txt"),
    ("error_groups", "error_groups.csv"),
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Resolved key-value configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

impl Config {
    /// Defaults, then the file (if any), then `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut values = defaults();
        let mut given = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let table: toml::Table =
                text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            flatten("", &table, &mut given);
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not of the form key=value")))?;
            given.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let unknown: Vec<&String> = given.keys().filter(|k| !values.contains_key(*k)).collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown configuration keys: {unknown:?}")));
        }
        values.extend(given);
        let cfg = Config { values };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        self.grid()?;
        self.window()?;
        self.forest()?;
        self.classes()?;
        self.weight_grid()?;
        self.objective()?;
        self.smoothing()?;
        self.smooth_input()?;
        self.focal()?;
        self.synth()?.validate()?;
        self.f64("zoning.min_coverage")?;
        self.u64("activity.min_total_events")?;
        self.usize("cv.folds")?;
        Ok(())
    }

    /// Key-sorted resolved values, as recorded in manifests.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.values).expect("toml values serialize")
    }

    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("configuration key {key} has no default"))
    }

    fn bad(key: &str, want: &str, v: &Value) -> Error {
        Error::Config(format!("{key}: expected {want}, got {v}"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        match self.get(key) {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            v => Err(Self::bad(key, "a number", v)),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        match self.get(key) {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            v => Err(Self::bad(key, "a non-negative integer", v)),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.u64(key).map(|v| v as usize)
    }

    pub fn i64(&self, key: &str) -> Result<i64> {
        match self.get(key) {
            Value::Integer(i) => Ok(*i),
            v => Err(Self::bad(key, "an integer", v)),
        }
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            Value::Boolean(b) => Ok(*b),
            v => Err(Self::bad(key, "true or false", v)),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        match self.get(key) {
            Value::String(s) => Ok(s),
            v => Err(Self::bad(key, "a string", v)),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64("seed")
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.f64("grid.origin_x")?,
            self.f64("grid.origin_y")?,
            self.f64("grid.cell_size")?,
            self.usize("grid.n_rows")?,
            self.usize("grid.n_cols")?,
        )
    }

    pub fn window(&self) -> Result<ObservationWindow> {
        let raw = self.str("window.start")?;
        let start: NaiveDate =
            raw.parse().map_err(|_| Error::Config(format!("window.start: {raw:?} is not a YYYY-MM-DD date")))?;
        ObservationWindow::from_days(start, self.u64("window.days")? as u32)
    }

    pub fn forest(&self) -> Result<ForestParams> {
        let p = ForestParams {
            n_trees: self.usize("forest.n_trees")?,
            mtry: self.usize("forest.mtry")?,
            min_leaf: self.usize("forest.min_leaf")?,
            master_seed: self.seed()?,
        };
        p.validate(landuse_core::signal::N_FEATURES)?;
        Ok(p)
    }

    pub fn classes(&self) -> Result<Vec<LandUseClass>> {
        self.classes_inner().map_err(|e| match e {
            Error::Parse(m) => Error::Config(format!("classes.subset: {m}")),
            e => e,
        })
    }

    fn classes_inner(&self) -> Result<Vec<LandUseClass>> {
        let mut out = match self.get("classes.subset") {
            Value::String(s) if s.eq_ignore_ascii_case("all") => LandUseClass::ALL.to_vec(),
            Value::String(s) => s.split(',').map(|c| c.parse()).collect::<Result<Vec<_>>>()?,
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.parse(),
                    Value::Integer(i) => LandUseClass::from_code(*i as u8)
                        .ok_or_else(|| Error::Config(format!("classes.subset: no class with code {i}"))),
                    v => Err(Self::bad("classes.subset", "class names", v)),
                })
                .collect::<Result<Vec<_>>>()?,
            v => return Err(Self::bad("classes.subset", "\"all\" or a list of classes", v)),
        };
        out.sort();
        out.dedup();
        if out.len() < 2 {
            return Err(Error::Config("classes.subset must name at least two classes".into()));
        }
        Ok(out)
    }

    pub fn weight_grid(&self) -> Result<Option<WeightGrid>> {
        if !self.bool("weights.tune")? {
            return Ok(None);
        }
        let candidates = match self.get("weights.grid") {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    v => Err(Self::bad("weights.grid", "numbers", v)),
                })
                .collect::<Result<Vec<_>>>()?,
            v => return Err(Self::bad("weights.grid", "an array of numbers", v)),
        };
        if candidates.is_empty() || candidates.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("weights.grid must be a non-empty list of positive numbers".into()));
        }
        Ok(Some(WeightGrid { candidates }))
    }

    pub fn objective(&self) -> Result<Objective> {
        self.str("weights.objective")?.parse()
    }

    pub fn smoothing(&self) -> Result<Smoothing> {
        self.str("smooth.mode")?.parse()
    }

    /// Which raw predictions the smoother reads: out-of-fold or final-model.
    pub fn smooth_input(&self) -> Result<&str> {
        match self.str("smooth.input")? {
            s @ ("oof" | "model") => Ok(s),
            other => Err(Error::Config(format!("smooth.input: expected oof or model, got {other:?}"))),
        }
    }

    pub fn focal(&self) -> Result<LandUseClass> {
        self.str("evaluate.focal")?.parse().map_err(|e: Error| Error::Config(format!("evaluate.focal: {e}")))
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        let grid = self.grid()?;
        let window = self.window()?;
        let count_model: CountModel = self.str("synth.count_model")?.parse()?;
        Ok(SynthConfig {
            n_rows: grid.n_rows,
            n_cols: grid.n_cols,
            cell_size: grid.cell_size,
            origin_x: grid.origin_x,
            origin_y: grid.origin_y,
            patch_size: self.f64("synth.patch_size")?,
            gradient: self.f64("synth.gradient")?,
            noise: self.f64("synth.noise")?,
            count_model,
            start: window.start,
            days: window.n_days() as u32,
            utc_offset_hours: self.i64("synth.utc_offset_hours")? as i32,
            seed: self.seed()?,
            ..SynthConfig::default()
        })
    }

    /// Path of an artifact, resolved against `paths.dir` unless absolute.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        let p = PathBuf::from(self.str(&format!("paths.{key}"))?);
        Ok(if p.is_absolute() { p } else { self.dir()?.join(p) })
    }

    pub fn dir(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.str("paths.dir")?))
    }
}
