//! Config-driven runs.
//!
//! A config is a flat `key = value` text file (`#` starts a comment
//! line). Required keys are `out_dir` and `stages`; `seed` defaults
//! to 0. Stage parameters are written `stage.field = value`, where a
//! comma-separated value is a list. Stages always run in the order
//!
//! `cloud, rays, signature, histograms, voronoi, coverage, curvature,
//! salient`, followed by any experiments (`hist-invariance`,
//! `coverage-sweep`, `curvature-sphere`, `outlier-kappa`,
//! `class-matrix`, `classification`),
//!
//! whatever order they are listed in. Relative paths are resolved
//! against the directory holding the config file. Every run writes
//! `manifest.json` with the provenance and the SHA-256 of each artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use raysense_core::geometry::{coverage, curvature_along_rays, salient_points, Top};
use raysense_core::pointcloud::{add_gaussian_noise, add_outliers, calibrate, embed_rotate, synth_shape, OutlierMode, ShapeKind, ShapeParams};
use raysense_core::rays::{generate_r1, generate_r2, RayMethod, DEFAULT_LENGTH, DEFAULT_TAU};
use raysense_core::rng::{indexed_seed, named_seed};
use raysense_core::signature::{build_signature, FeatureSpec};
use raysense_core::stats::{coordinate_histograms, estimate_voronoi_lengths, DEFAULT_BINS, DEFAULT_RANGE};
use raysense_core::{PointCloud, RaySet, Signature};

use crate::error::{usage, Error, Result};
use crate::experiments;
use crate::io::{load_cloud, save_cloud, save_rays, save_signature, CloudFormat};
use crate::report::{sha256_hex, to_json, Provenance};

const STAGES: [&str; 8] = [
    "cloud",
    "rays",
    "signature",
    "histograms",
    "voronoi",
    "coverage",
    "curvature",
    "salient",
];
const EXPERIMENTS: [&str; 6] = [
    "hist-invariance",
    "coverage-sweep",
    "curvature-sphere",
    "outlier-kappa",
    "class-matrix",
    "classification",
];

/// Parsed `key = value` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().to_owned();
            if key.is_empty() {
                return Err(usage(format!("config line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_owned()).is_some() {
                return Err(usage(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
        }
        if entries.is_empty() {
            return Err(usage("config is empty; it needs at least `out_dir` and `stages`"));
        }
        Ok(Self { entries })
    }

    /// Every entry as a JSON field.
    pub fn fields(&self) -> Map<String, Value> {
        self.entries.iter().map(|(k, v)| (k.clone(), parse_value(v))).collect()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Fields `stage.*` as a JSON object.
    fn section(&self, stage: &str) -> Map<String, Value> {
        let prefix = format!("{stage}.");
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|f| (f.to_owned(), parse_value(v))))
            .collect()
    }

    fn stage<T: DeserializeOwned>(&self, stage: &str, extra: Map<String, Value>) -> Result<T> {
        let mut map = extra;
        map.extend(self.section(stage));
        serde_json::from_value(Value::Object(map)).map_err(|e| usage(format!("config section {stage}: {e}")))
    }
}

fn parse_scalar(s: &str) -> Value {
    if let Ok(v) = s.parse::<u64>() {
        return Value::from(v);
    }
    if let Ok(v) = s.parse::<i64>() {
        return Value::from(v);
    }
    if let Ok(v) = s.parse::<f64>() {
        return Value::from(v);
    }
    match s {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(s.to_owned()),
    }
}

/// Reads a config value: comma-separated lists, numbers, booleans,
/// otherwise a string.
pub fn parse_value(s: &str) -> Value {
    if s.contains(',') {
        Value::Array(s.split(',').map(|t| parse_scalar(t.trim())).filter(|v| v != &Value::String(String::new())).collect())
    } else {
        parse_scalar(s)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CloudStage {
    input: Option<PathBuf>,
    format: Option<String>,
    shape: ShapeKind,
    n: usize,
    dim: usize,
    calibrate: bool,
    embed_dim: Option<usize>,
    outliers: usize,
    outlier_mode: OutlierMode,
    noise: f64,
}

impl Default for CloudStage {
    fn default() -> Self {
        Self {
            input: None,
            format: None,
            shape: ShapeKind::Sphere,
            n: 1000,
            dim: 3,
            calibrate: true,
            embed_dim: None,
            outliers: 0,
            outlier_mode: OutlierMode::CubeUniform,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RayStage {
    method: String,
    m: usize,
    k: usize,
    length: f64,
    tau: f64,
    radius: f64,
}

impl Default for RayStage {
    fn default() -> Self {
        Self {
            method: "r1".into(),
            m: 50,
            k: 10,
            length: DEFAULT_LENGTH,
            tau: DEFAULT_TAU,
            radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SignatureStage {
    kappa: usize,
    features: Vec<String>,
}

impl Default for SignatureStage {
    fn default() -> Self {
        Self {
            kappa: 1,
            features: vec!["cp".into(), "disp".into()],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct HistogramStage {
    bins: usize,
    lo: f64,
    hi: f64,
}

impl Default for HistogramStage {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            lo: DEFAULT_RANGE.0,
            hi: DEFAULT_RANGE.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VoronoiStage {
    clip_radius: f64,
}

impl Default for VoronoiStage {
    fn default() -> Self {
        Self { clip_radius: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SalientStage {
    top: usize,
}

impl Default for SalientStage {
    fn default() -> Self {
        Self { top: 20 }
    }
}

/// Parses `cp,disp,dist` into a feature spec.
pub fn feature_spec(features: &[impl AsRef<str>], kappa: usize) -> Result<FeatureSpec> {
    let mut spec = FeatureSpec {
        include_closest_point: false,
        include_displacement: false,
        include_distance: false,
        kappa,
    };
    for f in features {
        match f.as_ref() {
            "cp" => spec.include_closest_point = true,
            "disp" => spec.include_displacement = true,
            "dist" => spec.include_distance = true,
            other => return Err(usage(format!("unknown feature {other:?} (cp, disp, dist)"))),
        }
    }
    Ok(spec)
}

/// Generates rays by method name (`r1` or `r2`).
#[allow(clippy::too_many_arguments)]
pub fn make_rays(method: &str, m: usize, k: usize, dim: usize, length: f64, tau: f64, radius: f64, seed: u64) -> Result<RaySet> {
    match method.parse::<RayMethod>().map_err(|e| usage(e.to_string()))? {
        RayMethod::R1 => Ok(generate_r1(m, k, dim, length, seed)?),
        RayMethod::R2 => Ok(generate_r2(m, k, dim, tau, radius, seed)?),
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub provenance: Provenance,
    /// Artifact file name → SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

struct Run {
    out_dir: PathBuf,
    seed: u64,
    provenance: Provenance,
    artifacts: BTreeMap<String, String>,
}

impl Run {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.out_dir.join(name);
        let text = to_json(&self.provenance, value).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        self.artifacts.insert(name.to_owned(), sha256_hex(text.as_bytes()));
        Ok(())
    }

    fn binary(&mut self, name: &str, save: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.out_dir.join(name);
        save(&path)?;
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.artifacts.insert(name.to_owned(), sha256_hex(&bytes));
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Runs the stages named in the config file at `path`.
pub fn run_pipeline(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = Config::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_config(&config, base, &text)
}

/// Runs a parsed config; `base` anchors relative paths and `source` is
/// hashed into the provenance.
pub fn run_config(config: &Config, base: &Path, source: &str) -> Result<Manifest> {
    let known: Vec<&str> = STAGES.iter().chain(EXPERIMENTS.iter()).copied().collect();
    for key in config.entries.keys() {
        match key.split_once('.') {
            Some((stage, _)) if known.contains(&stage) => {}
            None if ["out_dir", "seed", "stages"].contains(&key.as_str()) => {}
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
    }
    let out_dir = resolve(base, Path::new(config.get("out_dir").ok_or_else(|| usage("config needs `out_dir`"))?));
    let seed = match config.get("seed") {
        Some(s) => s.parse().map_err(|_| usage(format!("seed {s:?} is not an unsigned integer")))?,
        None => 0,
    };
    let listed: Vec<String> = config
        .get("stages")
        .ok_or_else(|| usage("config needs `stages`"))?
        .split(',')
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .collect();
    if listed.is_empty() {
        return Err(usage("`stages` is empty"));
    }
    for s in &listed {
        if !known.contains(&s.as_str()) {
            return Err(usage(format!("unknown stage {s:?}")));
        }
    }
    let wants = |s: &str| listed.iter().any(|l| l == s);
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut provenance = Provenance::new("run", Some(seed));
    provenance.inputs.insert("config".into(), sha256_hex(source.as_bytes()));
    let mut run = Run {
        out_dir,
        seed,
        provenance,
        artifacts: BTreeMap::new(),
    };

    let mut cloud: Option<PointCloud> = None;
    let mut rays: Option<RaySet> = None;
    let mut sig: Option<Signature> = None;
    let need = |what: &str, stage: &str| usage(format!("stage {stage} needs the {what} stage"));

    if wants("cloud") {
        let st: CloudStage = config.stage("cloud", Map::new())?;
        let c = cloud_stage(&st, base, &mut run)?;
        run.binary("cloud.rspc", |p| save_cloud(&c, p, CloudFormat::BinaryF32))?;
        cloud = Some(c);
    }
    if wants("rays") {
        let st: RayStage = config.stage("rays", Map::new())?;
        let dim = cloud.as_ref().map_or(3, PointCloud::dim);
        let r = make_rays(&st.method, st.m, st.k, dim, st.length, st.tau, st.radius, named_seed(run.seed, "rays"))?;
        run.binary("rays.rsry", |p| save_rays(&r, p))?;
        rays = Some(r);
    }
    if wants("signature") {
        let st: SignatureStage = config.stage("signature", Map::new())?;
        let c = cloud.as_ref().ok_or_else(|| need("cloud", "signature"))?;
        let r = rays.as_ref().ok_or_else(|| need("rays", "signature"))?;
        let s = build_signature(c, r, &feature_spec(&st.features, st.kappa)?)?;
        run.binary("signature.rssg", |p| save_signature(&s, p))?;
        sig = Some(s);
    }
    if wants("histograms") {
        let st: HistogramStage = config.stage("histograms", Map::new())?;
        let s = sig.as_ref().ok_or_else(|| need("signature", "histograms"))?;
        run.json("histograms.json", &coordinate_histograms(s, st.bins, st.lo, st.hi)?)?;
    }
    if wants("voronoi") {
        let st: VoronoiStage = config.stage("voronoi", Map::new())?;
        let c = cloud.as_ref().ok_or_else(|| need("cloud", "voronoi"))?;
        let r = rays.as_ref().ok_or_else(|| need("rays", "voronoi"))?;
        run.json("voronoi.json", &estimate_voronoi_lengths(c, r, st.clip_radius)?)?;
    }
    if wants("coverage") {
        let c = cloud.as_ref().ok_or_else(|| need("cloud", "coverage"))?;
        let s = sig.as_ref().ok_or_else(|| need("signature", "coverage"))?;
        run.json("coverage.json", &coverage(c, s)?)?;
    }
    if wants("curvature") {
        let s = sig.as_ref().ok_or_else(|| need("signature", "curvature"))?;
        let profile = curvature_along_rays(s)?;
        run.json("curvature.json", &serde_json::json!({ "summary": profile.summary(), "profile": profile }))?;
    }
    if wants("salient") {
        let st: SalientStage = config.stage("salient", Map::new())?;
        let s = sig.as_ref().ok_or_else(|| need("signature", "salient"))?;
        run.json("salient.json", &salient_points(s, Top::Count(st.top)))?;
    }

    let root_seed = run.seed;
    let seed_field = |name: &str| {
        let mut m = Map::new();
        m.insert("seed".into(), Value::from(named_seed(root_seed, name)));
        m
    };
    if wants("hist-invariance") {
        let cfg: experiments::HistInvarianceConfig = config.stage("hist-invariance", seed_field("hist-invariance"))?;
        let report = experiments::hist_invariance(&cfg)?;
        run.json("hist-invariance.json", &serde_json::json!({ "config": cfg, "report": report }))?;
    }
    if wants("coverage-sweep") {
        let cfg: experiments::CoverageSweepConfig = config.stage("coverage-sweep", seed_field("coverage-sweep"))?;
        let report = experiments::coverage_sweep(&cfg)?;
        run.json("coverage-sweep.json", &serde_json::json!({ "config": cfg, "report": report }))?;
    }
    if wants("curvature-sphere") {
        let cfg: experiments::CurvatureSphereConfig = config.stage("curvature-sphere", seed_field("curvature-sphere"))?;
        let report = experiments::curvature_sphere(&cfg)?;
        run.json("curvature-sphere.json", &serde_json::json!({ "config": cfg, "report": report }))?;
    }
    if wants("outlier-kappa") {
        let cfg: experiments::OutlierKappaConfig = config.stage("outlier-kappa", seed_field("outlier-kappa"))?;
        let report = experiments::outlier_kappa(&cfg)?;
        run.json("outlier-kappa.json", &serde_json::json!({ "config": cfg, "report": report }))?;
    }
    if wants("class-matrix") {
        let cfg: experiments::ClassMatrixConfig = config.stage("class-matrix", seed_field("class-matrix"))?;
        let report = experiments::class_matrix(&cfg)?;
        run.json("class-matrix.json", &serde_json::json!({ "config": cfg, "report": report }))?;
    }
    if wants("classification") {
        let mut seeds = Map::new();
        let root = named_seed(root_seed, "classification");
        seeds.insert("seeds".into(), (0..5).map(|i| Value::from(indexed_seed(root, i))).collect());
        let cfg: experiments::ClassificationConfig = config.stage("classification", seeds)?;
        let report = experiments::classification(&cfg)?;
        run.json("classification.json", &serde_json::json!({ "config": cfg, "report": report }))?;
    }

    let manifest = Manifest {
        provenance: run.provenance.clone(),
        artifacts: run.artifacts.clone(),
    };
    let path = run.out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn cloud_stage(st: &CloudStage, base: &Path, run: &mut Run) -> Result<PointCloud> {
    let seed = named_seed(run.seed, "cloud");
    let mut cloud = match &st.input {
        Some(input) => {
            let path = resolve(base, input);
            let format = match &st.format {
                Some(f) => f.parse()?,
                None => CloudFormat::from_path(&path),
            };
            let c = load_cloud(&path, format)?;
            run.provenance.input(&path)?;
            c
        }
        None => synth_shape(st.shape, st.n, st.dim, &ShapeParams::default(), named_seed(seed, "shape"))?,
    };
    if st.calibrate {
        cloud = calibrate(&cloud).0;
    }
    if let Some(d) = st.embed_dim {
        cloud = embed_rotate(&cloud, d, named_seed(seed, "embed"))?;
    }
    if st.noise > 0.0 {
        cloud = add_gaussian_noise(&cloud, st.noise, named_seed(seed, "noise"));
    }
    if st.outliers > 0 {
        cloud = add_outliers(&cloud, st.outliers, st.outlier_mode, named_seed(seed, "outliers")).cloud;
    }
    Ok(cloud)
}
