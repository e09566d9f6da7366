//! The `rs` command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use raysense_core::classify::{ensemble_classify, nn_classify, Binning, Metric, SignatureGallery};
use raysense_core::geometry::{
    coverage, curvature_along_rays, curvature_from_cloud, salient_points, surface_curvature_along_rays, Top,
};
use raysense_core::pointcloud::{add_outliers, calibrate, embed_rotate, synth_shape, OutlierMode, ShapeKind, ShapeParams};
use raysense_core::rays::{DEFAULT_LENGTH, DEFAULT_TAU};
use raysense_core::rng::{indexed_seed, named_seed};
use raysense_core::signature::build_signature;
use raysense_core::stats::{class_distance_matrix, coordinate_histograms, estimate_voronoi_lengths, hist_distance_pair, HistMetric};
use raysense_core::{PointCloud, Signature};

use crate::error::{usage, Error, Result};
use crate::experiments;
use crate::io::{load_cloud, load_rays, load_signature, save_cloud, save_rays, save_signature, CloudFormat};
use crate::pipeline::{feature_spec, make_rays, run_pipeline, Config};
use crate::report::{emit, Provenance};

#[derive(Debug, Parser)]
#[command(name = "rs", version, about = "Sample point sets along random rays")]
pub struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and transform point clouds.
    #[command(subcommand)]
    Cloud(CloudCmd),
    /// Generate ray sets.
    #[command(subcommand)]
    Rays(RaysCmd),
    /// Build and inspect signatures.
    #[command(subcommand)]
    Sig(SigCmd),
    /// Histograms, distances, class matrices and Voronoi lengths.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Curvature, coverage and salient points.
    #[command(subcommand)]
    Geom(GeomCmd),
    /// Classify a query against a labelled gallery.
    Classify(ClassifyArgs),
    /// Run one of the built-in experiments.
    Exp(ExpArgs),
    /// Run the stages of a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CloudCmd {
    /// Sample a synthetic shape.
    Gen {
        #[arg(long, default_value = "sphere")]
        shape: ShapeKind,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Center and scale into the unit ball.
        #[arg(long)]
        calibrate: bool,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 1.0)]
        torus_major: f64,
        #[arg(long, default_value_t = 0.4)]
        torus_minor: f64,
        #[command(flatten)]
        out: CloudOut,
    },
    /// Center at the origin and scale into the unit ball.
    Calibrate {
        #[command(flatten)]
        input: CloudIn,
        #[command(flatten)]
        out: CloudOut,
        /// Write the calibration report (JSON) here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Embed into a higher dimension by a random rotation.
    Embed {
        #[command(flatten)]
        input: CloudIn,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: CloudOut,
    },
    /// Append outlier points (labelled -1).
    Outliers {
        #[command(flatten)]
        input: CloudIn,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value = "cube-uniform")]
        mode: OutlierMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: CloudOut,
    },
}

#[derive(Debug, Args)]
pub struct CloudIn {
    /// Input cloud (`.rspc` is binary, anything else text).
    #[arg(long)]
    pub input: PathBuf,
    /// Text input carries a trailing integer label column.
    #[arg(long)]
    pub labels: bool,
}

#[derive(Debug, Args)]
pub struct CloudOut {
    #[arg(long)]
    pub out: PathBuf,
    /// text-xyz, text-xyz-labels or binary-f32 (default: from the extension).
    #[arg(long)]
    pub format: Option<CloudFormat>,
}

#[derive(Debug, Subcommand)]
pub enum RaysCmd {
    Gen {
        #[arg(long, default_value = "r1")]
        method: String,
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// R1 ray length.
        #[arg(long = "L", default_value_t = DEFAULT_LENGTH)]
        length: f64,
        /// R2 minimum ray length.
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        /// R2 sphere radius.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum SigCmd {
    Build {
        #[command(flatten)]
        cloud: CloudIn,
        #[arg(long)]
        rays: PathBuf,
        #[arg(long, default_value_t = 1)]
        kappa: usize,
        /// Comma-separated subset of cp, disp, dist.
        #[arg(long, default_value = "cp,disp", value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump a signature file as JSON.
    Dump {
        #[arg(long)]
        sig: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HistMetricArg {
    W1,
    L2,
}

impl From<HistMetricArg> for HistMetric {
    fn from(m: HistMetricArg) -> Self {
        match m {
            HistMetricArg::W1 => HistMetric::W1,
            HistMetricArg::L2 => HistMetric::L2,
        }
    }
}

#[derive(Debug, Args)]
pub struct BinArgs {
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// `lo,hi`.
    #[arg(long, default_value = "-1,1", allow_hyphen_values = true, value_parser = parse_range)]
    pub range: (f64, f64),
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number {hi:?}"))?;
    if lo.is_nan() || hi.is_nan() || hi <= lo {
        return Err("range needs lo < hi".into());
    }
    Ok((lo, hi))
}

#[derive(Debug, Subcommand)]
pub enum StatsCmd {
    /// Per-coordinate histograms of sensed points.
    Hist {
        #[arg(long)]
        sig: PathBuf,
        #[command(flatten)]
        bins: BinArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram distance between two signatures.
    W1 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_enum, default_value = "w1")]
        metric: HistMetricArg,
        #[command(flatten)]
        bins: BinArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Class-averaged distance matrix over a gallery of signatures.
    Matrix {
        /// Directory with signature files and `labels.txt`.
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long, value_enum, default_value = "w1")]
        metric: HistMetricArg,
        #[command(flatten)]
        bins: BinArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Voronoi ray-length estimates `H_j`.
    Voronoi {
        #[command(flatten)]
        cloud: CloudIn,
        #[arg(long)]
        rays: PathBuf,
        /// Radius of the clipping ball.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum GeomCmd {
    /// Curvature along the sensed curves.
    Curvature {
        #[arg(long)]
        sig: PathBuf,
        /// Read full-precision sensed coordinates from this cloud.
        #[arg(long)]
        cloud: Option<PathBuf>,
        /// Project the rays onto local quadratic surfaces (needs --cloud and --rays).
        #[arg(long)]
        surface: bool,
        #[arg(long)]
        rays: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        neighbors: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance from every cloud point to the sensed set.
    Coverage {
        #[command(flatten)]
        cloud: CloudIn,
        #[arg(long)]
        sig: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Points ranked by hit count.
    Salient {
        #[arg(long)]
        sig: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coverage of an embedded curve as rays are added.
    CoverageSweep {
        #[arg(long, value_delimiter = ',', default_value = "3,10,50")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        ms: Vec<usize>,
        #[arg(long, default_value_t = 40)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Directory with clouds or signatures and `labels.txt`.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Query cloud, or a signature when the gallery holds signatures.
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value = "w1-hist")]
    pub metric: Metric,
    /// Ray sets averaged per prediction (cloud galleries only).
    #[arg(long, default_value_t = 1)]
    pub lambda: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Experiment {
    HistInvariance,
    CoverageSweep,
    CurvatureSphere,
    OutlierKappa,
    ClassMatrix,
    Classification,
}

#[derive(Debug, Args)]
pub struct ExpArgs {
    #[arg(value_enum)]
    pub name: Experiment,
    /// Flat `field = value` file overriding defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `field=value` overrides, applied after --config.
    #[arg(long = "set")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Cloud(c) => cloud_cmd(c),
        Command::Rays(RaysCmd::Gen {
            method,
            m,
            k,
            dim,
            length,
            tau,
            radius,
            seed,
            out,
        }) => save_rays(&make_rays(&method, m, k, dim, length, tau, radius, seed)?, &out),
        Command::Sig(c) => sig_cmd(c),
        Command::Stats(c) => stats_cmd(c),
        Command::Geom(c) => geom_cmd(c),
        Command::Classify(a) => classify_cmd(a),
        Command::Exp(a) => exp_cmd(a),
        Command::Run { config } => run_pipeline(&config).map(|_| ()),
    }
}

fn read_cloud(input: &CloudIn) -> Result<PointCloud> {
    let format = match CloudFormat::from_path(&input.input) {
        CloudFormat::TextXyz { .. } => CloudFormat::TextXyz { labels: input.labels },
        f => f,
    };
    load_cloud(&input.input, format)
}

fn write_cloud(cloud: &PointCloud, out: &CloudOut) -> Result<()> {
    let format = out.format.unwrap_or_else(|| match CloudFormat::from_path(&out.out) {
        CloudFormat::TextXyz { .. } => CloudFormat::TextXyz {
            labels: cloud.labels().is_some(),
        },
        f => f,
    });
    save_cloud(cloud, &out.out, format)
}

fn cloud_cmd(cmd: CloudCmd) -> Result<()> {
    match cmd {
        CloudCmd::Gen {
            shape,
            n,
            dim,
            seed,
            calibrate: cal,
            radius,
            torus_major,
            torus_minor,
            out,
        } => {
            let params = ShapeParams {
                radius,
                torus_major,
                torus_minor,
                ..ShapeParams::default()
            };
            let cloud = synth_shape(shape, n, dim, &params, seed)?;
            let cloud = if cal { calibrate(&cloud).0 } else { cloud };
            write_cloud(&cloud, &out)
        }
        CloudCmd::Calibrate { input, out, report } => {
            let (cloud, rep) = calibrate(&read_cloud(&input)?);
            write_cloud(&cloud, &out)?;
            match report {
                Some(path) => {
                    let mut prov = Provenance::new("cloud calibrate", None);
                    prov.input(&input.input)?;
                    emit(Some(&path), &prov, &rep)
                }
                None => Ok(()),
            }
        }
        CloudCmd::Embed { input, dim, seed, out } => write_cloud(&embed_rotate(&read_cloud(&input)?, dim, seed)?, &out),
        CloudCmd::Outliers {
            input,
            count,
            mode,
            seed,
            out,
        } => write_cloud(&add_outliers(&read_cloud(&input)?, count, mode, seed).cloud, &out),
    }
}

fn sig_cmd(cmd: SigCmd) -> Result<()> {
    match cmd {
        SigCmd::Build {
            cloud,
            rays,
            kappa,
            features,
            out,
        } => {
            let c = read_cloud(&cloud)?;
            let r = load_rays(&rays)?;
            save_signature(&build_signature(&c, &r, &feature_spec(&features, kappa)?)?, &out)
        }
        SigCmd::Dump { sig, out } => {
            let s = load_signature(&sig)?;
            let mut prov = Provenance::new("sig dump", None);
            prov.input(&sig)?;
            emit(out.as_deref(), &prov, &signature_json(&s))
        }
    }
}

/// Everything in a signature file as plain JSON values.
pub fn signature_json(s: &Signature) -> Value {
    let (m, k, c) = s.shape();
    json!({
        "m": m,
        "k": k,
        "c": c,
        "d": s.dim(),
        "kappa": s.spec().kappa,
        "flags": s.spec().flags(),
        "tensor": s.tensor(),
        "sensed_ids": s.sensed_ids(),
        "provenance": s.provenance(),
    })
}

fn stats_cmd(cmd: StatsCmd) -> Result<()> {
    match cmd {
        StatsCmd::Hist { sig, bins, out } => {
            let s = load_signature(&sig)?;
            let mut prov = Provenance::new("stats hist", None);
            prov.input(&sig)?;
            emit(out.as_deref(), &prov, &coordinate_histograms(&s, bins.bins, bins.range.0, bins.range.1)?)
        }
        StatsCmd::W1 { a, b, metric, bins, out } => {
            let (sa, sb) = (load_signature(&a)?, load_signature(&b)?);
            let d = hist_distance_pair(&sa, &sb, metric.into(), bins.bins, bins.range.0, bins.range.1)?;
            let mut prov = Provenance::new("stats w1", None);
            prov.input(&a)?;
            prov.input(&b)?;
            emit(out.as_deref(), &prov, &json!({ "metric": HistMetric::from(metric), "distance": d }))
        }
        StatsCmd::Matrix {
            gallery,
            metric,
            bins,
            out,
        } => {
            let mut prov = Provenance::new("stats matrix", None);
            let entries = read_gallery(&gallery, &mut prov)?;
            let mut hists = Vec::new();
            let mut labels = Vec::new();
            for e in entries {
                let sig = match e.item {
                    GalleryItem::Signature(s) => s,
                    GalleryItem::Cloud(_) => {
                        return Err(usage(format!("{}: stats matrix needs signature files", e.path.display())))
                    }
                };
                hists.push(coordinate_histograms(&sig, bins.bins, bins.range.0, bins.range.1)?);
                labels.push(e.label);
            }
            emit(out.as_deref(), &prov, &class_distance_matrix(&hists, &labels, metric.into())?)
        }
        StatsCmd::Voronoi {
            cloud,
            rays,
            radius,
            out,
        } => {
            let c = read_cloud(&cloud)?;
            let r = load_rays(&rays)?;
            let mut prov = Provenance::new("stats voronoi", None);
            prov.input(&cloud.input)?;
            prov.input(&rays)?;
            emit(out.as_deref(), &prov, &estimate_voronoi_lengths(&c, &r, radius)?)
        }
    }
}

fn geom_cmd(cmd: GeomCmd) -> Result<()> {
    match cmd {
        GeomCmd::Curvature {
            sig,
            cloud,
            surface,
            rays,
            neighbors,
            out,
        } => {
            let s = load_signature(&sig)?;
            let mut prov = Provenance::new("geom curvature", None);
            prov.input(&sig)?;
            let profile = match (surface, &cloud) {
                (true, Some(cp)) => {
                    let rp = rays.as_ref().ok_or_else(|| usage("--surface needs --rays"))?;
                    prov.input(cp)?;
                    prov.input(rp)?;
                    let c = load_cloud(cp, CloudFormat::from_path(cp))?;
                    surface_curvature_along_rays(&c, &load_rays(rp)?, neighbors)?
                }
                (true, None) => return Err(usage("--surface needs --cloud")),
                (false, Some(cp)) => {
                    prov.input(cp)?;
                    curvature_from_cloud(&load_cloud(cp, CloudFormat::from_path(cp))?, &s)?
                }
                (false, None) => curvature_along_rays(&s)?,
            };
            emit(out.as_deref(), &prov, &json!({ "summary": profile.summary(), "profile": profile }))
        }
        GeomCmd::Coverage { cloud, sig, out } => {
            let c = read_cloud(&cloud)?;
            let s = load_signature(&sig)?;
            let mut prov = Provenance::new("geom coverage", None);
            prov.input(&cloud.input)?;
            prov.input(&sig)?;
            emit(out.as_deref(), &prov, &coverage(&c, &s)?)
        }
        GeomCmd::Salient { sig, top, out } => {
            let s = load_signature(&sig)?;
            let mut prov = Provenance::new("geom salient", None);
            prov.input(&sig)?;
            let ranked: Vec<Value> = salient_points(&s, Top::Count(top))
                .into_iter()
                .map(|(i, c)| json!({ "index": i, "hits": c }))
                .collect();
            emit(out.as_deref(), &prov, &ranked)
        }
        GeomCmd::CoverageSweep {
            dims,
            ms,
            trials,
            seed,
            out,
        } => {
            let cfg = experiments::CoverageSweepConfig {
                seed,
                dims,
                ms,
                trials,
                ..Default::default()
            };
            let report = experiments::coverage_sweep(&cfg)?;
            emit(
                out.as_deref(),
                &Provenance::new("geom coverage-sweep", Some(seed)),
                &json!({ "config": cfg, "report": report }),
            )
        }
    }
}

enum GalleryItem {
    Cloud(PointCloud),
    Signature(Signature),
}

struct GalleryFile {
    path: PathBuf,
    label: i64,
    item: GalleryItem,
}

/// Reads `dir/labels.txt` (`file label` per line, `#` comments) and the
/// files it names.
fn read_gallery(dir: &Path, prov: &mut Provenance) -> Result<Vec<GalleryFile>> {
    let list = dir.join("labels.txt");
    let text = fs::read_to_string(&list).map_err(|e| Error::io(&list, e))?;
    prov.input(&list)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (file, label) = match line.split_whitespace().collect::<Vec<_>>()[..] {
            [f, l] => (f, l),
            _ => return Err(usage(format!("{}:{}: expected `file label`", list.display(), i + 1))),
        };
        let label: i64 = label
            .parse()
            .map_err(|_| usage(format!("{}:{}: label {label:?} is not an integer", list.display(), i + 1)))?;
        let path = dir.join(file);
        let item = if path.extension().is_some_and(|e| e == "rssg") {
            GalleryItem::Signature(load_signature(&path)?)
        } else {
            GalleryItem::Cloud(load_cloud(&path, CloudFormat::from_path(&path))?)
        };
        prov.input(&path)?;
        out.push(GalleryFile { path, label, item });
    }
    if out.is_empty() {
        return Err(usage(format!("{} lists no gallery files", list.display())));
    }
    Ok(out)
}

fn classify_cmd(a: ClassifyArgs) -> Result<()> {
    let mut prov = Provenance::new("classify", Some(a.seed));
    let entries = read_gallery(&a.gallery, &mut prov)?;
    prov.input(&a.query)?;
    let binning = Binning {
        bins: a.bins.bins,
        lo: a.bins.range.0,
        hi: a.bins.range.1,
    };
    let signatures = entries.iter().all(|e| matches!(e.item, GalleryItem::Signature(_)));
    let clouds = entries.iter().all(|e| matches!(e.item, GalleryItem::Cloud(_)));
    let result = if signatures {
        if a.lambda != 1 {
            return Err(usage("--lambda > 1 needs a gallery of clouds"));
        }
        let mut g = SignatureGallery::new(a.metric, binning);
        for e in &entries {
            if let GalleryItem::Signature(s) = &e.item {
                g.add_signature(s, e.label, e.path.display().to_string())?;
            }
        }
        let q = load_signature(&a.query)?;
        let c = nn_classify(&q, &g)?;
        json!({ "label": c.label, "distances": c.ranked, "votes": [c] })
    } else if clouds {
        if a.lambda == 0 {
            return Err(usage("--lambda must be at least 1"));
        }
        let query = load_cloud(&a.query, CloudFormat::from_path(&a.query))?;
        let spec = raysense_core::FeatureSpec::default();
        let mut galleries = Vec::new();
        let mut queries = Vec::new();
        for j in 0..a.lambda {
            let rays = make_rays(
                "r1",
                a.m,
                a.k,
                query.dim(),
                DEFAULT_LENGTH,
                DEFAULT_TAU,
                1.0,
                indexed_seed(named_seed(a.seed, "rays"), j as u64),
            )?;
            let mut g = SignatureGallery::new(a.metric, binning);
            for e in &entries {
                if let GalleryItem::Cloud(c) = &e.item {
                    g.add_signature(&build_signature(c, &rays, &spec)?, e.label, e.path.display().to_string())?;
                }
            }
            queries.push(build_signature(&query, &rays, &spec)?);
            galleries.push(g);
        }
        let e = ensemble_classify(&queries, &galleries)?;
        json!({
            "label": e.label,
            "classes": e.classes,
            "scores": e.scores,
            "distances": e.votes[0].ranked,
            "votes": e.votes,
        })
    } else {
        return Err(usage("gallery mixes clouds and signatures"));
    };
    emit(a.out.as_deref(), &prov, &result)
}

fn exp_cmd(a: ExpArgs) -> Result<()> {
    let mut fields = Map::new();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Config::parse(&text)?;
        fields.extend(cfg.fields());
    }
    for s in &a.set {
        let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("--set {s:?}: expected field=value")))?;
        fields.insert(k.trim().to_owned(), crate::pipeline::parse_value(v.trim()));
    }
    if let Some(seed) = a.seed {
        match a.name {
            Experiment::Classification => {
                fields.insert("seeds".into(), json!((0..5).map(|i| indexed_seed(seed, i)).collect::<Vec<_>>()));
            }
            _ => {
                fields.insert("seed".into(), json!(seed));
            }
        }
    }
    fn parse<T: serde::de::DeserializeOwned>(fields: Map<String, Value>) -> Result<T> {
        serde_json::from_value(Value::Object(fields)).map_err(|e| usage(format!("experiment config: {e}")))
    }
    let name = a.name.to_possible_value().expect("no skipped variants").get_name().to_owned();
    let value = match a.name {
        Experiment::HistInvariance => {
            let cfg: experiments::HistInvarianceConfig = parse(fields)?;
            json!({ "config": cfg, "report": experiments::hist_invariance(&cfg)? })
        }
        Experiment::CoverageSweep => {
            let cfg: experiments::CoverageSweepConfig = parse(fields)?;
            json!({ "config": cfg, "report": experiments::coverage_sweep(&cfg)? })
        }
        Experiment::CurvatureSphere => {
            let cfg: experiments::CurvatureSphereConfig = parse(fields)?;
            json!({ "config": cfg, "report": experiments::curvature_sphere(&cfg)? })
        }
        Experiment::OutlierKappa => {
            let cfg: experiments::OutlierKappaConfig = parse(fields)?;
            json!({ "config": cfg, "report": experiments::outlier_kappa(&cfg)? })
        }
        Experiment::ClassMatrix => {
            let cfg: experiments::ClassMatrixConfig = parse(fields)?;
            json!({ "config": cfg, "report": experiments::class_matrix(&cfg)? })
        }
        Experiment::Classification => {
            let cfg: experiments::ClassificationConfig = parse(fields)?;
            json!({ "config": cfg, "report": experiments::classification(&cfg)? })
        }
    };
    let mut prov = Provenance::new(format!("exp {name}"), a.seed);
    if let Some(path) = &a.config {
        prov.input(path)?;
    }
    emit(a.out.as_deref(), &prov, &value)
}
