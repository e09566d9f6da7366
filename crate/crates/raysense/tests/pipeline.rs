use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use raysense::pipeline::{run_config, run_pipeline, Config};
use raysense::Error;

const CONFIG: &str = "\
# every regular stage plus one small experiment
out_dir = out
seed = 21
stages = cloud, rays, signature, histograms, voronoi, coverage, curvature, salient, outlier-kappa
cloud.shape = torus
cloud.n = 1500
cloud.noise = 0.001
rays.m = 40
rays.k = 12
signature.kappa = 2
signature.features = cp,disp,dist
histograms.bins = 30
outlier-kappa.repeats = 2
outlier-kappa.points = 400
";

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn two_runs_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        fs::write(d.path().join("run.cfg"), CONFIG).unwrap();
        let manifest = run_pipeline(&d.path().join("run.cfg")).unwrap();
        assert_eq!(manifest.artifacts.len(), 9);
    }
    let (fa, fb) = (files(&a.path().join("out")), files(&b.path().join("out")));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    assert!(fa.contains_key("manifest.json") && fa.contains_key("signature.rssg"));
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{name} differs");
    }
}

#[test]
fn the_seed_changes_the_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let other = CONFIG.replace("seed = 21", "seed = 22");
    run_config(&Config::parse(CONFIG).unwrap(), a.path(), CONFIG).unwrap();
    run_config(&Config::parse(&other).unwrap(), b.path(), &other).unwrap();
    assert_ne!(fs::read(a.path().join("out/rays.rsry")).unwrap(), fs::read(b.path().join("out/rays.rsry")).unwrap());
}

#[test]
fn config_problems_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "",
        "out_dir = x\n",
        "stages = cloud\n",
        "out_dir = x\nstages = cloud\ncloud.n = 3\ncloud.n = 4\n",
        "out_dir = x\nstages = teleport\n",
        "out_dir = x\nstages = cloud\ncloud.colour = red\n",
        "out_dir = x\nstages = cloud\nbogus.key = 1\n",
        "out_dir = x\nstages = signature\n",
        "out_dir = x\nstages = cloud\nseed = -1\n",
        "just words\n",
    ];
    for text in cases {
        let err = Config::parse(text).and_then(|c| run_config(&c, dir.path(), text)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)), "{text:?}: {err:?}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn cloud_stage_reads_a_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pts.xyz"), "0 0 0\n1 0 0\n0 1 0\n0 0 1\n0.5 0.5 0.5\n").unwrap();
    let text = "out_dir = o\nstages = cloud, rays, signature\ncloud.input = pts.xyz\nrays.m = 4\nrays.k = 3\n";
    fs::write(dir.path().join("c.cfg"), text).unwrap();
    let manifest = run_pipeline(&dir.path().join("c.cfg")).unwrap();
    assert!(manifest.provenance.inputs.keys().any(|k| k.ends_with("pts.xyz")));
    let sig = raysense::io::load_signature(&dir.path().join("o/signature.rssg")).unwrap();
    assert_eq!(sig.provenance().cloud_len, 5);
}
