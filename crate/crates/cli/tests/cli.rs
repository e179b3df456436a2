use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prodnet::synth::PlantedInstance;

fn prodnet(cmd: &str, config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prodnet"))
        .arg(cmd)
        .arg(config)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(out: Output) {
    assert!(out.status.success(), "{}", stderr(&out));
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn synth_config(seed: u64, out: &str, sigma: f64) -> String {
    format!(
        "seed = {seed}\n[synth]\nnodes = 40\nsectors = 2\ndensity_in = 0.2\ndensity_out = 0.03\nt = 1000\nsigma_common = {sigma}\n[output]\ndirectory = {out}\n"
    )
}

/// Runs `synth` and `clean` inside `dir`.
fn prepared(dir: &Path) {
    ok(prodnet("synth", &write(dir, "synth.ini", &synth_config(5, "inst", 0.5))));
    ok(prodnet(
        "clean",
        &write(dir, "clean.ini", "seed = 5\n[data]\npanel = inst/panel.csv\n[output]\ndirectory = clean\n"),
    ));
}

const RECONSTRUCT: &str = "seed = 5
[data]
cleaned = clean/cleaned.csv
partition = inst/partition.csv
truth = inst/edges.csv
[plan]
densities = inst/densities.csv
spectra_samples = 50
[solver]
beta = 4
max_iter = 300
[benchmark]
n_draws = 20
[output]
directory = rec
";

const NETCORR: &str = "seed = 5
[data]
growth = clean/growth.csv
cleaned = clean/cleaned.csv
edges = inst/edges.csv
partition = inst/partition.csv
[benchmark]
n_draws = 10
[output]
directory = netcorr
";

#[test]
fn planted_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    let spectrum: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("clean/spectrum.json")).unwrap()).unwrap();
    assert_eq!(spectrum["top_inside_bulk"], false);

    ok(prodnet("netcorr", &write(dir, "netcorr.ini", NETCORR)));
    let decay = fs::read_to_string(dir.join("netcorr/decay.csv")).unwrap();
    let cleaned: Vec<f64> = decay
        .lines()
        .filter(|l| l.starts_with("cleaned,0,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(cleaned.len(), 3);
    assert!(cleaned[0] > cleaned[1], "{cleaned:?}");
    // only the default lag 0 is reported
    let table = fs::read_to_string(dir.join("netcorr/network_corr.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.split(',').nth(1) == Some("0")));
    assert!(table.contains(",config,"));

    ok(prodnet("reconstruct", &write(dir, "rec.ini", RECONSTRUCT)));
    let cmp = fs::read_to_string(dir.join("rec/comparison.csv")).unwrap();
    assert_eq!(cmp.lines().count(), 1 + 3 * 3);
    for method in ["reconstruction", "er", "sbm"] {
        for metric in ["tpr", "accuracy", "f1"] {
            assert!(cmp.contains(&format!("{method},{metric},")), "{method} {metric}");
        }
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("rec/reconstruction.json")).unwrap()).unwrap();
    assert_eq!(report["blocks"].as_array().unwrap().len(), 3);
    assert!(report.get("wall_time_seconds").is_none());

    let eval = "seed = 5\n[data]\ntruth = inst/edges.csv\npredicted = rec/network.csv\npartition = inst/partition.csv\n[benchmark]\nn_draws = 20\n[output]\ndirectory = eval\n";
    ok(prodnet("eval", &write(dir, "eval.ini", eval)));
    let a: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("eval/comparison.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("rec/comparison.json")).unwrap()).unwrap();
    assert_eq!(a["predicted"], b["predicted"]);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    ok(prodnet("netcorr", &write(dir, "netcorr.ini", NETCORR)));
    ok(prodnet("reconstruct", &write(dir, "rec.ini", RECONSTRUCT)));
    let first: Vec<_> = ["inst", "clean", "netcorr", "rec"].iter().map(|d| files(&dir.join(d))).collect();
    for d in ["inst", "clean", "netcorr", "rec"] {
        fs::remove_dir_all(dir.join(d)).unwrap();
    }
    prepared(dir);
    ok(prodnet("netcorr", &dir.join("netcorr.ini")));
    ok(prodnet("reconstruct", &dir.join("rec.ini")));
    let second: Vec<_> = ["inst", "clean", "netcorr", "rec"].iter().map(|d| files(&dir.join(d))).collect();
    assert_eq!(first, second);
}

#[test]
fn synth_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(prodnet("synth", &write(dir, "a.ini", &synth_config(1, "a", 0.0))));
    ok(prodnet("synth", &write(dir, "b.ini", &synth_config(2, "b", 0.0))));
    assert_ne!(fs::read(dir.join("a/edges.csv")).unwrap(), fs::read(dir.join("b/edges.csv")).unwrap());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("a/synth.json")).unwrap()).unwrap();
    assert_eq!(manifest["common_mode"], false);

    let inst = PlantedInstance::load(&dir.join("a")).unwrap();
    assert!(!inst.params.has_common_mode());
    inst.write(&dir.join("copy")).unwrap();
    assert_eq!(PlantedInstance::load(&dir.join("copy")).unwrap(), inst);

    let factor = "seed = 1\n[synth]\nkind = factor\nnodes = 20\nt = 50\nsigma = 1\nmode = sine\nperiod = 25\n[output]\ndirectory = f\n";
    ok(prodnet("synth", &write(dir, "f.ini", factor)));
    assert_eq!(fs::read_to_string(dir.join("f/mode.csv")).unwrap().lines().count(), 51);
}

#[test]
fn short_series_is_a_data_error_naming_the_firm() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut panel = String::from("firm_id,quarter,value\n");
    for f in ["a", "b", "c"] {
        for q in 0..12 {
            panel.push_str(&format!("{f},{q},{}\n", ((q * 7 + f.len() * 3 + f.as_bytes()[0] as usize) % 11) as f64 / 10.0));
        }
    }
    panel.push_str("short,0,0.1\nshort,1,0.2\n");
    write(dir, "panel.csv", &panel);
    let out = prodnet(
        "clean",
        &write(dir, "c.ini", "seed = 1\n[data]\npanel = panel.csv\n[clean]\nbenchmark = mp\n[output]\ndirectory = out\n"),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("short"), "{}", stderr(&out));
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);

    let no_plan = RECONSTRUCT.replace("[plan]\ndensities = inst/densities.csv\nspectra_samples = 50\n", "");
    let out = prodnet("reconstruct", &write(dir, "r.ini", &no_plan));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("[plan]"), "{}", stderr(&out));

    write(dir, "empty.csv", "src,dst\n");
    let out = prodnet("netcorr", &write(dir, "n.ini", &NETCORR.replace("inst/edges.csv", "empty.csv")));
    assert_eq!(out.status.code(), Some(2));

    let out = prodnet("netcorr", &write(dir, "m.ini", &NETCORR.replace("inst/edges.csv", "missing.csv")));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.csv"));

    let out = prodnet("synth", &write(dir, "s.ini", "[synth]\nnodes = 4\n"));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"));
}

#[test]
fn unreachable_sector_goal_gives_partial_result() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    // at beta = 1 the unpenalised b0 solve is already sparser than its goal
    write(dir, "dense.csv", "block_a,block_b,density\nb0,b0,0.1\nb1,b1,0.6\nb0,b1,0.03\n");
    let cfg = RECONSTRUCT
        .replace("inst/densities.csv", "dense.csv")
        .replace("beta = 4", "beta = 1");
    let out = prodnet("reconstruct", &write(dir, "p.ini", &cfg));
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("rec/reconstruction.json")).unwrap()).unwrap();
    let failures = report["failures"].as_array().unwrap();
    assert!(failures.iter().any(|f| f.as_str().unwrap().starts_with("b0")), "{failures:?}");
    let blocks: Vec<&str> = report["blocks"].as_array().unwrap().iter().map(|b| b["block"].as_str().unwrap()).collect();
    assert_eq!(blocks, ["b1"]);
    assert!(fs::read_to_string(dir.join("rec/network.csv")).unwrap().lines().count() > 1);
}
