//! End-to-end runs of the `helia` binary, compared against golden files.
//! Set `HELIA_UPDATE_GOLDEN=1` to rewrite them.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn helia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_helia"))
        .args(args)
        .current_dir(root())
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("helia-smoke-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn golden(name: &str, actual: &[u8]) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("HELIA_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let want = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        want == actual,
        "{name} differs from golden file:\n{}",
        String::from_utf8_lossy(actual)
    );
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn vectors() {
    let o = helia(&["vectors"]);
    ok(&o);
    golden("vectors.txt", &o.stdout);
}

#[test]
fn topo_gen() {
    let o = helia(&["topo", "gen", "--n", "30", "--m", "2", "--seed", "1"]);
    let out = ok(&o);
    assert_eq!(out.lines().count(), 1 + 2 * 28);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed=1"));
    golden("topo_gen.csv", &o.stdout);

    let dir = scratch("topo");
    let file = dir.join("edges.csv");
    let o = helia(&["topo", "gen", "--n", "30", "--m", "2", "--seed", "1", "--out", file.to_str().unwrap()]);
    assert!(ok(&o).is_empty());
    golden("topo_gen.csv", &std::fs::read(&file).unwrap());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sim_reservations() {
    let o = helia(&["sim", "reservations", "--n", "20", "--r", "0.2", "--strategy", "concurrent", "--seed", "2"]);
    ok(&o);
    golden("sim_reservations.csv", &o.stdout);
}

#[test]
fn sim_cover() {
    let o = helia(&["sim", "cover", "--n", "500", "--r", "0.1", "--strategy", "max", "--gamma", "100kbps"]);
    let out = ok(&o);
    assert_eq!(out.lines().count(), 2);
    golden("sim_cover.csv", &o.stdout);

    let grid = [
        "sim", "cover", "--n", "100,200", "--r", "0.1,1.0", "--strategy", "max,concurrent", "--seed", "0,1",
        "--gamma", "20Mbps",
    ];
    let a = helia(&grid);
    ok(&a);
    golden("sim_cover_grid.csv", &a.stdout);
    let mut single = vec!["--jobs", "1"];
    single.extend_from_slice(&grid);
    assert_eq!(helia(&single).stdout, a.stdout);
}

#[test]
fn sim_plot() {
    let dir = scratch("plot");
    let o = helia(&[
        "sim", "plot", "--n", "60,120", "--r", "0.1,1.0", "--strategy", "max,concurrent", "--seed", "0,1",
        "--out-dir", dir.to_str().unwrap(),
    ]);
    ok(&o);
    golden("sim_plot.csv", &o.stdout);
    for f in ["cover_vs_gamma.svg", "cover_vs_n.svg"] {
        let svg = std::fs::read_to_string(dir.join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"), "{f}");
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn scenario_run_is_deterministic() {
    let dir = scratch("scenario");
    let logs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let log = dir.join(format!("run{i}.log"));
            let o = helia(&["scenario", "run", "attacks/flood.cfg", "--seed", "7", "--log", log.to_str().unwrap()]);
            ok(&o);
            assert!(String::from_utf8_lossy(&o.stderr).contains("seed=7"));
            golden("scenario_flood.csv", &o.stdout);
            std::fs::read(log).unwrap()
        })
        .collect();
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn failed_requirement_exits_1() {
    let dir = scratch("failing");
    let cfg = dir.join("nospoof.cfg");
    std::fs::write(
        &cfg,
        "name = \"nospoof\"\nduration = \"3s\"\nassert = [\"R3\"]\n\n[[flows]]\nname = \"honest\"\n",
    )
    .unwrap();
    let o = helia(&["scenario", "run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("R3,fail,scenario has no spoofer"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_errors_exit_2() {
    let dir = scratch("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "name = \"bad\"\nunknown_key = 1\n").unwrap();
    let o = helia(&["scenario", "run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(helia(&["sim", "cover", "--gamma", "fast"]).status.code(), Some(2));
    assert_eq!(helia(&["nonsense"]).status.code(), Some(2));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bench_validate_reports_throughput() {
    let o = helia(&["bench", "validate", "--packets", "2e3"]);
    let out = ok(&o);
    let lines: Vec<&str> = out.lines().collect();
    // Timings vary; only the layout is golden.
    let layout: Vec<String> = lines
        .iter()
        .map(|l| l.splitn(3, ',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    golden("bench_validate.txt", (layout.join("\n") + "\n").as_bytes());
    for l in &lines[1..] {
        let rate: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(rate > 0.0);
    }
}
