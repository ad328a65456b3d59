use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smartpacket"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn fixtures_list_names_all() {
    let o = cli(&["fixtures", "list"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o).lines().collect::<Vec<_>>(),
        ["fig1a", "fig1b", "fig2", "fig3"]
    );
}

#[test]
fn decompose_fixture_text_and_json() {
    let o = cli(&["decompose", "fig3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("region ")).count(), 8);
    assert!(text.contains("region 4 switches=40,41 nodes=42"));

    let o = cli(&["decompose", "fig2", "--all-regions", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.is_object());
}

#[test]
fn decompose_unknown_selection_fails() {
    let o = cli(&["decompose", "fig3", "--select", "999"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn inspect_golden_header() {
    let o = cli(&["inspect-header", "fixtures/golden_minimal.hex"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["region_stack"]["entries"], serde_json::json!([8]));
    assert_eq!(v["ids"]["sender_nid"], 3);
}

#[test]
fn inspect_garbage_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.hex");
    fs::write(&bad, "zz\n").unwrap();
    assert_eq!(
        cli(&["inspect-header", bad.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    let short = dir.path().join("short.hex");
    fs::write(&short, "01\n").unwrap();
    assert_eq!(
        cli(&["inspect-header", short.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let p = dir.join("s.scn");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_each_format() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(
        dir.path(),
        "topology fig3\nseed 3\nduration 100\nsend from 11 to 81 count 5 at 0 fid 1\n",
    );
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    for (format, file) in [
        ("json", "report.json"),
        ("csv", "flows.csv"),
        ("text", "summary.txt"),
    ] {
        let o = cli(&["run", &scn, "--out", out_s, "--format", format]);
        assert!(
            o.status.success(),
            "{format}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(out.join(file).is_file(), "{file}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["totals"]["delivered"], 5);
    let csv = fs::read_to_string(out.join("flows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn run_bad_script_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(
        dir.path(),
        "topology fig3\nseed 1\nduration 10\nfrobnicate 3\n",
    );
    let o = cli(&["run", &scn, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains('4'));
}

#[test]
fn same_scenario_same_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write_scenario(
        dir.path(),
        "topology fig3\nseed 11\nduration 200\nlink-loss 0.1\nsend from 11 to 81 count 50 every 1 at 0\n",
    );
    let read = |sub: &str| {
        let out = dir.path().join(sub);
        assert!(cli(&["run", &scn, "--out", out.to_str().unwrap()])
            .status
            .success());
        fs::read(out.join("report.json")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}
