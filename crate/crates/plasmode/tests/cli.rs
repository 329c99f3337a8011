use std::path::Path;
use std::process::Command;

fn plasmode(config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_plasmode"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .output()
        .expect("spawn plasmode")
}

fn rows(csv: &str) -> Vec<(String, f64, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"scenario": "table2", "shape": "ellipse", "n_nodse": 128}"#).unwrap();
    let out = plasmode(&cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_nodes"), "{err}");
    assert!(!dir.path().join("out").join("table2.csv").exists());
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("broken.json");
    std::fs::write(&cfg, "{\n  \"scenario\": \"table2\",\n  \"shape\": \n}").unwrap();
    let out = plasmode(&cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn table2_matches_golden_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t2.json");
    std::fs::write(&cfg, r#"{"scenario": "table2", "shape": "ellipse"}"#).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = plasmode(&cfg, out);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let first = std::fs::read(a.join("table2.csv")).unwrap();
    assert_eq!(first, std::fs::read(b.join("table2.csv")).unwrap());
    assert!(a.join("manifest.json").exists());

    let golden = rows(include_str!("golden/table2.csv"));
    let got = rows(&String::from_utf8(first).unwrap());
    assert_eq!(golden.len(), got.len());
    for (g, x) in golden.iter().zip(&got) {
        assert_eq!(g.0, x.0);
        assert!(((g.1 - x.1) / g.1).abs() < 1e-9, "{g:?} vs {x:?}");
        assert!((g.2 - x.2).abs() <= 1e-6, "{g:?} vs {x:?}");
    }
}
