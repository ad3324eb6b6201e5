use std::path::Path;
use std::process::{Command, Output};

fn gasbary(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gasbary"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn report(dir: &Path, prefix: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{prefix}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn centroid(v: &serde_json::Value) -> (f64, f64) {
    let c = &v["centroid"];
    (c[0].as_f64().unwrap(), c[1].as_f64().unwrap())
}

#[test]
fn synth_writes_frames_with_wind() {
    let dir = tempfile::tempdir().unwrap();
    let o = gasbary(
        dir.path(),
        &[
            "synth", "drift", "--n", "12", "--frames", "3", "--dir", "east", "--wind", "1,0",
            "--out", "f",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        let meta =
            std::fs::read_to_string(dir.path().join(format!("f/frame_{k}.meta.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&meta).unwrap();
        assert_eq!(v["wind_uv"], serde_json::json!([1.0, 0.0]));
    }
}

#[test]
fn synth_rejects_radius_outside_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = gasbary(
        dir.path(),
        &[
            "synth", "rotate", "--radius", "20", "--n", "32", "--out", "f",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("radius"));
}

#[test]
fn rotate_barycenter_sits_at_the_center() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&gasbary(
            d,
            &["synth", "rotate", "--n", "16", "--frames", "4", "--radius", "3", "--out", "f"]
        )),
        0
    );
    let o = gasbary(
        d,
        &[
            "barycenter",
            "f/*.grid",
            "--cost",
            "l2",
            "--lambda",
            "0.3",
            "--lambda-u",
            "100",
            "--out",
            "out/bary",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (r, c) = centroid(&report(d, "out/bary"));
    assert!(
        (r - 8.5).abs() <= 1.0 && (c - 8.5).abs() <= 1.0,
        "({r}, {c})"
    );
    assert!(d.join("out/bary.grid").exists() && d.join("out/bary.ppm").exists());
}

#[test]
fn east_wind_moves_the_barycenter_west() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&gasbary(
            d,
            &["synth", "drift", "--n", "14", "--frames", "4", "--wind", "1,0", "--out", "f"]
        )),
        0
    );
    for cost in ["l2", "l2w"] {
        let o = gasbary(
            d,
            &[
                "barycenter",
                "f/*.grid",
                "--cost",
                cost,
                "--lambda",
                "0.5",
                "--lambda-u",
                "50",
                "--out",
                cost,
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let plain = report(d, "l2");
    let windy = report(d, "l2w");
    assert!(centroid(&windy).1 < centroid(&plain).1);
    assert_eq!(windy["images"][0]["wind_px"], serde_json::json!([1.0, 0.0]));
    let trace = plain["objective_trace"].as_array().unwrap();
    assert!(!trace.is_empty());
}

#[test]
fn two_point_masses_meet_in_the_middle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.grid"), "XCH4-GRID v1 3\n1,0,0\n0,0,0\n0,0,0\n").unwrap();
    std::fs::write(d.join("b.grid"), "XCH4-GRID v1 3\n0,0,1\n0,0,0\n0,0,0\n").unwrap();
    let o = gasbary(
        d,
        &[
            "barycenter",
            "a.grid",
            "b.grid",
            "--lambda",
            "0.2",
            "--lambda-u",
            "100",
            "--out",
            "mid",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.join("mid.grid")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .flat_map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().unwrap())
                .collect::<Vec<_>>()
        })
        .collect();
    let argmax = (0..9)
        .max_by(|&i, &j| values[i].total_cmp(&values[j]))
        .unwrap();
    assert_eq!(argmax, 1);
}

#[test]
fn exit_codes_for_non_convergence_and_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&gasbary(
            d,
            &["synth", "rotate", "--n", "10", "--frames", "3", "--radius", "2", "--out", "f"]
        )),
        0
    );
    let o = gasbary(
        d,
        &[
            "barycenter",
            "f/*.grid",
            "--lambda",
            "0.05",
            "--iters",
            "2",
            "--out",
            "nc",
        ],
    );
    assert_eq!(code(&o), 3);
    assert!(d.join("nc.grid").exists() && d.join("nc.json").exists());
    assert_eq!(report(d, "nc")["converged"], serde_json::json!(false));

    let o = gasbary(
        d,
        &[
            "barycenter",
            "f/*.grid",
            "--cost",
            "wfr",
            "--budget-gib",
            "1e-6",
            "--out",
            "cap",
        ],
    );
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("coarser grid"));

    let o = gasbary(d, &["barycenter", "f/frame_0.grid", "--out", "one"]);
    assert_eq!(code(&o), 2);
    let o = gasbary(
        d,
        &["barycenter", "f/*.grid", "--lambda=-1", "--out", "neg"],
    );
    assert_eq!(code(&o), 2);
    let o = gasbary(
        d,
        &["barycenter", "f/*.grid", "--cost", "l2w", "--out", "nowind"],
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("wind"));
}

#[test]
fn windrose_coverage_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("wind.csv"),
        "timestamp,u,v\n2019-01-01T00:00:00Z,3,0\n2019-01-01T01:00:00Z,0,-5\n2019-01-01T02:00:00Z,0.1,0\n",
    )
    .unwrap();
    assert_eq!(
        code(&gasbary(d, &["windrose", "wind.csv", "--out", "rose"])),
        0
    );
    let csv = std::fs::read_to_string(d.join("rose.csv")).unwrap();
    let freq: f64 = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((freq - 1.0).abs() < 1e-12);
    assert!(d.join("rose.ppm").exists());

    std::fs::write(d.join("a.grid"), "XCH4-GRID v1 2\n1,NaN\n2,3\n").unwrap();
    std::fs::write(d.join("b.grid"), "XCH4-GRID v1 2\nNaN,NaN\n2,3\n").unwrap();
    assert_eq!(
        code(&gasbary(d, &["coverage", "*.grid", "--out", "cov"])),
        0
    );
    assert_eq!(
        std::fs::read_to_string(d.join("cov.csv")).unwrap(),
        "1,0\n2,2\n"
    );
    assert_eq!(
        code(&gasbary(
            d,
            &["coverage", "*.grid", "--clip", "1", "--out", "clip"]
        )),
        0
    );
    assert_eq!(
        std::fs::read_to_string(d.join("clip.csv")).unwrap(),
        "1,0\n1,1\n"
    );

    assert_eq!(
        code(&gasbary(d, &["mean", "a.grid", "b.grid", "--out", "mean"])),
        0
    );
    assert_eq!(
        std::fs::read_to_string(d.join("mean.grid")).unwrap(),
        "XCH4-GRID v1 2\n1.0,NaN\n2.0,3.0\n"
    );

    assert_eq!(
        code(&gasbary(
            d,
            &["render", "a.grid", "--out", "r1.ppm", "--scale", "2"]
        )),
        0
    );
    assert_eq!(
        code(&gasbary(
            d,
            &["render", "a.grid", "--out", "r2.ppm", "--scale", "2"]
        )),
        0
    );
    let r1 = std::fs::read(d.join("r1.ppm")).unwrap();
    assert_eq!(r1, std::fs::read(d.join("r2.ppm")).unwrap());
    assert!(r1.starts_with(b"P6\n4 4\n255\n"));
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = gasbary(dir.path(), &["mean", "nothing/*.grid", "--out", "m"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no input matches"));
}
