use std::path::PathBuf;
use std::process::{Command, Output};

use cnet::equilibrium::{verify_nash, SolveOptions};
use cnet::io::{parse_allocation, parse_game, parse_theta};
use serde_json::Value;

fn spec(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "core", "examples", "specs", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn cnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("JSON on stderr")
}

fn temp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cnet-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn solve_two_node_sw() {
    let v = stdout_json(&cnet(&["solve", "--game", &spec("two_node.json"), "--theta", "sw"]));
    let q: Vec<f64> = serde_json::from_value(v["allocation"]["q"].clone()).unwrap();
    assert!((q[0] - 0.1875).abs() < 1e-8 && (q[1] - 0.4375).abs() < 1e-8, "{q:?}");
    assert_eq!(v["verified"], Value::Bool(true));
}

#[test]
fn solve_output_is_byte_identical() {
    let args = ["solve", "--game", &spec("three_market_box.json"), "--theta", "0.3,0.3,0.4"];
    let a = cnet(&args);
    let b = cnet(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn emitted_allocation_re_verifies() {
    for (game, theta) in [("two_node.json", "sw"), ("three_market_box.json", "0.2,0.5,0.3")] {
        let v = stdout_json(&cnet(&["solve", "--game", &spec(game), "--theta", theta]));
        let alloc = parse_allocation(&v["allocation"].to_string()).unwrap();
        let g = parse_game(&std::fs::read_to_string(spec(game)).unwrap()).unwrap();
        let check = verify_nash(&g, &alloc, &parse_theta(theta).unwrap(), &SolveOptions::default()).unwrap();
        assert!(check.is_nash, "{game}: {check:?}");
    }
}

#[test]
fn classify_consumer_corner_has_no_guarantees() {
    let v = stdout_json(&cnet(&["classify", "--game", &spec("two_node.json"), "--theta", "1,0,0"]));
    for flag in [
        "is_potential_game",
        "mm_payoff_concave_in_r",
        "existence_guaranteed",
        "unique_via_potential",
        "equilibria_equal_optimizers",
    ] {
        assert_eq!(v[flag], Value::Bool(false), "{flag}");
    }
}

#[test]
fn malformed_game_exits_2_with_position() {
    let path = temp("bad.json");
    std::fs::write(&path, "{\n  \"markets\": [1,\n}").unwrap();
    let out = cnet(&["solve", "--game", path.to_str().unwrap(), "--theta", "sw"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["kind"], "parse");
    assert!(e["error"]["line"].as_u64().unwrap() >= 2);
    assert!(e["error"]["column"].as_u64().is_some());
}

#[test]
fn missing_option_exits_2() {
    let out = cnet(&["solve", "--game", &spec("two_node.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");
}

#[test]
fn uncovered_theta_exits_3() {
    let out = cnet(&["solve", "--game", &spec("two_node.json"), "--theta", "cs"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "region_not_covered");
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn region_map_nesting() {
    let out = cnet(&["region-map", "--game", &spec("two_node.json"), "--resolution", "100"]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 101 * 102 / 2);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (pot, conc, exist, uniq, equal) = (
        col("is_potential_game"),
        col("mm_payoff_concave_in_r"),
        col("existence_guaranteed"),
        col("unique_via_potential"),
        col("equilibria_equal_optimizers"),
    );
    let mut counts = [0usize; 3];
    for row in &rows {
        let f = |c: usize| row[c] == "1";
        assert!(!f(uniq) || f(equal), "{row:?}");
        assert!(!f(equal) || f(pot), "{row:?}");
        // compact transport: existence exactly where a potential or concavity argument applies
        assert_eq!(f(exist), f(pot) || f(conc), "{row:?}");
        counts[0] += usize::from(f(uniq));
        counts[1] += usize::from(f(pot) && !f(uniq));
        counts[2] += usize::from(!f(exist));
    }
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
}

#[test]
fn compare_csv_and_json_agree() {
    let args = ["compare", "--instance", &spec("homogeneous.json"), "--theta", "sw"];
    let v = stdout_json(&cnet(&args));
    let out = cnet(&[&args[..], &["--format", "csv"]].concat());
    let (header, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    let i = header.iter().position(|h| h == "networked").unwrap();
    let x: f64 = rows[0][i].parse().unwrap();
    assert_eq!(x, v["networked"].as_f64().unwrap());
}

#[test]
fn two_node_and_sweep() {
    let v = stdout_json(&cnet(&["two-node", "--params", &spec("two_node_params.json"), "--theta", "sw"]));
    assert_eq!(v["r_set"]["kind"], "singleton");
    assert!((v["r_set"]["r"].as_f64().unwrap() - 0.125).abs() < 1e-12);
    let out = cnet(&["two-node-sweep", "--params", &spec("two_node_params.json"), "--resolution", "20"]);
    assert!(out.status.success());
    let (header, rows) = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(header[3], "regime");
    assert_eq!(rows.len(), 21 * 22 / 2);
    assert!(rows.iter().any(|r| r[5] == "inf"));
}

#[test]
fn dynamics_reports_cycle() {
    let path = temp("osc.json");
    std::fs::write(
        &path,
        r#"{"markets":[{"alpha":1,"beta":1},{"alpha":1,"beta":1}],
            "firms":[{"market":0,"c_lin":0.3,"c_quad":0},{"market":1,"c_lin":0.3,"c_quad":0}],
            "transport":{"kind":"polytope","A":[[1,0],[-1,0],[0,1],[0,-1]],"b":[0.25,0.25,0.25,0.25]}}"#,
    )
    .unwrap();
    let init = temp("init.json");
    std::fs::write(&init, r#"{"q":[0.225,0.475],"r":[0.25,-0.25]}"#).unwrap();
    let out = cnet(&[
        "dynamics",
        "--game",
        path.to_str().unwrap(),
        "--theta",
        "0.5,0,0.25",
        "--init",
        init.to_str().unwrap(),
        "--max-rounds",
        "20",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# verdict=cycle"), "{text}");
    let (header, _) = csv_rows(&text);
    assert_eq!(header, ["round", "phase", "q0", "q1", "r0", "r1", "potential"]);
}

#[test]
fn design_mpec_and_sos_bound() {
    let sweep = temp("sweep.csv");
    let v = stdout_json(&cnet(&[
        "design",
        "--game",
        &spec("two_node.json"),
        "--resolution",
        "40",
        "--sweep",
        sweep.to_str().unwrap(),
    ]));
    let g = v["g_value"].as_f64().unwrap();
    let (_, rows) = csv_rows(&std::fs::read_to_string(&sweep).unwrap());
    assert_eq!(rows.len(), v["feasible_points"].as_u64().unwrap() as usize);

    let program = temp("pp.json");
    let out = cnet(&["mpec-dump", "--game", &spec("two_node.json"), "--output", program.to_str().unwrap()]);
    assert!(out.status.success());
    let triplets = temp("sdp.txt");
    let cert = stdout_json(&cnet(&[
        "sos-bound",
        "--program",
        program.to_str().unwrap(),
        "--dump-sdp",
        triplets.to_str().unwrap(),
    ]));
    let v1 = cert["v_d"].as_f64().unwrap();
    assert!(v1 >= g - 1e-5 && v1 < 0.345, "{v1} vs {g}");
    assert!(cert["residual"].as_f64().unwrap() <= 1e-6);
    let dump = std::fs::read_to_string(&triplets).unwrap();
    let entries: Vec<&str> = dump.lines().skip(1).take_while(|l| !l.starts_with('#')).collect();
    assert!(!entries.is_empty());
    assert!(entries.iter().all(|l| l.split_whitespace().count() == 5));
}
