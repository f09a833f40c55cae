use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evoeq"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("summary.txt"))
        .expect("summary written")
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').expect("key=value");
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn get(s: &[(String, String)], key: &str) -> String {
    s.iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("summary has no {key}: {s:?}"))
        .1
        .clone()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).expect("csv exists");
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn scalar_config(dir: &Path, m0: f64, m1: f64, n: usize, extra: &str) -> PathBuf {
    let p = dir.join("scalar.toml");
    fs::write(
        &p,
        format!(
            r#"schema_version = 1
[grid]
t_min = 0.0
t_max = 8.0
n = {n}
[weight]
rho = 1.0
[problem]
model = "general"
[problem.m0]
family = "constant"
matrix = [[{m0:?}]]
[problem.m1]
family = "constant"
matrix = [[{m1:?}]]
[problem.forcing]
kind = "bump"
start = 0.5
end = 3.0
amplitude = [1.0]
{extra}"#
        ),
    )
    .unwrap();
    p
}

#[test]
fn scalar_integration_reproduces_the_ramp() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["solve"], &configs().join("scalar_integration.toml"), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&tmp.path().join("solution.csv"));
    assert_eq!(header, ["t", "v0"]);
    assert_eq!(rows.len(), 301);
    for r in rows {
        let (t, u): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!((u - t.max(0.0)).abs() <= 1e-12, "u({t}) = {u}");
        // 17 significant digits in scientific notation.
        assert!(r[1].split('e').next().unwrap().trim_start_matches('-').len() >= 17);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    for cmd in [&["solve"][..], &["verify"], &["sweep-rho"]] {
        let (a, b) = (tmp.path().join(format!("{}-a", cmd[0])), tmp.path().join(format!("{}-b", cmd[0])));
        let cfg = configs().join("delay.toml");
        assert_eq!(code(&run(cmd, &cfg, &a)), 0);
        assert_eq!(code(&run(cmd, &cfg, &b)), 0);
        let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 3);
        for name in names {
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn negative_m0_fails_the_certificate_naming_non_negativity() {
    let tmp = TempDir::new().unwrap();
    let cfg = scalar_config(tmp.path(), -1.0, 1.0, 16, "");
    let o = run(&["check"], &cfg, &tmp.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(b) non-negative"), "{}", stderr(&o));
    let s = summary(&tmp.path().join("out"));
    assert_eq!(get(&s, "exit_code"), "2");
    assert_eq!(get(&s, "error_kind"), "certificate");
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let missing = run(&["check"], &tmp.path().join("absent.toml"), tmp.path());
    assert_eq!(code(&missing), 1);

    let bad_key = tmp.path().join("bad.toml");
    fs::write(&bad_key, "schema_version = 1\n[grid]\nt_min = 0.0\nt_max = 1.0\nbogus = 3\n").unwrap();
    let o = run(&["check"], &bad_key, tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));

    let text = fs::read_to_string(scalar_config(tmp.path(), 1.0, 1.0, 16, "")).unwrap();
    let wrong_version = tmp.path().join("v2.toml");
    fs::write(&wrong_version, text.replace("schema_version = 1", "schema_version = 2")).unwrap();
    assert_eq!(code(&run(&["check"], &wrong_version, tmp.path())), 1);

    let dangling = tmp.path().join("dangling.toml");
    fs::write(
        &dangling,
        text.replace("[problem.forcing]\nkind = \"bump\"\nstart = 0.5\nend = 3.0\n", "[problem.forcing]\nkind = \"csv\"\npath = \"nowhere.csv\"\n")
            .replace("amplitude = [1.0]\n", ""),
    )
    .unwrap();
    let o = run(&["solve"], &dangling, tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));

    let no_config = bin().arg("solve").output().unwrap();
    assert_eq!(code(&no_config), 1);
    let unknown = bin().arg("frobnicate").output().unwrap();
    assert_eq!(code(&unknown), 1);
}

#[test]
fn non_skew_spatial_matrix_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("a.csv"), "0.0,1.0\n1.0,0.0\n").unwrap();
    let text = fs::read_to_string(configs().join("delay.toml")).unwrap().replace("rotation.csv", "a.csv");
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, text).unwrap();
    assert_eq!(code(&run(&["solve"], &cfg, &tmp.path().join("out"))), 1);
}

#[test]
fn delay_solve_writes_a_contracting_iteration_log() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["solve"], &configs().join("delay.toml"), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&tmp.path().join("iterations.csv"));
    assert_eq!(header, ["iter", "delta_norm", "ratio"]);
    assert!(rows.len() >= 2);
    assert_eq!(rows[0][2], "");
    let last: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert!(last < 1.0);
    let s = summary(tmp.path());
    assert!(get(&s, "contraction_ratio").parse::<f64>().unwrap() < 1.0);
    assert!(get(&s, "residual").parse::<f64>().unwrap() < 1e-10);
}

#[test]
fn huge_step_flags_the_energy_refinement() {
    let tmp = TempDir::new().unwrap();
    let cfg = scalar_config(tmp.path(), 1.0, 1.0, 4, "");
    let o = run(&["verify"], &cfg, &tmp.path().join("out"));
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("energy"), "{}", stderr(&o));
    let (_, rows) = csv_rows(&tmp.path().join("out/verify.csv"));
    let energy = rows.iter().find(|r| r[0] == "energy").unwrap();
    assert_eq!(energy[3], "fail");
    // The exact discrete identities do not depend on h.
    for name in ["causality", "adjoint", "oracle"] {
        assert!(rows.iter().any(|r| r[0] == name && r[3] == "pass"), "{rows:?}");
    }

    let fine = scalar_config(tmp.path(), 1.0, 1.0, 256, "");
    let o = run(&["verify"], &fine, &tmp.path().join("fine"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn empty_verification_list_passes_with_an_empty_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = scalar_config(tmp.path(), 1.0, 1.0, 16, "[verify]\nchecks = []\n");
    let o = run(&["verify"], &cfg, &tmp.path().join("out"));
    assert_eq!(code(&o), 0);
    let (header, rows) = csv_rows(&tmp.path().join("out/verify.csv"));
    assert_eq!(header, ["check", "measured", "threshold", "result", "detail"]);
    assert!(rows.is_empty());
    assert_eq!(get(&summary(&tmp.path().join("out")), "checks_run"), "0");
}

#[test]
fn single_rho_sweep_is_a_precondition_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = scalar_config(tmp.path(), 1.0, 1.0, 16, "");
    let text = fs::read_to_string(&cfg).unwrap().replace("rho = 1.0\n", "rho = 1.0\nsweep = [2.0, 2.0]\n");
    fs::write(&cfg, text).unwrap();
    let o = run(&["sweep-rho"], &cfg, &tmp.path().join("out"));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("precondition"), "{}", stderr(&o));
}

#[test]
fn delay_sweep_contraction_ratio_decreases() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["sweep-rho"], &configs().join("delay.toml"), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&tmp.path().join("sweep.csv"));
    assert_eq!(header, ["rho", "c0", "bound_ratio", "tail_norm", "contraction_ratio", "status"]);
    assert_eq!(rows.len(), 4);
    let ratios: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    assert_eq!(get(&summary(tmp.path()), "contraction_ratio_decreasing"), "yes");
}

#[test]
fn failing_sweep_rows_are_recorded() {
    // A tiny weight leaves the delay bound above c0: that row fails, the others still run.
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("delay.toml"))
        .unwrap()
        .replace("sweep = [1.0, 2.0, 4.0, 8.0]", "sweep = [0.01, 2.0]")
        .replace("rotation.csv", &configs().join("rotation.csv").display().to_string());
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, text).unwrap();
    let o = run(&["sweep-rho"], &cfg, &tmp.path().join("out"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv_rows(&tmp.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0][5].starts_with("solve:"), "{rows:?}");
    assert_eq!(rows[0][4], "");
    assert_eq!(rows[1][5], "ok");
    assert_eq!(get(&summary(&tmp.path().join("out")), "rows_failed"), "1");
}

#[test]
fn kelvin_voigt_sweep_reports_the_tail_column() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["sweep-rho"], &configs().join("kelvin_voigt.toml"), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&tmp.path().join("sweep.csv"));
    assert_eq!(header[3], "tail_norm");
    let tails: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(tails.windows(2).all(|w| w[1] < w[0]), "{tails:?}");
    // The annotation must agree with the column.
    let halves = tails.windows(2).all(|w| w[0] / w[1] >= 2.0);
    let s = summary(tmp.path());
    assert_eq!(get(&s, "tail_norm_halves_per_doubling"), if halves { "yes" } else { "no" });
    assert!(rows.iter().all(|r| r[5] == "ok"));
}

#[test]
fn mixed_type_check_reports_the_case_bounds() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["check"], &configs().join("mixed_type.toml"), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(tmp.path());
    for (key, bound) in [("case_before", 1.0), ("case_ramp", 0.5), ("case_after", 1.0)] {
        let v: f64 = get(&s, key).parse().unwrap();
        assert!(v >= bound - 1e-10, "{key} = {v}");
        assert_eq!(get(&s, &format!("{key}_bound")).parse::<f64>().unwrap(), bound);
    }
    let report = fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("rho0 = ") && report.contains("worst witness"));
}

#[test]
fn default_mixed_type_verification_passes() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["verify"], &configs().join("mixed_type.toml"), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv_rows(&tmp.path().join("verify.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["causality", "norm_bound", "energy", "adjoint", "oracle"]);
    assert!(rows.iter().all(|r| r[3] == "pass"));
}

#[test]
fn examples_run_with_built_in_defaults() {
    let tmp = TempDir::new().unwrap();
    let mt = tmp.path().join("mt");
    let o = bin()
        .args(["example", "mixed-type", "--quiet", "--emit-plot-data", "--out"])
        .arg(&mt)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["cases.csv", "region_map.csv", "solution.csv", "plot_norms.csv", "report.txt", "summary.txt"] {
        assert!(mt.join(f).is_file(), "{f}");
    }
    let (_, cases) = csv_rows(&mt.join("cases.csv"));
    assert_eq!(cases.len(), 9);
    assert!(cases.iter().all(|r| r[4] == "pass"));
    let (_, map) = csv_rows(&mt.join("region_map.csv"));
    for letter in ["H", "P", "E"] {
        assert!(map.iter().any(|r| r[2] == letter), "no {letter} cell");
    }

    let kv = tmp.path().join("kv");
    let o = bin().args(["example", "kelvin-voigt", "--quiet", "--out"]).arg(&kv).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&kv);
    assert!(get(&s, "schur_defect").parse::<f64>().unwrap() <= 1e-10);
    assert!(get(&s, "causality_defect").parse::<f64>().unwrap() <= 1e-10);
    let (header, rows) = csv_rows(&kv.join("tail.csv"));
    assert_eq!(header, ["rho", "tail_norm", "reduction"]);
    assert_eq!(rows.len(), 4);
    assert!(kv.join("iterations.csv").is_file());
}

#[test]
fn plot_data_only_on_request() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("scalar_integration.toml");
    run(&["solve"], &cfg, &tmp.path().join("plain"));
    assert!(!tmp.path().join("plain/plot_norms.csv").exists());
    let o = bin()
        .args(["solve", "--emit-plot-data", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("plot"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let (header, rows) = csv_rows(&tmp.path().join("plot/plot_norms.csv"));
    assert_eq!(header, ["t", "norm_u", "norm_f", "weighted_norm_u"]);
    assert_eq!(rows.len(), 301);
}

#[test]
fn quiet_silences_stdout() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("scalar_integration.toml");
    let loud = bin().arg("check").arg("--config").arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert!(String::from_utf8_lossy(&loud.stdout).contains("rho0"));
    let quiet = run(&["check"], &cfg, tmp.path());
    assert!(quiet.stdout.is_empty());
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("delay.toml");
    let o = bin()
        .args(["verify", "--quiet", "--seed", "7", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(get(&summary(tmp.path()), "seed"), "7");
    run(&["verify"], &cfg, tmp.path());
    assert_eq!(get(&summary(tmp.path()), "seed"), "0");
}

#[test]
fn table_and_piecewise_families_match_constant_ones() {
    // The same constant law written three ways gives the same trajectory.
    let tmp = TempDir::new().unwrap();
    let diag = [2.0, 1.0, 1.0, 3.0];
    let rows: Vec<String> = (0..4)
        .map(|i| {
            let r: Vec<String> = (0..4).map(|j| format!("{:?}", if i == j { diag[i] } else { 0.0 })).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    let m = format!("[{}]", rows.join(", "));
    let flat: Vec<String> = (0..16).map(|k| format!("{:?}", if k % 5 == 0 { diag[k / 5] } else { 0.0 })).collect();
    let header: Vec<String> = (0..16).map(|k| format!("m{}{}", k / 4, k % 4)).collect();
    fs::write(
        tmp.path().join("m0.csv"),
        format!("t,{}\n-5.0,{}\n5.0,{}\n", header.join(","), flat.join(","), flat.join(",")),
    )
    .unwrap();
    let zero = "[[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]";
    let law = |m0: &str| {
        format!(
            r#"schema_version = 1
[grid]
t_min = 0.0
t_max = 2.0
n = 64
[weight]
rho = 1.0
[problem]
model = "general"
{m0}
[problem.m1]
family = "constant"
matrix = [[0.5, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 0.5]]
[problem.spatial]
kind = "block_skew_1d"
n = 2
dx = 0.5
[problem.forcing]
kind = "step"
start = 0.25
amplitude = [1.0, -1.0, 0.5, 0.0]
"#
        )
    };
    let variants = [
        format!("[problem.m0]\nfamily = \"constant\"\nmatrix = {m}"),
        "[problem.m0]\nfamily = \"table\"\ncsv = \"m0.csv\"".to_string(),
        format!("[problem.m0]\nfamily = \"piecewise\"\nbreaks = [1.0]\nmatrices = [{m}, {m}]"),
        format!("[problem.m0]\nfamily = \"ramp\"\nbase = {m}\nslope = {zero}"),
    ];
    let mut solutions = Vec::new();
    for (i, v) in variants.iter().enumerate() {
        let cfg = tmp.path().join(format!("c{i}.toml"));
        fs::write(&cfg, law(v)).unwrap();
        let out = tmp.path().join(format!("o{i}"));
        let o = run(&["solve"], &cfg, &out);
        assert_eq!(code(&o), 0, "{v}: {}", stderr(&o));
        solutions.push(fs::read_to_string(out.join("solution.csv")).unwrap());
    }
    assert!(solutions.iter().all(|s| s == &solutions[0]));
}

#[test]
fn convolution_perturbation_and_csv_forcing() {
    let tmp = TempDir::new().unwrap();
    let mut kernel = String::from("t,v0\n");
    for k in 0..=100 {
        let t = k as f64 * 0.02;
        kernel.push_str(&format!("{t},{}\n", 0.5 * (-3.0 * t).exp()));
    }
    fs::write(tmp.path().join("k.csv"), kernel).unwrap();
    let mut forcing = String::from("t,v0\n");
    for k in 0..=40 {
        let t = k as f64 * 0.1;
        forcing.push_str(&format!("{t},{}\n", (t * 2.0).sin()));
    }
    fs::write(tmp.path().join("f.csv"), forcing).unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        r#"schema_version = 1
[grid]
t_min = 0.0
t_max = 4.0
n = 200
[weight]
rho = 2.0
[problem]
model = "general"
[problem.m0]
family = "constant"
matrix = [[1.0]]
[problem.m1]
family = "constant"
matrix = [[1.0]]
[problem.forcing]
kind = "csv"
path = "f.csv"
[perturbation]
kind = "convolution"
kernel = "k.csv"
"#,
    )
    .unwrap();
    let o = run(&["solve"], &cfg, &tmp.path().join("out"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&tmp.path().join("out"));
    assert!(get(&s, "perturbation").contains("convolution"));
    assert!(get(&s, "contraction_ratio").parse::<f64>().unwrap() < 1.0);

    // A forcing table that does not cover the grid is rejected.
    let short = fs::read_to_string(&cfg).unwrap().replace("t_max = 4.0", "t_max = 5.0");
    fs::write(&cfg, short).unwrap();
    assert_eq!(code(&run(&["solve"], &cfg, &tmp.path().join("out2"))), 1);
}
