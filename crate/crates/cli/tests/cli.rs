use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hetnet_cli::{Command as Sub, ExperimentSpec, Invocation, Options, ValidationReport};

fn hetnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetnet")).args(args).output().expect("binary runs")
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = tmp.path().join(sub);
        let o = hetnet(&[
            "coverage-curve",
            "--grid",
            "2e5,1e6",
            "--methods",
            "full,mc",
            "--drops",
            "400",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (read(&out, "coverage_curve.csv"), read(&out, "coverage_curve.gp"))
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert!(a.0.contains("# seed = 11\n"));
    assert!(a.0.contains("# git_revision = "));
    assert!(a.0.contains("# config numerics.mc_drops = 400\n"));
    let header = a.0.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "tau_bps,method,class,weight,coverage,ci_low,ci_high");
    let mc_overall = a.0.lines().find(|l| l.contains(",mc,overall,")).unwrap();
    assert!(mc_overall.split(',').all(|f| !f.is_empty()), "{mc_overall}");
}

#[test]
fn single_point_sweeps_give_single_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = hetnet(&["optimize-u", "--grid", "3e5", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&read(tmp.path(), "optimize_u.csv")).len(), 1);

    let o = hetnet(&["compare-schemes", "--grid", "6", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&read(tmp.path(), "compare_schemes.csv")).len();
    assert_eq!(rows, 1);
    let breakdown = read(tmp.path(), "compare_schemes_breakdown.csv");
    for scheme in ["in,", "simple_offload,", "abs,"] {
        assert!(data_rows(&breakdown).iter().any(|r| r.starts_with(scheme)), "{scheme}");
    }
}

#[test]
fn empty_method_list_is_rejected_before_anything_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let o = hetnet(&["coverage-curve", "--methods", "", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("method list is empty"));
    assert!(!out.exists());

    let err = Invocation::resolve(Sub::CoverageCurve, &Options { methods: Some(Vec::new()), ..Options::default() })
        .unwrap_err();
    assert!(err.to_string().contains("method list is empty"));
}

#[test]
fn bad_grids_and_axes_are_rejected() {
    let o = hetnet(&["coverage-curve", "--grid", "1e6,1e5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hetnet(&["optimize-u", "--axis", "eta", "--grid", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hetnet(&["optimize-u", "--methods", "mc"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hetnet(&["pmf", "--analytic-set", "alpha1=3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_runs_leave_no_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pmf");
    let o = hetnet(&["pmf", "--methods", "full,mc", "--drops", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn plot_scripts_read_only_their_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hetnet(&["compare-schemes", "--grid", "4,8", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
    for stem in ["compare_schemes", "compare_schemes_breakdown"] {
        let gp = read(tmp.path(), &format!("{stem}.gp"));
        let quoted: Vec<&str> = gp.split('"').skip(1).step_by(2).collect();
        let files: Vec<&&str> = quoted.iter().filter(|q| q.contains('.') && !q.contains(' ')).collect();
        assert!(!files.is_empty());
        for f in files {
            assert!(*f == format!("{stem}.csv") || *f == format!("{stem}.png"), "{stem}.gp mentions {f}");
        }
        assert!(!gp.contains('/'), "{stem}.gp holds a path");
    }
}

#[test]
fn validation_report_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hetnet(&[
        "validate",
        "--grid",
        "2e5,1e6",
        "--drops",
        "3000",
        "--name",
        "rt",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 3)), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(tmp.path(), "rt.json");
    let report = ValidationReport::parse(&text).unwrap();
    assert_eq!(report.to_json(), text);
    assert_eq!(report.drops, 3000);
    assert_eq!(o.status.code() == Some(0), report.passed);
    for c in &report.checks {
        assert!(c.threshold > 0.0, "{}", c.name);
        assert_eq!(c.passed, c.measured.is_some_and(|m| m <= c.threshold), "{}", c.name);
    }
    for name in ["coverage_sup_deviation", "pmf_per_macro_sup_norm", "pmf_nearest_sup_norm", "laplace_order0_sigmas"] {
        assert!(report.check(name).is_some(), "{name}");
    }
}

#[test]
fn corrupted_path_loss_fails_the_coverage_check() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hetnet(&[
        "validate",
        "--grid",
        "2e5,1e6",
        "--drops",
        "3000",
        "--analytic-set",
        "alpha1=2.1",
        "--analytic-set",
        "alpha2=2.1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let report = ValidationReport::parse(&read(tmp.path(), "validate.json")).unwrap();
    let cov = report.check("coverage_sup_deviation").unwrap();
    assert!(!cov.passed);
    assert!(cov.measured.unwrap() > cov.threshold);
    assert_eq!(report.analytic_overrides[0], ("alpha1".to_string(), "2.1".to_string()));
    assert!(!report.passed);
}

fn experiment_files() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(workspace().join("experiments"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_experiments_resolve() {
    let files = experiment_files();
    assert!(!files.is_empty());
    for path in files {
        let spec = ExperimentSpec::load(&path).unwrap();
        let command = match spec.command.as_deref() {
            Some("coverage-curve") => Sub::CoverageCurve,
            Some("optimize-u") => Sub::OptimizeU,
            Some("optimize-eta") => Sub::OptimizeEta,
            Some("compare-schemes") => Sub::CompareSchemes,
            Some("pmf") => Sub::Pmf,
            Some("validate") => Sub::Validate,
            other => panic!("{}: command {other:?}", path.display()),
        };
        let inv = Invocation::resolve(command, &Options { spec: Some(path.clone()), ..Options::default() })
            .unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
        assert_eq!(inv.spec.name, path.file_stem().unwrap().to_str().unwrap());
    }
}

#[test]
fn readme_recipes_map_onto_experiment_files() {
    let readme = std::fs::read_to_string(workspace().join("README.md")).unwrap();
    let mut in_sh = false;
    let mut recipes = Vec::new();
    for line in readme.lines() {
        if line.starts_with("```") {
            in_sh = line == "```sh";
        } else if in_sh && line.starts_with("hetnet ") {
            recipes.push(line);
        }
    }
    assert!(!recipes.is_empty());
    let mut used = Vec::new();
    for r in recipes {
        let specs: Vec<&str> = r.split_whitespace().filter_map(|w| w.strip_prefix("experiments/")).collect();
        assert_eq!(specs.len(), 1, "recipe `{r}` must name exactly one spec");
        assert!(workspace().join("experiments").join(specs[0]).is_file(), "{}", specs[0]);
        used.push(specs[0].to_string());
    }
    used.sort();
    used.dedup();
    let files: Vec<String> =
        experiment_files().iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(used, files);
}
