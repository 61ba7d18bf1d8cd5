use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn openpit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_openpit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn openpit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn meta_value(meta: &str, key: &str) -> Option<String> {
    meta.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .map(str::to_string)
}

#[test]
fn solve_mini4_example() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = openpit(
        &[
            "solve", "--instance", "mini4.pit", "--gamma", "4", "--init", "zero", "--optimizer", "qnb", "--seed",
            "1", "--out", out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().next(), Some("P_opt=5 p_opt=1.000"));
    for f in ["trace.csv", "distribution.csv", "profile.csv", "run.meta"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let dist = fs::read_to_string(out.join("distribution.csv")).unwrap();
    assert_eq!(dist.lines().next(), Some("bitstring,probability"));
    assert_eq!(dist.lines().count(), 17);
    let meta = fs::read_to_string(out.join("run.meta")).unwrap();
    assert_eq!(meta_value(&meta, "mode").as_deref(), Some("solve"));
    assert_eq!(meta_value(&meta, "gamma").as_deref(), Some("4"));
    assert_eq!(meta_value(&meta, "seed").as_deref(), Some("1"));
    assert_eq!(meta_value(&meta, "init").as_deref(), Some("zero"));
    assert!(meta_value(&meta, "version").is_some());
}

#[test]
fn oracle_example() {
    let tmp = tempfile::tempdir().unwrap();
    let o = openpit(&["oracle", "--instance", "mini4.pit"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("P_opt=5 optimal_count=1"));
}

#[test]
fn no_files_without_out() {
    let tmp = tempfile::tempdir().unwrap();
    let o = openpit(&["oracle", "--instance", "builtin:step9"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn missing_instance_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = openpit(&["solve", "--instance", "missing.pit"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.pit"));
}

#[test]
fn bad_flags_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--instance", "mini4.pit", "--optimizer", "newton"][..],
        &["solve", "--instance", "mini4.pit", "--gamma", "-2"],
        &["decompose", "--instance", "mini4.pit", "--partition", "nope.txt"],
        &["sample", "--instance", "mini4.pit", "--shots", "0"],
        &["teleport"],
    ] {
        let o = openpit(args, tmp.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn partition_file_is_used_and_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let part = tmp.path().join("cut.txt");
    fs::write(&part, "# left and right\n0 3\n1 2\n").unwrap();
    let out = tmp.path().join("run");
    let o = openpit(
        &[
            "decompose", "--instance", "mini4.pit", "--partition", part.to_str().unwrap(), "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("P_opt=5 "));
    let echoed = fs::read_to_string(out.join("partition.txt")).unwrap();
    let frags: Vec<&str> = echoed.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(frags, ["0 3", "1 2"]);
    let energy = fs::read_to_string(out.join("energy.csv")).unwrap();
    assert_eq!(energy.lines().next(), Some("sweep,negative_cost_sum,total_energy"));
    let meta = fs::read_to_string(out.join("run.meta")).unwrap();
    assert_eq!(meta_value(&meta, "init").as_deref(), Some("plus"));
}

#[test]
fn noise_file_and_mitigation() {
    let tmp = tempfile::tempdir().unwrap();
    let noise = tmp.path().join("noise.txt");
    fs::write(&noise, "q0 0.05 0.02\nq1 0.04 0.01\nq2 0.05 0.02\nq3 0.03 0.02\n").unwrap();
    let out = tmp.path().join("run");
    let o = openpit(
        &[
            "sample", "--instance", "mini4.pit", "--noise", noise.to_str().unwrap(), "--mitigate", "--out",
            out.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let counts = fs::read_to_string(out.join("counts.csv")).unwrap();
    assert_eq!(counts.lines().next(), Some("bitstring,count"));
    let total: u64 = counts.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 8192);
    let mitigated = fs::read_to_string(out.join("mitigated.csv")).unwrap();
    let mass: f64 = mitigated
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-9);

    fs::write(&noise, "q0 0.05 0.02\n").unwrap();
    let o = openpit(&["sample", "--instance", "mini4.pit", "--noise", noise.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn identical_seeds_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        let o = openpit(
            &[
                "compare-optimizers", "--instance", "mini4.pit", "--seed", "3", "--max-evals", "2000", "--out",
                out.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        (o.stdout, files)
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let names: Vec<&str> = a.1.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"comparison.csv"));
    assert!(names.contains(&"trace_spsa.csv"));
}
