use rost::cli::main_with_args;

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("rost").chain(args.iter().copied()))
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["run", "--help"]), 0);
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["run", "--input", "x", "--output", "y", "--scheduler", "now"]), 1);
}

#[test]
fn synth_then_run_batch_compare() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let stream = p("s.txt");
    assert_eq!(run(&["synth", "--output", &stream, "--steps", "12", "--words-per-step", "10"]), 0);
    let labels = std::fs::read_to_string(format!("{stream}.labels")).unwrap();
    assert!(labels.starts_with("rost-stream v1 V=8\n"));
    assert_eq!(labels.lines().count(), 1 + 120);

    let out = p("run.csv");
    let code = run(&["run", "--input", &stream, "--output", &out, "--scheduler", "agep_exp", "--budget-rounds", "3"]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,n_words,instant_ppx,r_t"));
    assert_eq!(lines.count(), 12);

    let out = p("batch.csv");
    assert_eq!(run(&["batch", "--input", &stream, "--output", &out, "--budget-rounds", "3"]), 0);
    let r_t: Vec<u64> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(r_t.len(), 12);
    assert!(r_t.iter().all(|&r| r == r_t[0] && r > 0));

    let out = p("cmp.csv");
    assert_eq!(run(&["compare", "--input", &stream, "--output", &out, "--budget-rounds", "2", "--restarts", "2"]), 0);
    let table = std::fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().count(), 1 + 9);
    assert!(table.lines().last().unwrap().starts_with("batch,2,"));
    assert!(dir.path().join("cmp.ratios.csv").exists());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("s.txt");
    std::fs::write(&stream, "rost-stream v1 V=4\n0 1 1 2\n").unwrap();
    let s = stream.to_string_lossy();
    let out = dir.path().join("o.csv");
    let o = out.to_string_lossy();
    assert_eq!(run(&["run", "--input", &s, "--output", &o, "--scheduler", "bogus", "--budget-rounds", "1"]), 1);
    assert_eq!(run(&["run", "--input", &s, "--output", &o, "--scheduler", "exp", "--q", "1.5", "--budget-rounds", "1"]), 1);
    assert_eq!(run(&["run", "--input", "/nonexistent/x", "--output", &o, "--scheduler", "now", "--budget-rounds", "1"]), 1);
    std::fs::write(&stream, "rost-stream v1 V=4\n0 1 1 9\n").unwrap();
    assert_eq!(run(&["run", "--input", &s, "--output", &o, "--scheduler", "now", "--budget-rounds", "1"]), 1);
    assert_eq!(run(&["run", "--input", &s, "--output", &o, "--scheduler", "now", "--budget-millis", "1"]), 1);
}

#[test]
fn unknown_scheduler_lists_names() {
    let e = "bogus".parse::<rost::SchedulerKind>().unwrap_err().to_string();
    for name in ["now", "uniform", "agep", "exp", "uniform_now", "agep_now", "uniform_exp", "agep_exp"] {
        assert!(e.contains(name), "{e}");
    }
}
