use std::path::{Path, PathBuf};

use unispoof::cli::main_with_args;
use unispoof::config::{PairSpec, RunConfig};
use unispoof::report::write_json;
use unispoof_core::synth::DatasetSpec;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["unispoof"];
    argv.extend_from_slice(args);
    main_with_args(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small enough that a full pipeline runs in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg = RunConfig::default();
    cfg.dataset = DatasetSpec {
        n_identities: 8,
        per_identity: 4,
        val_per_identity: 1,
        ..DatasetSpec::default()
    };
    cfg.frm.max_epochs = 2;
    cfg.uad.max_epochs = 2;
    cfg.pairs = PairSpec { genuine: 4, impostor: 4 };
    let p = dir.join("tiny.json");
    write_json(&p, &cfg).unwrap();
    p
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn unknown_subcommand_and_flag_exit_one() {
    assert_eq!(run(&["bogus"]), 1);
    assert_eq!(run(&["count-params", "--bogus"]), 1);
    assert_eq!(run(&["count-params", "--tap", "six"]), 1);
    assert_eq!(run(&[]), 1);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["--version"]), 0);
    assert_eq!(run(&["train-uad", "--help"]), 0);
}

#[test]
fn every_subcommand_help_lists_flags_with_defaults() {
    use clap::CommandFactory;
    let mut root = unispoof::cli::Cli::command();
    root.build();
    let names: Vec<String> = root
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .filter(|n| n != "help")
        .collect();
    assert_eq!(names.len(), 9);
    for name in names {
        let sub = root.find_subcommand_mut(&name).unwrap();
        let help = sub.render_long_help().to_string();
        for flag in ["--config", "--seed", "--out", "--preset", "--no-timestamp"] {
            assert!(help.contains(flag), "{name} lacks {flag}");
        }
        for arg in sub.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            if long == "help" || arg.is_required_set() {
                continue;
            }
            let takes_value = arg.get_num_args().is_none_or(|n| n.takes_values());
            if !takes_value {
                continue;
            }
            let line = help
                .lines()
                .skip_while(|l| !l.contains(&format!("--{long}")))
                .take_while(|l| !l.trim().is_empty() || !l.contains("--"))
                .take(6)
                .collect::<Vec<_>>()
                .join(" ");
            assert!(line.contains("[default"), "{name} --{long} shows no default:\n{line}");
        }
    }
}

#[test]
fn count_params_full_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cp");
    let code = run(&[
        "count-params", "--preset", "swin-base-paper", "--classes", "10572",
        "--out", s(&out), "--no-timestamp",
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_slice(&read(out.join("report.json"))).unwrap();
    let rows = report["result"]["params"]["rows"].as_array().unwrap();
    let get = |n: &str| {
        rows.iter()
            .find(|r| r["component"] == n)
            .and_then(|r| r["params"].as_u64())
            .unwrap()
    };
    assert_eq!(get("arcface"), 10_825_728);
    assert!((get("backbone") as f64 / 86.7e6 - 1.0).abs() <= 0.03);
    assert_eq!(report["schema_version"], 1);
    assert!(report.get("created_unix").is_none());
    // the resolved config is echoed with the model written out
    let cfg: serde_json::Value = serde_json::from_slice(&read(out.join("config.json"))).unwrap();
    assert_eq!(cfg["model"]["backbone"]["embed_dim"], 128);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(run(&["count-params", "--preset", "swin-huge", "--out", s(&out)]), 1);
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{\"frm\": 1}").unwrap();
    assert_eq!(run(&["gen-data", "--config", s(&cfg), "--out", s(&out)]), 1);
    assert_eq!(run(&["gradcheck", "--out", s(&out)]), 1);
    assert_eq!(run(&["gradcheck", "--case", "nope", "--out", s(&out)]), 1);
    let scores = dir.path().join("s.csv");
    std::fs::write(&scores, "pair_or_sample_id,score,label\na,0.9,1\n").unwrap();
    // single-class score file
    assert_eq!(run(&["eval", "--scores", s(&scores), "--out", s(&out)]), 1);
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let missing = dir.path().join("none.csv");
    assert_eq!(run(&["eval", "--scores", s(&missing), "--out", s(&out)]), 2);
    let missing = dir.path().join("none.ckpt");
    assert_eq!(run(&["verify", "--checkpoint", s(&missing), "--out", s(&out)]), 2);
}

#[test]
fn gradcheck_case_subset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gc");
    assert_eq!(run(&["gradcheck", "--case", "matmul", "--case", "hilo", "--out", s(&out), "--no-timestamp"]), 0);
    let report: serde_json::Value = serde_json::from_slice(&read(out.join("report.json"))).unwrap();
    assert_eq!(report["result"]["cases"].as_array().unwrap().len(), 2);
    assert_eq!(report["result"]["failed"], 0);
}

#[test]
fn eval_scores_file() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    std::fs::write(
        &scores,
        "pair_or_sample_id,score,label\na,0.6,0\nb,0.4,0\nc,0.2,0\nd,0.7,1\ne,0.3,1\n",
    )
    .unwrap();
    let out = dir.path().join("ev");
    assert_eq!(run(&["eval", "--scores", s(&scores), "--out", s(&out), "--no-timestamp"]), 0);
    let report: serde_json::Value = serde_json::from_slice(&read(out.join("report.json"))).unwrap();
    let m = &report["result"]["metrics"];
    assert!((m["apcer"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!((m["bpcer"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((m["accuracy"].as_f64().unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn augment_writes_an_image() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.ppm");
    let img = unispoof_core::image::Image::filled(16, 16, 0.5);
    unispoof::imageio::write_image(&input, &img).unwrap();
    for kind in ["spsc", "sdsc", "jitter", "moire"] {
        let out = dir.path().join(kind);
        assert_eq!(run(&["augment", "--input", s(&input), "--kind", kind, "--out", s(&out)]), 0);
        let back = unispoof::imageio::read_image(&out.join("augmented.ppm")).unwrap();
        assert_eq!((back.h, back.w), (16, 16));
    }
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let pipeline = |root: &Path| {
        let o = |n: &str| root.join(n);
        let data = o("data");
        let ckpt = o("frm").join("frm.ckpt");
        let steps: Vec<Vec<String>> = vec![
            vec!["gen-data".into(), "--out".into(), s(&data).into()],
            vec!["train-frm".into(), "--data".into(), s(&data).into(), "--out".into(), s(&o("frm")).into()],
            vec!["verify".into(), "--checkpoint".into(), s(&ckpt).into(), "--data".into(), s(&data).into(), "--out".into(), s(&o("verify")).into()],
            vec!["train-uad".into(), "--backbone".into(), s(&ckpt).into(), "--data".into(), s(&data).into(), "--tap".into(), "final".into(), "--out".into(), s(&o("uad")).into()],
            vec!["sweep-blocks".into(), "--backbone".into(), s(&ckpt).into(), "--data".into(), s(&data).into(), "--out".into(), s(&o("sweep")).into()],
            vec!["eval".into(), "--scores".into(), s(&o("uad").join("scores.csv")).into(), "--out".into(), s(&o("eval")).into()],
        ];
        for mut step in steps {
            step.extend(["--config".into(), s(&cfg).into(), "--seed".into(), "4".into(), "--no-timestamp".into()]);
            let mut argv = vec!["unispoof".to_string()];
            argv.extend(step.clone());
            assert_eq!(main_with_args(argv), 0, "{step:?}");
        }
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&a);
    pipeline(&b);

    let files = [
        "data/manifest.csv", "data/images/000000.ppm", "data/report.json",
        "frm/report.json", "frm/frm.ckpt", "frm/scores.csv", "verify/report.json",
        "uad/report.json", "uad/uad.ckpt", "uad/scores.csv", "sweep/report.json",
        "sweep/sweep.csv", "eval/report.json",
    ];
    // reports mention their own run directory; compare after stripping the root
    let norm = |root: &Path, f: &str| {
        let bytes = read(root.join(f));
        match String::from_utf8(bytes) {
            Ok(t) => t.replace(s(root), "<root>").into_bytes(),
            Err(e) => e.into_bytes(),
        }
    };
    for f in files {
        assert_eq!(norm(&a, f), norm(&b, f), "{f}");
    }

    let sweep: serde_json::Value = serde_json::from_slice(&read(a.join("sweep/report.json"))).unwrap();
    assert_eq!(sweep["result"]["rows"].as_array().unwrap().len(), 7);
    assert!(sweep["result"]["best_tap"].is_string());
    let uad: serde_json::Value = serde_json::from_slice(&read(a.join("uad/report.json"))).unwrap();
    let r = &uad["result"];
    assert_eq!(r["tap"], "final");
    assert_eq!(r["backbone_hash_before"], r["backbone_hash_after"]);
    assert!(r["verification_after"]["eer"].is_number());
}

#[test]
fn sweep_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    let c = s(&cfg);
    assert_eq!(run(&["gen-data", "--config", c, "--out", s(&data)]), 0);
    let ckpt = dir.path().join("frm");
    assert_eq!(run(&["train-frm", "--config", c, "--data", s(&data), "--out", s(&ckpt)]), 0);
    let ckpt = ckpt.join("frm.ckpt");

    let rows = |threads: &str| {
        let out = dir.path().join(format!("sweep{threads}"));
        std::env::set_var(unispoof::threads::ENV, threads);
        assert_eq!(
            run(&["sweep-blocks", "--config", c, "--backbone", s(&ckpt), "--data", s(&data), "--out", s(&out), "--no-timestamp"]),
            0
        );
        std::env::remove_var(unispoof::threads::ENV);
        read(out.join("sweep.csv"))
    };
    assert_eq!(rows("0"), rows("3"));
}
