//! End-to-end tests of the `ggt` binary: exit codes, determinism, file
//! formats.

use std::path::Path;
use std::process::{Command, Output};
use std::sync::Mutex;

// Full-size forwards allocate hundreds of MB; serialize them.
static HEAVY: Mutex<()> = Mutex::new(());

fn ggt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggt"))
        .args(args)
        .env_remove("GG_SEED")
        .output()
        .expect("binary runs")
}

fn ggt_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggt"))
        .args(args)
        .env_remove("GG_SEED")
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn forward_is_deterministic_and_writes_logits() {
    let _guard = HEAVY.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.ggt");
    let out_a = dir.path().join("a.ggt");
    let out_b = dir.path().join("b.ggt");

    let gen = ggt(&[
        "make-input",
        "--shape",
        "3,224,224",
        "--seed",
        "9",
        "--out",
        input.to_str().unwrap(),
    ]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));

    let run_a = ggt(&[
        "forward",
        "--model",
        "gg-t",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert_eq!(
        code(&run_a),
        0,
        "{}",
        String::from_utf8_lossy(&run_a.stderr)
    );
    let stdout = String::from_utf8_lossy(&run_a.stdout);
    assert_eq!(stdout.lines().count(), 5, "top-5 lines: {stdout}");
    assert!(stdout.lines().next().unwrap().starts_with("top1 class="));

    let logits = ggt_cli::ggt1::load(&out_a).unwrap();
    assert_eq!(logits.shape(), &[1000]);

    let run_b = ggt(&[
        "forward",
        "--model",
        "gg-t",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert_eq!(code(&run_b), 0);
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap(),
        "same seed must produce byte-identical logits"
    );
    assert_eq!(run_a.stdout, run_b.stdout);
}

#[test]
fn forward_rejects_bad_geometry_with_stage_message() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.ggt");
    let gen = ggt(&[
        "make-input",
        "--shape",
        "3,225,225",
        "--seed",
        "1",
        "--out",
        input.to_str().unwrap(),
    ]);
    assert_eq!(code(&gen), 0);

    let run = ggt(&[
        "forward",
        "--model",
        "gg-t",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("y.ggt").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("patch size"), "{stderr}");

    // divisible by 4 but stage grid 58 is not divisible by 7
    let input2 = dir.path().join("bad2.ggt");
    ggt(&[
        "make-input",
        "--shape",
        "3,232,232",
        "--seed",
        "1",
        "--out",
        input2.to_str().unwrap(),
    ]);
    let run2 = ggt(&[
        "forward",
        "--model",
        "gg-t",
        "--input",
        input2.to_str().unwrap(),
        "--out",
        dir.path().join("y2.ggt").to_str().unwrap(),
    ]);
    assert_eq!(code(&run2), 2);
    let stderr2 = String::from_utf8_lossy(&run2.stderr);
    assert!(
        stderr2.contains("stage 0") && stderr2.contains("partition size 7"),
        "{stderr2}"
    );
}

#[test]
fn forward_rejects_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("junk.ggt");
    std::fs::write(&input, b"NOPE____junk").unwrap();
    let run = ggt(&[
        "forward",
        "--model",
        "gg-t",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("y.ggt").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("magic"));
}

#[test]
fn unknown_flags_are_rejected() {
    let run = ggt(&["count", "--model", "gg-t", "--nonsense"]);
    assert_eq!(code(&run), 2);
}

#[test]
fn count_csv_parses_back_to_the_same_totals() {
    let run = ggt(&["count", "--model", "gg-t", "--format", "csv"]);
    assert_eq!(code(&run), 0);
    let csv = String::from_utf8(run.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("layer,macs,params"));
    let (mut macs, mut params) = (0u64, 0u64);
    let mut total = None;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let m: u64 = cells[1].parse().unwrap();
        let p: u64 = cells[2].parse().unwrap();
        if cells[0] == "total" {
            total = Some((m, p));
        } else {
            macs += m;
            params += p;
        }
    }
    assert_eq!(total, Some((macs, params)));
    assert_eq!(total, Some((4_551_605_760, 28_348_066)));

    // identical bytes on a re-run
    let rerun = ggt(&["count", "--model", "gg-t", "--format", "csv"]);
    assert_eq!(rerun.stdout, csv.as_bytes());
}

#[test]
fn count_table_reports_convention() {
    let run = ggt(&["count", "--model", "gg-s", "--format", "table"]);
    assert_eq!(code(&run), 0);
    let text = String::from_utf8_lossy(&run.stdout);
    assert!(text.contains("multiply-accumulate"), "{text}");
    assert!(text.contains("total"));
}

#[test]
fn compare_emits_deterministic_csv_with_matching_partition_columns() {
    let args = ["compare", "--seed", "3"];
    let a = ggt(&args);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = ggt(&args);
    assert_eq!(a.stdout, b.stdout, "CSV must be byte-stable");

    let csv = String::from_utf8(a.stdout).unwrap();
    assert!(csv.starts_with("variant,n,macs\n"));
    let mut gmsa = Vec::new();
    let mut wmsa = Vec::new();
    let mut msa_rows = Vec::new();
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let n: u64 = cells[1].parse().unwrap();
        let macs: u64 = cells[2].parse().unwrap();
        match cells[0] {
            "gmsa" => gmsa.push(macs),
            "wmsa" => wmsa.push(macs),
            "msa" => msa_rows.push((n, macs)),
            _ => {}
        }
    }
    assert_eq!(gmsa, wmsa, "glance and window predictions must coincide");
    assert!(msa_rows.len() >= 2);

    let stderr = String::from_utf8_lossy(&a.stderr);
    assert!(stderr.contains("# slope msa"), "{stderr}");
}

#[test]
fn compare_with_timing_adds_the_column() {
    let run = ggt(&[
        "compare",
        "--variants",
        "gmsa",
        "--grid",
        "7,7",
        "--levels",
        "2",
        "--channels",
        "8",
        "--timing",
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let csv = String::from_utf8(run.stdout).unwrap();
    assert!(csv.starts_with("variant,n,macs,wall_time_us\n"));
    let first = csv.lines().nth(1).unwrap();
    assert_eq!(first.split(',').count(), 4);
    assert!(
        !first.ends_with(','),
        "wall time should be measured: {first}"
    );
}

#[test]
fn verify_perm_suite_passes_and_fault_injection_fails() {
    let good = ggt(&["verify", "--suite", "perm"]);
    assert_eq!(code(&good), 0, "{}", String::from_utf8_lossy(&good.stderr));
    let text = String::from_utf8_lossy(&good.stdout);
    assert!(text.contains("status=PASS"));
    assert!(text.contains("summary"));

    let bad = ggt(&["verify", "--suite", "oracle", "--inject-fault", "perm"]);
    assert_eq!(code(&bad), 1);
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(
        text.contains("g_msa_matches_bruteforce status=FAIL"),
        "{text}"
    );
}

#[test]
fn gg_seed_env_var_is_the_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ggt");
    let b = dir.path().join("b.ggt");
    let via_flag = ggt(&[
        "make-input",
        "--shape",
        "2,3",
        "--seed",
        "5",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code(&via_flag), 0);
    let via_env = ggt_env(
        &["make-input", "--shape", "2,3", "--out", b.to_str().unwrap()],
        "GG_SEED",
        "5",
    );
    assert_eq!(code(&via_env), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn checkpoint_roundtrip_is_bit_exact_and_drives_forward() {
    let _guard = HEAVY.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt_a = dir.path().join("ckpt_a");
    let ckpt_b = dir.path().join("ckpt_b");

    let export = ggt(&[
        "export-weights",
        "--model",
        "gg-t",
        "--seed",
        "42",
        "--out-dir",
        ckpt_a.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&export),
        0,
        "{}",
        String::from_utf8_lossy(&export.stderr)
    );

    // load → save must reproduce both files bit for bit
    let cfg = ggt_core::backbone::ModelConfig::for_variant(ggt_core::backbone::Variant::Tiny);
    let loaded = ggt_cli::checkpoint::load(&ckpt_a, &cfg).unwrap();
    ggt_cli::checkpoint::save(&ckpt_b, "gg-t", &loaded).unwrap();
    assert_bytes_equal(&ckpt_a.join("manifest.json"), &ckpt_b.join("manifest.json"));
    assert_bytes_equal(&ckpt_a.join("weights.bin"), &ckpt_b.join("weights.bin"));

    // forward from the checkpoint equals forward from the same seed
    let input = dir.path().join("x.ggt");
    ggt(&[
        "make-input",
        "--shape",
        "3,224,224",
        "--seed",
        "7",
        "--out",
        input.to_str().unwrap(),
    ]);
    let out_seed = dir.path().join("seed.ggt");
    let out_ckpt = dir.path().join("ckpt.ggt");
    let from_seed = ggt(&[
        "forward",
        "--model",
        "gg-t",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_seed.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert_eq!(code(&from_seed), 0);
    let from_ckpt = ggt(&[
        "forward",
        "--model",
        "gg-t",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_ckpt.to_str().unwrap(),
        "--weights",
        ckpt_a.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&from_ckpt),
        0,
        "{}",
        String::from_utf8_lossy(&from_ckpt.stderr)
    );
    assert_bytes_equal(&out_seed, &out_ckpt);
}

#[test]
fn checkpoint_load_rejects_wrong_model_and_corruption() {
    let _guard = HEAVY.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    // a small lie: export gg-t, then ask forward to treat it as gg-s
    let export = ggt(&[
        "export-weights",
        "--model",
        "gg-t",
        "--seed",
        "0",
        "--out-dir",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&export), 0);

    let input = dir.path().join("x.ggt");
    ggt(&[
        "make-input",
        "--shape",
        "3,224,224",
        "--seed",
        "0",
        "--out",
        input.to_str().unwrap(),
    ]);
    let run = ggt(&[
        "forward",
        "--model",
        "gg-s",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("y.ggt").to_str().unwrap(),
        "--weights",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
    assert!(String::from_utf8_lossy(&run.stderr).contains("checkpoint is for model"));
}

fn assert_bytes_equal(a: &Path, b: &Path) {
    let ba = std::fs::read(a).unwrap();
    let bb = std::fs::read(b).unwrap();
    assert_eq!(ba, bb, "{} and {} differ", a.display(), b.display());
}
