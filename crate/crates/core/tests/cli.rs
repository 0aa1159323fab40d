use std::fs;
use std::process::{Command, Output};

use fran_ndt::cli::parse_grid;
use fran_ndt::ndt::{delta, Axis, Mode};
use fran_ndt::rational::parse;
use fran_ndt::NetworkConfig;

const REF: [&str; 10] = ["--kt", "3", "--kr", "3", "--n", "3", "--mr", "1", "--r", "0"];

fn fran(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fran"))
        .args(args)
        .env_remove("FRAN_OUT_DIR")
        .output()
        .expect("run fran")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

#[test]
fn ndt_edge_only_reference() {
    let o = fran(&with(&["ndt"], &with(&REF, &["--mt", "1", "--mode", "serial"])));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("scheme: EdgeOnly"));
    assert!(out.contains("delta_total: 10/9 (1.11111111111)"));
}

#[test]
fn ndt_pipelined_full_en_cache() {
    let o = fran(&["ndt", "--kt", "3", "--kr", "3", "--n", "3", "--mt", "3", "--mr", "1", "--r", "1", "--mode", "pipelined"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("delta_total: 2/3"));
    assert!(stdout(&o).contains("note: "));
}

#[test]
fn ndt_infeasible_exits_2() {
    let o = fran(&with(&["ndt"], &with(&REF, &["--mt", "0"])));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_T < 1 and r = 0"));
}

#[test]
fn bad_flags_exit_1_and_name_the_flag() {
    let o = fran(&["ndt", "--kt", "three"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--kt"));
    let o = fran(&with(&["ndt"], &with(&REF, &["--mt", "1", "--mode", "sideways"])));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--mode"));
    let o = fran(&["ndt", "--kt", "3", "--kr", "4", "--n", "3", "--mt", "1", "--mr", "1", "--r", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = fran(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_csv_round_trips() {
    let o = fran(&with(&["sweep"], &with(&REF, &["--axis", "mt", "--grid", "1:3:9"])));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["mt", "delta_f", "delta_e", "delta_total", "scheme", "mode", "mt_exact", "delta_f_exact", "delta_e_exact", "delta_total_exact"]
    );
    let template = NetworkConfig::new(3, 3, 3, parse("1").unwrap(), parse("1").unwrap(), parse("0").unwrap()).unwrap();
    let mut prev = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x = parse(&rec[6]).unwrap();
        let again = delta(&Axis::Mt.apply(&template, x).unwrap(), Mode::Serial).unwrap();
        assert_eq!(parse(&rec[9]).unwrap(), again.delta_total);
        assert_eq!(parse(&rec[7]).unwrap(), again.delta_f);
        assert_eq!(&rec[4], again.scheme.name());
        if let Some(p) = prev {
            assert!(again.delta_total <= p);
        }
        prev = Some(again.delta_total);
        rows += 1;
    }
    assert_eq!(rows, 9);
    assert_eq!(parse_grid("1:3:9").unwrap().len(), 9);
}

#[test]
fn sweep_is_byte_stable() {
    let args = with(&["sweep"], &with(&REF, &["--axis", "mt", "--grid", "0,1/2,1,2,3"]));
    let a = fran(&args);
    let b = fran(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), Some(0));
    let text = stdout(&a);
    assert_eq!(text.matches("INFEASIBLE").count(), 2);
}

#[test]
fn sweep_all_infeasible_exits_2() {
    let o = fran(&with(&["sweep"], &with(&REF, &["--axis", "mt", "--grid", "0,1/2"])));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_rejects_unordered_grid() {
    let o = fran(&with(&["sweep"], &with(&REF, &["--axis", "mt", "--grid", "2,1"])));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--grid"));
}

#[test]
fn single_point_sweep_matches_ndt() {
    let o = fran(&with(&["sweep"], &with(&REF, &["--axis", "mt", "--grid", "1"])));
    let rec = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(rec.starts_with("1,0,1.11111111111,1.11111111111,EdgeOnly,serial,1,0,10/9,10/9"), "{rec}");
}

#[test]
fn experiment_file_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("cloud.exp");
    fs::write(&exp, "# cloud-only sweep\nkt = 3\nkr = 3\nn = 3\nmt = 0\nmr = 1\naxis = r\ngrid = 1/2, 1, 2, 10\nmode = pipelined\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fran"))
        .args(["sweep", "--experiment", exp.to_str().unwrap()])
        .env("FRAN_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let csv_text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv_text.lines().count(), 5);
    assert!(csv_text.lines().skip(1).all(|l| l.contains("CloudOnly,pipelined")));

    let bad = dir.path().join("bad.exp");
    fs::write(&bad, "kt = 3\ncolour = blue\n").unwrap();
    let o = fran(&["ndt", "--experiment", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn explicit_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/ndt.csv");
    let o = fran(&with(&["ndt"], &with(&REF, &["--mt", "1", "--format", "csv", "--out", path.to_str().unwrap()])));
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("scheme,mode,delta_f"));
    assert!(text.contains("EdgeOnly,serial,0,1.11111111111"));
}

#[test]
fn simulate_passes_and_detects_tampering() {
    let base = ["simulate", "--kt", "3", "--kr", "3", "--n", "3", "--mt", "1", "--mr", "1", "--r", "0", "--file-size", "65536", "--trials", "4", "--seed", "7"];
    let o = fran(&base);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("passed = true"));

    let tampered = with(&base, &["--expected-fractions", "1/3,4/27,2/27,1/27"]);
    let o = fran(&tampered);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("passed = false"));
}

#[test]
fn simulate_small_file_is_usage_error() {
    let o = fran(&["simulate", "--kt", "3", "--kr", "3", "--n", "3", "--mt", "1", "--mr", "1", "--r", "0", "--file-size", "64"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("below the minimum"));
}

#[test]
fn schedule_ic_pair_export() {
    let o = fran(&["schedule", "--kt", "2", "--kr", "2", "--n", "2", "--mt", "1", "--mr", "1", "--r", "0", "--scheme", "edge"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let pair = text
        .lines()
        .find(|l| l.contains("W_{1,1,{2}}->U1 via EN1; W_{2,2,{1}}->U2 via EN2"))
        .expect("IC pair block");
    assert!(pair.contains(",IA-IC,1,2,"), "{pair}");
    assert!(text.lines().skip(1).all(|l| l.contains(",pass,")));
}

#[test]
fn schedule_zf_blocks_and_empty_schedule() {
    let o = fran(&["schedule", "--kt", "3", "--kr", "3", "--n", "3", "--mt", "3", "--mr", "1", "--r", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.contains(",ZF-IC,1,3,")));

    let o = fran(&["schedule", "--kt", "3", "--kr", "3", "--n", "3", "--mt", "0", "--mr", "3", "--r", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);

    let o = fran(&["schedule", "--kt", "3", "--kr", "3", "--n", "3", "--mt", "0", "--mr", "1", "--r", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn schedule_bit_level_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("placement.bin");
    let o = fran(&[
        "schedule", "--kt", "3", "--kr", "3", "--n", "3", "--mt", "1", "--mr", "1", "--r", "0", "--file-size", "4096", "--seed", "42",
        "--format", "text", "--dump", dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().skip(1).all(|l| l.contains("validation=pass")));
    let back = fran_ndt::placement::dump::read_placement(&mut fs::File::open(dump).unwrap()).unwrap();
    assert_eq!(back.en.file_size, 4096);
    assert_eq!(back.users.seed, 42);
}

#[test]
fn validate_runs_suite() {
    let o = fran(&with(&["validate"], &with(&REF, &["--mt", "1"])));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("pass schedule-equivalence"));
    assert!(out.contains("given config"));
}
