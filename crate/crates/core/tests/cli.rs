use std::path::Path;
use std::process::{Command, Output};

use mkdv_orbit::curve::{make_curve, Case};
use mkdv_orbit::io_cli::{parse_csv, CSV_HEADER};
use mkdv_orbit::orbit::{default_init, integrate, IntegratorConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mkdv-orbit"))
}

fn run_config(dir: &Path, name: &str, body: &str) -> (Output, String) {
    let csv = dir.join(format!("{name}.csv"));
    let cfg = dir.join(format!("{name}.cfg"));
    std::fs::write(&cfg, format!("{body}\ncsv = {}\n", csv.display())).unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    let text = std::fs::read_to_string(&csv).unwrap_or_default();
    (out, text)
}

const FIG2: &str = "k1 = 1.0400\nk2 = 1.0392\nk3 = 1.010\ncase = A\ninit = default\nphi_c = -0.90\n";

#[test]
fn zero_horizon_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = run_config(dir.path(), "zero", &format!("{FIG2}s_max = 0\n"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER);
}

#[test]
fn bad_ordering_names_k2() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = run_config(dir.path(), "bad", "k1 = 1.03\nk2 = 1.04\nk3 = 1.01\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k2"));
}

#[test]
fn missing_config_is_a_config_error() {
    let out = bin().args(["run", "/nonexistent/run.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{FIG2}ds = 1e-4\ns_max = 0.2\noutput_stride = 7\n");
    let (a, csv_a) = run_config(dir.path(), "a", &body);
    let (b, csv_b) = run_config(dir.path(), "b", &body);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert!(!csv_a.is_empty());
    assert_eq!(csv_a, csv_b);
}

#[test]
fn csv_round_trips_the_samples() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = run_config(dir.path(), "rt", &format!("{FIG2}ds = 1e-4\ns_max = 0.1\n"));
    assert_eq!(out.status.code(), Some(0));
    let rows = parse_csv(&csv).unwrap();

    let c = make_curve(1.04, 1.0392, 1.01, Case::A).unwrap();
    let init = default_init(&c, -0.9).unwrap();
    let cfg = IntegratorConfig { ds: 1e-4, s_max: 0.1, ..Default::default() };
    let r = integrate(&c, &init, &cfg).unwrap();
    assert_eq!(rows.len(), r.samples.len());
    for (row, x) in rows.iter().zip(&r.samples) {
        assert_eq!(row.s, x.s);
        assert_eq!(row.phi, x.state.phi);
        assert_eq!(row.sheet, x.state.sheet);
        assert_eq!(row.dpsi_i_du3, x.dpsi_i_du3);
        assert_eq!(row.gauge_a, x.gauge_a);
        assert_eq!(row.du[4], x.du_accum[2].re);
    }

    // at reduced precision the values agree to that many digits
    let (_, short) = run_config(dir.path(), "short", &format!("{FIG2}ds = 1e-4\ns_max = 0.1\nprecision = 6\n"));
    for (row, x) in parse_csv(&short).unwrap().iter().zip(&r.samples) {
        for (got, want) in row.phi.iter().zip(x.state.phi) {
            assert!((got - want).abs() <= 1e-5 * want.abs().max(1e-300));
        }
    }
}

#[test]
fn every_sheet_change_has_an_event() {
    let dir = tempfile::tempdir().unwrap();
    let (out, csv) = run_config(dir.path(), "ev", &format!("{FIG2}ds = 1e-4\ns_max = 4.5\n"));
    assert_eq!(out.status.code(), Some(0));
    let rows = parse_csv(&csv).unwrap();
    let events = std::fs::read_to_string(dir.path().join("ev.csv.events")).unwrap();
    let parsed: Vec<(f64, String, Vec<usize>)> = events
        .lines()
        .map(|l| {
            let mut it = l.split(' ');
            let s = it.next().unwrap().strip_prefix("s=").unwrap().parse().unwrap();
            let kind = it.next().unwrap().strip_prefix("type=").unwrap().to_string();
            let comps = it.next().unwrap().strip_prefix("comp=").unwrap().split(',').map(|c| c.parse().unwrap()).collect();
            (s, kind, comps)
        })
        .collect();
    assert!(parsed.iter().any(|e| e.1 == "collision"), "expected a collision by s = 4.5");
    let mut matched = 0;
    for w in rows.windows(2) {
        for a in 0..3 {
            if w[0].sheet[a] != w[1].sheet[a] {
                let n = parsed
                    .iter()
                    .filter(|e| e.0 >= w[0].s && e.0 < w[1].s && e.2.contains(&(a + 1)))
                    .count();
                assert_eq!(n, 1, "component {} flips between s = {} and {}", a + 1, w[0].s, w[1].s);
                matched += 1;
            }
        }
    }
    let touched: usize = parsed.iter().map(|e| e.2.len()).sum();
    assert_eq!(matched, touched);
}

#[test]
fn runtime_abort_exits_2_and_keeps_rows() {
    let dir = tempfile::tempdir().unwrap();
    // opposite sheets 1e-7 apart cannot be continued
    let body = "k1 = 1.04\nk2 = 1.0392\nk3 = 1.01\ninit = explicit\nphi1 = 0.3\nphi2 = -0.9\nphi3 = -0.8999999\n\
                g1 = 1\ng2 = 1\ng3 = -1\nds = 1e-5\ns_max = 0.1\n";
    let (out, csv) = run_config(dir.path(), "abort", body);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn verify_quick_passes() {
    let out = bin().args(["verify", "--level", "quick", "--seed", "11"]).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("basis_identity"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn verify_reports_an_injected_fault() {
    let out = bin().args(["verify", "--level", "full", "--inject-fault"]).output().unwrap();
    if cfg!(debug_assertions) {
        assert_eq!(out.status.code(), Some(3));
        assert!(String::from_utf8_lossy(&out.stderr).contains("basis_identity"));
    } else {
        assert_eq!(out.status.code(), Some(1));
    }
}

#[test]
fn figure_arguments() {
    let out = bin().args(["figure", "fig9"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["figure", "fig2", "--s-max", "0.01"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("reference 3.668940e0"));
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
