//! Command-line front end: run configurations, CSV and event output, the
//! verification suite and the canned figure runs.
//!
//! A run configuration is a flat list of `key = value` lines; `#` starts a
//! comment. Recognised keys:
//!
//! ```text
//! k1 k2 k3 case                     curve (case A or B)
//! init = default | explicit
//! phi_c                             default init: (phi_b, phi_c, phi_c)
//! phi1 phi2 phi3 g1 g2 g3           explicit init
//! ds s_max output_stride eps_branch eps_collision direction
//! branch_chart_width pair_chart_width experimental
//! csv events precision              output
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abelmat::{
    basis_identity_residual_with, det_closed_form, matKM, matL, transform_D, transform_D_inverse,
    BasisVectorsC3, CMat3, PhaseState, C64,
};
use crate::curve::{kprime, ktilde, make_curve, Case, CurveParams, CurvePointHat};
use crate::error::{Error, Result};
use crate::observe::{abel_increment, gauge_a, psi_r, OrbitSample};
use crate::orbit::{default_init, integrate, Direction, EventKind, IntegratorConfig, OrbitResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORT: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

pub const CSV_HEADER: &str = "s,phi1,phi2,phi3,g1,g2,g3,psi_r,dpsi_r_ds,dpsi_i_du3,psi_i_circ,gauge_A,\
du1_re,du1_im,du2_re,du2_im,du3_re,du3_im";

/// Significant digits written to the CSV unless the config says otherwise; enough
/// for a lossless round trip of `f64`.
pub const DEFAULT_PRECISION: usize = 17;

#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    Default { phi_c: f64 },
    Explicit { phi: [f64; 3], sheet: [i8; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: [f64; 3],
    pub case: Case,
    pub init: InitMode,
    pub integrator: IntegratorConfig,
    pub csv: PathBuf,
    pub events: PathBuf,
    pub precision: usize,
}

const KEYS: &[&str] = &[
    "k1", "k2", "k3", "case", "init", "phi_c", "phi1", "phi2", "phi3", "g1", "g2", "g3", "ds",
    "s_max", "output_stride", "eps_branch", "eps_collision", "direction", "branch_chart_width",
    "pair_chart_width", "experimental", "csv", "events", "precision",
];

fn cfg_err(field: &str, detail: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), detail: detail.into() }
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| cfg_err(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| cfg_err(key, "missing"))
    }
}

fn parse_sheet(fields: &Fields, key: &str) -> Result<i8> {
    let g: i64 = fields.require(key)?;
    match g {
        1 => Ok(1),
        -1 => Ok(-1),
        _ => Err(cfg_err(key, format!("sheet must be 1 or -1, got {g}"))),
    }
}

fn parse_bool(fields: &Fields, key: &str) -> Result<Option<bool>> {
    let Some(v) = fields.0.get(key) else { return Ok(None) };
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(Some(true)),
        "false" | "0" | "no" => Ok(Some(false)),
        _ => Err(cfg_err(key, format!("expected true or false, got `{v}`"))),
    }
}

impl RunConfig {
    /// Parses and validates a configuration. Curve ordering is checked here too, so
    /// a bad `k2` is reported as a config error on `k2`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(cfg_err(&format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")));
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(cfg_err(key, "unknown key"));
            }
            if map.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(cfg_err(key, "given more than once"));
            }
        }
        let f = Fields(map);

        let k = [f.require("k1")?, f.require("k2")?, f.require("k3")?];
        let case: Case = f.get("case")?.unwrap_or(Case::A);
        make_curve(k[0], k[1], k[2], case).map_err(|e| match e {
            Error::OrderingViolation { field, detail } => cfg_err(field, detail),
            other => other,
        })?;

        let mode: String = f.get("init")?.unwrap_or_else(|| "default".to_string());
        let init = match mode.as_str() {
            "default" => InitMode::Default { phi_c: f.get("phi_c")?.unwrap_or(-0.90) },
            "explicit" => InitMode::Explicit {
                phi: [f.require("phi1")?, f.require("phi2")?, f.require("phi3")?],
                sheet: [parse_sheet(&f, "g1")?, parse_sheet(&f, "g2")?, parse_sheet(&f, "g3")?],
            },
            other => return Err(cfg_err("init", format!("expected default or explicit, got `{other}`"))),
        };

        let d = IntegratorConfig::default();
        let integrator = IntegratorConfig {
            ds: f.get("ds")?.unwrap_or(d.ds),
            s_max: f.get("s_max")?.unwrap_or(d.s_max),
            eps_branch: f.get("eps_branch")?.unwrap_or(d.eps_branch),
            eps_collision: f.get("eps_collision")?.unwrap_or(d.eps_collision),
            output_stride: f.get("output_stride")?.unwrap_or(d.output_stride),
            direction: f.get::<Direction>("direction")?.unwrap_or(d.direction),
            branch_chart_width: f.get("branch_chart_width")?.unwrap_or(d.branch_chart_width),
            pair_chart_width: f.get("pair_chart_width")?.unwrap_or(d.pair_chart_width),
            experimental: parse_bool(&f, "experimental")?.unwrap_or(d.experimental),
        };
        integrator.validate()?;

        let csv: PathBuf = f.get::<String>("csv")?.unwrap_or_else(|| "orbit.csv".into()).into();
        let events = match f.get::<String>("events")? {
            Some(p) => PathBuf::from(p),
            None => {
                let mut p = csv.clone().into_os_string();
                p.push(".events");
                PathBuf::from(p)
            }
        };
        let precision = f.get("precision")?.unwrap_or(DEFAULT_PRECISION);
        if !(1..=17).contains(&precision) {
            return Err(cfg_err("precision", format!("must be in 1..=17, got {precision}")));
        }
        Ok(RunConfig { k, case, init, integrator, csv, events, precision })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn curve(&self) -> Result<CurveParams> {
        make_curve(self.k[0], self.k[1], self.k[2], self.case)
    }

    pub fn initial_state(&self, curve: &CurveParams) -> Result<PhaseState> {
        match &self.init {
            InitMode::Default { phi_c } => {
                default_init(curve, *phi_c).map_err(|e| cfg_err("phi_c", e.to_string()))
            }
            InitMode::Explicit { phi, sheet } => {
                PhaseState::new(curve, *phi, *sheet).map_err(|e| cfg_err("phi1", e.to_string()))
            }
        }
    }
}

fn num(out: &mut String, x: f64, precision: usize) {
    let _ = write!(out, "{:.*e}", precision - 1, x);
}

/// The CSV text for `samples`: header plus one row per sample.
pub fn csv_string(samples: &[OrbitSample], precision: usize) -> String {
    let mut out = String::with_capacity(64 + samples.len() * 18 * (precision + 8));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for x in samples {
        let mut first = true;
        let mut field = |out: &mut String, v: f64| {
            if !first {
                out.push(',');
            }
            first = false;
            num(out, v, precision);
        };
        field(&mut out, x.s);
        for p in x.state.phi {
            field(&mut out, p);
        }
        for g in x.state.sheet {
            let _ = write!(out, ",{g}");
        }
        for v in [x.psi_r, x.dpsi_r_ds, x.dpsi_i_du3, x.psi_i_circ, x.gauge_a] {
            field(&mut out, v);
        }
        for z in x.du_accum.iter() {
            field(&mut out, z.re);
            field(&mut out, z.im);
        }
        out.push('\n');
    }
    out
}

/// One parsed CSV row, in header order, with the sheets as integers.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub s: f64,
    pub phi: [f64; 3],
    pub sheet: [i8; 3],
    pub psi_r: f64,
    pub dpsi_r_ds: f64,
    pub dpsi_i_du3: f64,
    pub psi_i_circ: f64,
    pub gauge_a: f64,
    pub du: [f64; 6],
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Io(format!("unexpected CSV header {other:?}"))),
    }
    let bad = |n: usize, what: &str| Error::Io(format!("CSV row {n}: {what}"));
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 18 {
            return Err(bad(n + 1, "expected 18 columns"));
        }
        let r = |i: usize| cols[i].parse::<f64>().map_err(|e| bad(n + 1, &e.to_string()));
        let g = |i: usize| cols[i].parse::<i8>().map_err(|e| bad(n + 1, &e.to_string()));
        rows.push(CsvRow {
            s: r(0)?,
            phi: [r(1)?, r(2)?, r(3)?],
            sheet: [g(4)?, g(5)?, g(6)?],
            psi_r: r(7)?,
            dpsi_r_ds: r(8)?,
            dpsi_i_du3: r(9)?,
            psi_i_circ: r(10)?,
            gauge_a: r(11)?,
            du: [r(12)?, r(13)?, r(14)?, r(15)?, r(16)?, r(17)?],
        });
    }
    Ok(rows)
}

/// One line per event: `s=<val> type=branch comp=<a>` or `type=collision comp=<a,b>`,
/// with 1-based components.
pub fn events_string(result: &OrbitResult, precision: usize) -> String {
    let mut out = String::new();
    for ev in &result.events {
        out.push_str("s=");
        num(&mut out, ev.s, precision);
        match ev.kind {
            EventKind::Branch { component } => {
                let _ = writeln!(out, " type=branch comp={}", component + 1);
            }
            EventKind::Collision { a, b } => {
                let (a, b) = (a.min(b), a.max(b));
                let _ = writeln!(out, " type=collision comp={},{}", a + 1, b + 1);
            }
        }
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Runs a configuration file end to end and returns the process exit code.
pub fn cmd_run(config: &Path) -> i32 {
    let cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let setup = cfg.curve().and_then(|c| cfg.initial_state(&c).map(|s| (c, s)));
    let (curve, init) = match setup {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = match integrate(&curve, &init, &cfg.integrator) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let written = write_file(&cfg.csv, &csv_string(&result.samples, cfg.precision))
        .and_then(|_| write_file(&cfg.events, &events_string(&result, cfg.precision)));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    println!(
        "steps={} samples={} events={} max|dpsi_r_ds|={:.6e} max|dpsi_i_du3|={:.6e}",
        result.steps,
        result.samples.len(),
        result.events.len(),
        result.max_abs_dpsi_r,
        result.max_abs_dpsi_i
    );
    match result.abort {
        None => EXIT_OK,
        Some(e) => {
            eprintln!("integration aborted: {e}; partial output kept in {}", cfg.csv.display());
            EXIT_ABORT
        }
    }
}

// ---------------------------------------------------------------------------
// verification suite

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyLevel {
    Quick,
    Full,
}

impl VerifyLevel {
    pub fn samples(self) -> usize {
        match self {
            VerifyLevel::Quick => 100,
            VerifyLevel::Full => 10_000,
        }
    }
}

/// Deliberate corruption used to check that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the first row of `L` before the identity checks.
    FlipLRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub curve: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

/// A valid case-A curve with every modulus drawn uniformly from `(1, 1.2)`.
pub fn random_curve<R: Rng>(rng: &mut R) -> CurveParams {
    loop {
        let mut k = [0.0f64; 3];
        for ka in &mut k {
            *ka = rng.gen_range(1.0..1.2);
        }
        k.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if let Ok(c) = make_curve(k[0], k[1], k[2], Case::A) {
            if k[0] - k[1] > 1e-4 && k[1] - k[2] > 1e-4 && k[2] > 1.0 + 1e-4 {
                return c;
            }
        }
    }
}

/// A random state with angles in `0.95` of the arc, pairwise separated by at
/// least `0.05` in `|sin|`, and independent random sheets.
pub fn random_state<R: Rng>(rng: &mut R, curve: &CurveParams) -> PhaseState {
    let lim = 0.95 * curve.phi_b_plus;
    loop {
        let phi = [rng.gen_range(-lim..lim), rng.gen_range(-lim..lim), rng.gen_range(-lim..lim)];
        let sheet = [0; 3].map(|_: i8| if rng.gen::<bool>() { 1 } else { -1 });
        let sep = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(a, b)| (phi[a] - phi[b]).sin().abs())
            .fold(f64::INFINITY, f64::min);
        if sep < 0.05 {
            continue;
        }
        if let Ok(s) = PhaseState::new(curve, phi, sheet) {
            return s;
        }
    }
}

fn corrupt(l: CMat3, fault: Option<Fault>) -> CMat3 {
    match fault {
        Some(Fault::FlipLRow) => {
            let mut l = l;
            for j in 0..3 {
                l[(0, j)] = -l[(0, j)];
            }
            l
        }
        None => l,
    }
}

fn curve_label(c: &CurveParams) -> String {
    format!("({}, {}, {})", c.k[0], c.k[1], c.k[2])
}

/// Runs every property on `n` random states of `curve`.
pub fn verify_curve<R: Rng>(
    curve: &CurveParams,
    n: usize,
    rng: &mut R,
    fault: Option<Fault>,
) -> Result<Vec<PropertyResult>> {
    let mut worst = [0.0f64; 8];
    for _ in 0..n {
        let st = random_state(rng, curve);
        let l = corrupt(matL(curve, &st)?, fault);

        for a in 0..3 {
            let p = CurvePointHat { phi: st.phi[a], sheet: st.sheet[a] };
            worst[0] = worst[0].max(p.curve_residual(curve)?);
        }
        worst[1] = worst[1].max(basis_identity_residual_with(curve, &st, &l)?);
        let km = matKM(curve, &st)?;
        worst[2] = worst[2].max((km * l - CMat3::identity()).camax());
        let det = det_closed_form(curve, &st)?;
        worst[3] = worst[3].max((l.determinant() - det).norm() / det.norm());

        // central differences of sheet * K~ at a random interior point
        let phi = rng.gen_range(-0.95..0.95) * curve.phi_b_plus;
        let h = 1e-5;
        let g = st.sheet[0];
        let kk = |x: f64| ktilde(curve, x).map(|v| f64::from(g) * v);
        let fd = (kk(phi + h)? - kk(phi - h)?) / (2.0 * h);
        let kp = kprime(curve, phi, g)?;
        worst[4] = worst[4].max((kp - fd).abs() / kp.abs().max(1e-3));

        let du = if fault.is_some() {
            let dphi = (crate::abelmat::matC(&st) * crate::abelmat::vecV(curve, &st, 1)?).map(C64::from);
            l * dphi
        } else {
            abel_increment(curve, &st, 1.0)?
        };
        worst[5] = worst[5].max((du - BasisVectorsC3::get(1)).camax());

        let v = crate::abelmat::CVec3::new(
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        );
        worst[6] = worst[6].max((transform_D_inverse(&transform_D(&v)) - v).camax());

        let mut flipped = st;
        flipped.sheet = st.sheet.map(|g| -g);
        let ga = gauge_a(curve, &st)?;
        let gb = gauge_a(curve, &flipped)?;
        let pr = psi_r(&st) - psi_r(&st.permuted([2, 0, 1]));
        worst[7] = worst[7].max((ga - gb).abs()).max(pr.abs());
    }
    let label = curve_label(curve);
    let table: [(&'static str, f64); 8] = [
        ("curve_equation", 1e-10),
        ("basis_identity LCV_i=e_i", 1e-10),
        ("km_inverse KM*L=I", 1e-10),
        ("det_closed_form", 1e-10),
        ("kprime_vs_finite_difference", 1e-6),
        ("abel_increment=e1*ds", 1e-10),
        ("transform_D_roundtrip", 1e-14),
        ("gauge_parity_and_psi_r_symmetry", 1e-12),
    ];
    Ok(table
        .iter()
        .zip(worst)
        .map(|(&(name, tolerance), max_residual)| PropertyResult {
            name,
            curve: label.clone(),
            max_residual,
            tolerance,
            samples: n,
        })
        .collect())
}

/// The whole suite: the Figure-2 curve and one random curve, `level.samples()` states each.
pub fn run_verify(level: VerifyLevel, seed: u64, fault: Option<Fault>) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fig2 = make_curve(1.0400, 1.0392, 1.010, Case::A)?;
    let random = random_curve(&mut rng);
    let mut rng2 = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let n = level.samples();
    // the two curves are independent, so run them side by side
    let (a, b) = std::thread::scope(|s| {
        let h = s.spawn(|| verify_curve(&random, n, &mut rng2, fault));
        let a = verify_curve(&fig2, n, &mut rng, fault);
        (a, h.join().expect("verify thread panicked"))
    });
    let mut out = a?;
    out.extend(b?);
    Ok(out)
}

pub fn cmd_verify(level: VerifyLevel, seed: u64, fault: Option<Fault>) -> i32 {
    let t0 = Instant::now();
    let results = match run_verify(level, seed, fault) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VERIFY;
        }
    };
    for r in &results {
        println!(
            "{} {:<34} curve={} n={} max_residual={:.3e} tol={:.0e}",
            if r.passed() { "ok  " } else { "FAIL" },
            r.name,
            r.curve,
            r.samples,
            r.max_residual,
            r.tolerance
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    println!("verify finished in {:.2}s", t0.elapsed().as_secs_f64());
    if failed.is_empty() {
        EXIT_OK
    } else {
        let mut names = failed.clone();
        names.dedup();
        eprintln!("failed properties: {}", names.join(", "));
        EXIT_VERIFY
    }
}

// ---------------------------------------------------------------------------
// canned figure runs

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure {
    pub name: &'static str,
    pub k: [f64; 3],
    pub phi_c: f64,
    /// Published maxima `(max|dpsi_r_ds|, max|dpsi_i_du3|)`, where given.
    pub reference: Option<(f64, f64)>,
}

pub const FIG2: Figure = Figure {
    name: "fig2",
    k: [1.0400, 1.0392, 1.010],
    phi_c: -0.90,
    reference: Some((3.66894, 1.00952e-2)),
};

pub const FIG3: Figure =
    Figure { name: "fig3", k: [1.0260, 1.0259, 1.0008], phi_c: -0.90, reference: None };

/// Horizon for figure runs. Long enough for several branch flips of every component.
pub const FIGURE_S_MAX: f64 = 20.0;
pub const FIGURE_DS: f64 = 1e-5;
/// Only every this many steps is kept in figure CSVs.
pub const FIGURE_STRIDE: usize = 100;

pub fn figure_by_name(name: &str) -> Option<Figure> {
    match name {
        "fig2" => Some(FIG2),
        "fig3" => Some(FIG3),
        _ => None,
    }
}

pub fn run_figure(fig: &Figure, ds: f64, s_max: f64, stride: usize) -> Result<OrbitResult> {
    let curve = make_curve(fig.k[0], fig.k[1], fig.k[2], Case::A)?;
    let init = default_init(&curve, fig.phi_c)?;
    let cfg = IntegratorConfig { ds, s_max, output_stride: stride, ..Default::default() };
    integrate(&curve, &init, &cfg)
}

fn ratio(r: &OrbitResult) -> f64 {
    r.max_abs_dpsi_i / r.max_abs_dpsi_r
}

pub fn cmd_figure(name: &str, ds: f64, s_max: f64, out: Option<&Path>) -> i32 {
    let Some(fig) = figure_by_name(name) else {
        eprintln!("error: unknown figure `{name}` (expected fig2 or fig3)");
        return EXIT_CONFIG;
    };
    let t0 = Instant::now();
    let result = match run_figure(&fig, ds, s_max, FIGURE_STRIDE) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let branch = result.events.iter().filter(|e| matches!(e.kind, EventKind::Branch { .. })).count();
    let coll = result.events.len() - branch;
    println!(
        "{}: k = ({}, {}, {}), init = (phi_b, {}, {}), ds = {ds:e}, s_max = {s_max}",
        fig.name, fig.k[0], fig.k[1], fig.k[2], fig.phi_c, fig.phi_c
    );
    println!("steps = {}, branch events = {branch}, collisions = {coll}, {:.2}s", result.steps, t0.elapsed().as_secs_f64());
    match fig.reference {
        Some((r, i)) => {
            println!("max|dpsi_r_ds|  = {:.6e}   (reference {r:.6e})", result.max_abs_dpsi_r);
            println!("max|dpsi_i_du3| = {:.6e}   (reference {i:.6e})", result.max_abs_dpsi_i);
        }
        None => {
            println!("max|dpsi_r_ds|  = {:.6e}", result.max_abs_dpsi_r);
            println!("max|dpsi_i_du3| = {:.6e}", result.max_abs_dpsi_i);
        }
    }
    println!("ratio max|dpsi_i_du3| / max|dpsi_r_ds| = {:.6e}", ratio(&result));
    if fig.name == "fig3" {
        match run_figure(&FIG2, ds, s_max, usize::MAX) {
            Ok(f2) => println!(
                "fig2 ratio at the same ds and s_max = {:.6e} ({})",
                ratio(&f2),
                if ratio(&result) > ratio(&f2) { "fig3 larger" } else { "fig3 not larger" }
            ),
            Err(e) => eprintln!("fig2 comparison failed: {e}"),
        }
    }
    if let Some(path) = out {
        let mut ev = path.to_path_buf().into_os_string();
        ev.push(".events");
        let written = write_file(path, &csv_string(&result.samples, DEFAULT_PRECISION))
            .and_then(|_| write_file(Path::new(&ev), &events_string(&result, DEFAULT_PRECISION)));
        if let Err(e) = written {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }
    match result.abort {
        None => EXIT_OK,
        Some(e) => {
            eprintln!("integration aborted: {e}");
            EXIT_ABORT
        }
    }
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(name = "mkdv-orbit", version, about = "Real genus-three orbits and their observables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the orbit described by a config file and write CSV plus events.
    Run { config: PathBuf },
    /// Check the matrix and curve identities on random states.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: VerifyLevel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt a row of L to check that failures are reported (debug builds only).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Run one of the canned figure configurations.
    Figure {
        which: String,
        #[arg(long, default_value_t = FIGURE_DS)]
        ds: f64,
        #[arg(long = "s-max", default_value_t = FIGURE_S_MAX)]
        s_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { level, seed, inject_fault } => {
            let fault = if inject_fault {
                if cfg!(debug_assertions) {
                    Some(Fault::FlipLRow)
                } else {
                    eprintln!("error: --inject-fault is only available in debug builds");
                    return EXIT_CONFIG;
                }
            } else {
                None
            };
            cmd_verify(level, seed, fault)
        }
        Command::Figure { which, ds, s_max, out } => cmd_figure(&which, ds, s_max, out.as_deref()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "k1 = 1.04\nk2 = 1.0392\nk3 = 1.010\n";

    #[test]
    fn parse_defaults() {
        let c = RunConfig::parse(&format!("{BASE}# comment\n\ns_max = 0.5 # trailing\n")).unwrap();
        assert_eq!(c.integrator.s_max, 0.5);
        assert_eq!(c.init, InitMode::Default { phi_c: -0.9 });
        assert_eq!(c.precision, 17);
        assert_eq!(c.events, PathBuf::from("orbit.csv.events"));
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::parse("k1 = 1.03\nk2 = 1.04\nk3 = 1.01\n").unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "k2"), "{e}");
        let e = RunConfig::parse(&format!("{BASE}ds = fast\n")).unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "ds"));
        let e = RunConfig::parse(&format!("{BASE}colour = red\n")).unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "colour"));
        let e = RunConfig::parse(&format!("{BASE}init = explicit\nphi1=0.1\nphi2=0.2\nphi3=0.3\ng1=1\ng2=2\ng3=1\n"))
            .unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "g2"));
        let e = RunConfig::parse(&format!("{BASE}precision = 30\n")).unwrap_err();
        assert!(matches!(&e, Error::Config { field, .. } if field == "precision"));
    }

    #[test]
    fn csv_format() {
        let c = make_curve(1.04, 1.0392, 1.01, Case::A).unwrap();
        let st = default_init(&c, -0.9).unwrap();
        let cfg = IntegratorConfig { s_max: 0.0, ..Default::default() };
        let r = integrate(&c, &st, &cfg).unwrap();
        let text = csv_string(&r.samples, 17);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row = lines.next().unwrap();
        assert!(row.starts_with("0.0000000000000000e0,1.29254950406009"));
        assert!(row.contains(",-1,1,1,"));
        assert_eq!(lines.next(), None);
        let back = parse_csv(&text).unwrap();
        assert_eq!(back[0].phi, st.phi);
        assert_eq!(back[0].sheet, st.sheet);
    }

    #[test]
    fn events_format() {
        use crate::orbit::Event;
        let r = OrbitResult {
            samples: vec![],
            events: vec![
                Event { s: 0.5, kind: EventKind::Branch { component: 0 }, step: 1 },
                Event { s: 2.0, kind: EventKind::Collision { a: 2, b: 1 }, step: 2 },
            ],
            collisions: vec![],
            steps: 0,
            max_abs_dpsi_r: 0.0,
            max_abs_dpsi_i: 0.0,
            abort: None,
        };
        assert_eq!(events_string(&r, 3), "s=5.00e-1 type=branch comp=1\ns=2.00e0 type=collision comp=2,3\n");
    }

    #[test]
    fn random_curves_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let c = random_curve(&mut rng);
            assert!(c.k[0] > c.k[1] && c.k[1] > c.k[2] && c.k[2] > 1.0 && c.k[0] < 1.2);
        }
    }

    #[test]
    fn fault_is_detected() {
        let c = make_curve(1.04, 1.0392, 1.01, Case::A).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let res = verify_curve(&c, 5, &mut rng, Some(Fault::FlipLRow)).unwrap();
        let bad: Vec<_> = res.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
        assert!(bad.contains(&"basis_identity LCV_i=e_i"));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(verify_curve(&c, 5, &mut rng, None).unwrap().iter().all(PropertyResult::passed));
    }
}
