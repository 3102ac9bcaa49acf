//! Command dispatch for the `cocycle-lab` binary.
//!
//! Exit status: 0 when every check passes (negative verdicts included),
//! 1 on a consistency violation, 2 on a usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::asymp::{
    cell_density_basis, detect_periodicity, dyadic_runs, quasi_constrictive_probe, restricted_power_exactness,
    stability_check, PeriodicityOptions, PeriodicityOutcome,
};
use crate::driving::EnvPoint;
use crate::error::{Error, Result};
use crate::exactness::exactness_report;
use crate::mixing::{
    baker_counterexample, difference_basis, estimate_mixing, four_verdicts, homogeneous_basis, step_basis, MixingOptions,
    Notion,
};
use crate::scenario::{parse_sets, parse_with_seed, Scenario};
use crate::skewprod::skew_mixing_curve;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INCONSISTENT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cocycle-lab", version, about = "Mixing, exactness and asymptotic periodicity of Markov operator cocycles")]
pub struct Cli {
    /// Worker threads for the estimators (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub scenario: PathBuf,
    /// CSV destination; defaults to the scenario output dir, then stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Replaces every seed in the scenario.
    #[arg(long)]
    pub seed_override: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Correlation curves for one or all four mixing notions.
    RunMixing {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        notion: Option<Notion>,
        /// Sampled points whose curves go to the CSV; verdicts use all.
        #[arg(long, default_value_t = 1)]
        curve_omegas: usize,
    },
    /// Norm, dual-ball and tail-partition exactness tests.
    RunExactness {
        #[command(flatten)]
        common: Common,
    },
    /// Asymptotic periodicity detection.
    RunAsymp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rmax: Option<usize>,
    },
    /// Quasi-constrictivity probe over dyadic runs of cells.
    RunQc {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Skew-product mixing curves for the set pairs of a sets file.
    RunSkew {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sets: PathBuf,
    },
    /// The cyclic baker counterexample: inhomogeneous correlations along one orbit.
    RunCounterexample {
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All verdicts plus the cross-consistency suite.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_USAGE;
        }
        // A second build in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let name = command_name(&cli.command);
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {name}: {e}");
            EXIT_USAGE
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::RunMixing { .. } => "run-mixing",
        Command::RunExactness { .. } => "run-exactness",
        Command::RunAsymp { .. } => "run-asymp",
        Command::RunQc { .. } => "run-qc",
        Command::RunSkew { .. } => "run-skew",
        Command::RunCounterexample { .. } => "run-counterexample",
        Command::Report { .. } => "report",
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::RunMixing {
            common,
            notion,
            curve_omegas,
        } => run_mixing(&common, notion, curve_omegas),
        Command::RunExactness { common } => run_exactness(&common),
        Command::RunAsymp { common, rmax } => run_asymp(&common, rmax),
        Command::RunQc { common, eps } => run_qc(&common, eps),
        Command::RunSkew { common, sets } => run_skew(&common, &sets),
        Command::RunCounterexample { k, horizon, out } => run_counterexample(k, horizon, out.as_deref()),
        Command::Report { common } => report(&common),
    }
}

/// Loads the scenario and applies the command-line overrides.
pub fn load(common: &Common) -> Result<Scenario> {
    let text = std::fs::read_to_string(&common.scenario)
        .map_err(|e| Error::Io(format!("{}: {e}", common.scenario.display())))?;
    let stem = common
        .scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let mut s = match common.seed_override {
        Some(seed) => parse_with_seed(&text, &stem, seed)?,
        None => Scenario::parse(&text, &stem)?,
    };
    if let Some(h) = common.horizon {
        if h == 0 {
            return Err(Error::Horizon("horizon must be at least 1".into()));
        }
        s.analysis.horizon = h;
    }
    if let Some(t) = common.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Precondition(format!("tolerance must be positive, got {t}")));
        }
        s.analysis.tol = t;
    }
    Ok(s)
}

/// Fixed-format float: plain decimal in `[1e-4, 1e15)`, scientific outside.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

struct Sink {
    writer: csv::Writer<Box<dyn Write>>,
}

impl Sink {
    fn open(out: Option<&Path>, scenario: Option<&Scenario>, default_file: &str, header: &[&str]) -> Result<Self> {
        let path = match (out, scenario.and_then(|s| s.output_dir.as_ref())) {
            (Some(p), _) => Some(p.to_path_buf()),
            (None, Some(dir)) => {
                std::fs::create_dir_all(dir)?;
                Some(dir.join(default_file))
            }
            (None, None) => None,
        };
        let inner: Box<dyn Write> = match path {
            Some(p) => Box::new(std::io::BufWriter::new(
                std::fs::File::create(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
            )),
            None => Box::new(std::io::stdout()),
        };
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(header)?;
        Ok(Sink { writer })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

fn verdict(b: bool, yes: &str, no: &str) -> String {
    if b { yes.into() } else { no.into() }
}

fn run_mixing(common: &Common, notion: Option<Notion>, curve_omegas: usize) -> Result<i32> {
    let s = load(common)?;
    let a = &s.analysis;
    let samples = s.env_points()?;
    let c = &s.cocycle;
    let f_basis = difference_basis(c.space());
    let hom = homogeneous_basis(c.space());
    let inhom = step_basis(c.driving(), c.space());
    let notions: Vec<Notion> = match notion {
        Some(n) => vec![n],
        None => Notion::FOUR.to_vec(),
    };
    let opts = MixingOptions::new(a.horizon, a.tol);
    let curve_opts = MixingOptions {
        keep_curves: true,
        ..opts
    };
    let shown = &samples[..curve_omegas.min(samples.len())];
    let mut sink = Sink::open(
        common.out.as_deref(),
        Some(&s),
        "mixing.csv",
        &["notion", "omega_id", "f_id", "g_id", "n", "value"],
    )?;
    for notion in notions {
        let g = if notion.is_homogeneous() { &hom } else { &inhom };
        let rep = estimate_mixing(c, notion, &f_basis, g, &samples, &opts)?;
        eprintln!(
            "{notion}: {} (tail max {}, rate {}, {} curves over {} points)",
            verdict(rep.decayed, "mixing", "not mixing"),
            fmt_f64(rep.tail_max),
            rep.rate.map(fmt_f64).unwrap_or_else(|| "none".into()),
            rep.curve_count,
            samples.len()
        );
        if shown.is_empty() {
            continue;
        }
        let curves = estimate_mixing(c, notion, &f_basis, g, shown, &curve_opts)?;
        let label = notion.to_string();
        for cv in &curves.curves {
            let (o, f, gid) = (cv.omega_id.to_string(), cv.f_id.to_string(), cv.g_id.to_string());
            for (n, v) in cv.values.iter().enumerate() {
                sink.row([label.as_str(), &o, &f, &gid, &n.to_string(), &fmt_f64(*v)])?;
            }
        }
    }
    sink.finish()?;
    Ok(EXIT_OK)
}

fn run_exactness(common: &Common) -> Result<i32> {
    let s = load(common)?;
    let a = &s.analysis;
    let samples = s.env_points()?;
    let rep = exactness_report(&s.cocycle, &samples, a.horizon, a.tol)?;
    let mut sink = Sink::open(
        common.out.as_deref(),
        Some(&s),
        "exactness.csv",
        &["omega_id", "test", "n", "value_or_flag"],
    )?;
    for p in &rep.points {
        let id = p.omega_id.to_string();
        for n in 0..=rep.horizon {
            let v = p.norms.curves.iter().map(|c| c[n]).fold(0.0, f64::max);
            sink.row([id.as_str(), "norm", &n.to_string(), &fmt_f64(v)])?;
        }
        sink.row([id.as_str(), "norm", "verdict", &verdict(p.norms.decayed(rep.tol), "exact", "not_exact")])?;
        for (n, v) in p.dual.diameter.iter().enumerate() {
            sink.row([id.as_str(), "lin", &n.to_string(), &fmt_f64(*v)])?;
        }
        sink.row([id.as_str(), "lin", "verdict", &verdict(p.dual.trivial(rep.tol), "trivial", "nontrivial")])?;
        match &p.tail {
            Some(t) => {
                for (n, v) in t.atoms.iter().enumerate() {
                    sink.row([id.as_str(), "tail", &n.to_string(), &v.to_string()])?;
                }
                sink.row([id.as_str(), "tail", "verdict", &verdict(t.trivial(), "trivial", "nontrivial")])?;
            }
            None => sink.row([id.as_str(), "tail", "verdict", "not_map_derived"])?,
        }
    }
    sink.finish()?;
    eprintln!("norm: {}", verdict(rep.exact, "exact", "not exact"));
    eprintln!("lin: {}", verdict(rep.lin_trivial, "trivial", "nontrivial"));
    eprintln!(
        "tail: {}",
        match rep.tail_trivial {
            Some(t) => verdict(t, "trivial", "nontrivial"),
            None => "not map-derived".into(),
        }
    );
    if rep.agreement {
        Ok(EXIT_OK)
    } else {
        eprintln!("inconsistent: exactness tests disagree");
        Ok(EXIT_INCONSISTENT)
    }
}

/// `ρ` in cycle notation over 0-based component labels, e.g. `(0 1)(2)`.
pub fn cycle_notation(rho: &[usize]) -> String {
    let mut seen = vec![false; rho.len()];
    let mut out = String::new();
    for start in 0..rho.len() {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            cycle.push(i.to_string());
            i = rho[i];
        }
        out.push('(');
        out.push_str(&cycle.join(" "));
        out.push(')');
    }
    out
}

fn periodicity_options(s: &Scenario, rmax: Option<usize>) -> PeriodicityOptions {
    let a = &s.analysis;
    let mut o = PeriodicityOptions::new(s.space.len(), a.horizon, rmax.unwrap_or(a.r_max));
    if let Some(b) = a.burn_in {
        o.burn_in = b;
    }
    o.support_floor = a.support_floor;
    o
}

fn run_asymp(common: &Common, rmax: Option<usize>) -> Result<i32> {
    let s = load(common)?;
    let samples = s.env_points()?;
    let opts = periodicity_options(&s, rmax);
    let outcome = detect_periodicity(&s.cocycle, &samples, &opts)?;
    let mut sink = Sink::open(
        common.out.as_deref(),
        Some(&s),
        "asymp.csv",
        &["omega_id", "r", "rho", "residual"],
    )?;
    match &outcome {
        PeriodicityOutcome::Found(d) => {
            let res = fmt_f64(d.residual);
            for (i, rho) in d.rho.iter().enumerate() {
                sink.row([&i.to_string(), &d.r.to_string(), &cycle_notation(rho), &res])?;
            }
            eprintln!(
                "r = {}, residual {}, rho {}, stable: {}",
                d.r,
                res,
                if d.rho_constant() { "constant" } else { "varies" },
                stability_check(d)
            );
        }
        PeriodicityOutcome::NoneFound {
            components,
            best_residual,
        } => {
            sink.row(["all", "none", "", &fmt_f64(*best_residual)])?;
            eprintln!(
                "no decomposition with r <= {} ({components} components, best residual {})",
                opts.r_max,
                fmt_f64(*best_residual)
            );
        }
        PeriodicityOutcome::Indeterminate { omega_id, detail } => {
            sink.row([&omega_id.to_string(), "indeterminate", "", ""])?;
            eprintln!("indeterminate at omega {omega_id}: {detail}");
        }
    }
    sink.finish()?;
    Ok(EXIT_OK)
}

fn run_qc(common: &Common, eps: Option<Vec<f64>>) -> Result<i32> {
    let s = load(common)?;
    let a = &s.analysis;
    let samples = s.env_points()?;
    let grid = eps.unwrap_or_else(|| a.eps_grid.clone());
    let family = dyadic_runs(s.space.len(), a.qc_max_cells);
    let basis = cell_density_basis(&s.cocycle);
    let rep = quasi_constrictive_probe(&s.cocycle, &grid, &family, &basis, &samples, a.horizon)?;
    let mut sink = Sink::open(
        common.out.as_deref(),
        Some(&s),
        "qc.csv",
        &["eps", "delta", "passed", "witness_cells", "witness_mass"],
    )?;
    for r in &rep.rows {
        let (cells, mass) = match &r.witness {
            Some((cells, m)) => (
                cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "),
                fmt_f64(*m),
            ),
            None => (String::new(), String::new()),
        };
        sink.row([
            fmt_f64(r.eps),
            r.delta.map(fmt_f64).unwrap_or_default(),
            r.passed.to_string(),
            cells,
            mass,
        ])?;
    }
    sink.finish()?;
    eprintln!(
        "{} over {} points",
        verdict(rep.quasi_constrictive, "quasi-constrictive", "not quasi-constrictive"),
        rep.samples
    );
    Ok(EXIT_OK)
}

fn run_skew(common: &Common, sets: &Path) -> Result<i32> {
    let s = load(common)?;
    let a = &s.analysis;
    let text = std::fs::read_to_string(sets).map_err(|e| Error::Io(format!("{}: {e}", sets.display())))?;
    let pairs = parse_sets(&text, &s.cocycle)?;
    let h = s.invariant_density()?;
    let mc = s.monte_carlo();
    let mut sink = Sink::open(
        common.out.as_deref(),
        Some(&s),
        "skew.csv",
        &["set_pair_id", "n", "nu_joint", "nu_product", "discrepancy"],
    )?;
    for p in &pairs {
        let curve = skew_mixing_curve(&s.cocycle, &h, &p.a, &p.b, a.horizon, &mc)?;
        for r in &curve.rows {
            sink.row([
                p.id.clone(),
                r.n.to_string(),
                fmt_f64(r.nu_joint),
                fmt_f64(r.nu_product),
                fmt_f64(r.discrepancy),
            ])?;
        }
        eprintln!(
            "{}: {} (tail max {}{}){}",
            p.id,
            verdict(curve.decayed(a.tol), "decayed", "not decayed"),
            fmt_f64(curve.tail_max),
            if curve.exact { ", exact" } else { ", estimated" },
            curve.flag.as_ref().map(|f| format!(" [{f}]")).unwrap_or_default()
        );
    }
    sink.finish()?;
    Ok(EXIT_OK)
}

fn run_counterexample(k: usize, horizon: Option<usize>, out: Option<&Path>) -> Result<i32> {
    let n_max = horizon.unwrap_or(2 * k);
    let rep = baker_counterexample(k, n_max)?;
    let mut sink = Sink::open(
        out,
        None,
        "counterexample.csv",
        &["n", "value", "square_integral", "overlap_measure", "product_max", "hom_max_abs"],
    )?;
    for r in rep.rows.iter().filter(|r| r.n >= 1) {
        sink.row([
            r.n.to_string(),
            fmt_f64(r.inhom),
            fmt_f64(r.square_integral),
            fmt_f64(r.overlap_measure),
            fmt_f64(r.product_max),
            fmt_f64(r.hom_max_abs),
        ])?;
    }
    sink.finish()?;
    if rep.passed {
        eprintln!("k = {k}: inhomogeneous correlation 1/2 on n = 1..={n_max}, supports disjoint");
        Ok(EXIT_OK)
    } else {
        eprintln!("inconsistent: counterexample identities fail for k = {k}");
        Ok(EXIT_INCONSISTENT)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

impl Check {
    fn of(name: &'static str, ok: bool, detail: String) -> Self {
        Check {
            name,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            detail,
        }
    }

    fn skipped(name: &'static str, detail: impl Into<String>) -> Self {
        Check {
            name,
            status: CheckStatus::Skipped,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Verdicts {
    /// Mixing verdict per notion, in `Notion::FOUR` order.
    pub mixing: Vec<(Notion, bool)>,
    pub exact: bool,
    pub lin_trivial: bool,
    pub tail_trivial: Option<bool>,
    pub r: Option<usize>,
    pub checks: Vec<Check>,
}

impl Verdicts {
    pub fn consistent(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

/// Runs every estimator on `s` and evaluates the cross-consistency suite.
pub fn evaluate(s: &Scenario) -> Result<Verdicts> {
    let a = &s.analysis;
    let c = &s.cocycle;
    let samples = s.env_points()?;
    let mix = four_verdicts(c, &samples, &MixingOptions::new(a.horizon, a.tol))?;
    let mixing: Vec<(Notion, bool)> = mix.iter().map(|m| (m.notion, m.decayed)).collect();
    let by = |n: Notion| mixing.iter().find(|m| m.0 == n).map(|m| m.1).unwrap_or(false);
    let ex = exactness_report(c, &samples, a.horizon, a.tol)?;
    let outcome = detect_periodicity(c, &samples, &periodicity_options(s, None))?;
    let mut checks = Vec::new();

    let all_equal = mixing.iter().all(|m| m.1 == mixing[0].1);
    checks.push(Check::of(
        "mixing-notions-agree",
        all_equal,
        mixing
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(" "),
    ));
    checks.push(Check::of(
        "norm-vs-dual-ball",
        ex.exact == ex.lin_trivial,
        format!("norm={} lin={}", ex.exact, ex.lin_trivial),
    ));
    checks.push(match ex.tail_trivial {
        Some(t) => Check::of(
            "tail-partition-vs-dual-ball",
            t == ex.lin_trivial,
            format!("tail={t} lin={}", ex.lin_trivial),
        ),
        None => Check::skipped("tail-partition-vs-dual-ball", "not map-derived"),
    });

    let r = outcome.decomposition().map(|d| d.r);
    match &outcome {
        PeriodicityOutcome::Found(d) => {
            let r1 = d.r == 1;
            let pi = by(Notion::PRIOR_INHOM);
            let qi = by(Notion::POST_INHOM);
            checks.push(Check::of(
                "periodic-exactness-equivalence",
                ex.exact == r1 && pi == r1 && qi == r1,
                format!("exact={} prior-inhom={pi} post-inhom={qi} r={}", ex.exact, d.r),
            ));
            if c.driving().is_finite() {
                let ph = by(Notion::PRIOR_HOM);
                checks.push(Check::of(
                    "homogeneous-mixing-vs-single-component",
                    ph == r1,
                    format!("prior-hom={ph} r={}", d.r),
                ));
            } else {
                checks.push(Check::skipped(
                    "homogeneous-mixing-vs-single-component",
                    "needs a finite driving",
                ));
            }
            checks.push(restricted_check(s, d));
        }
        PeriodicityOutcome::NoneFound { .. } => {
            for name in [
                "periodic-exactness-equivalence",
                "homogeneous-mixing-vs-single-component",
                "restricted-power-exactness",
            ] {
                checks.push(Check::skipped(name, "no periodic decomposition"));
            }
        }
        PeriodicityOutcome::Indeterminate { omega_id, detail } => {
            for name in [
                "periodic-exactness-equivalence",
                "homogeneous-mixing-vs-single-component",
                "restricted-power-exactness",
            ] {
                checks.push(Check::skipped(name, format!("indeterminate at omega {omega_id}: {detail}")));
            }
        }
    }
    checks.push(qc_check(s, &samples, ex.exact));

    Ok(Verdicts {
        mixing,
        exact: ex.exact,
        lin_trivial: ex.lin_trivial,
        tail_trivial: ex.tail_trivial,
        r,
        checks,
    })
}

fn restricted_check(s: &Scenario, d: &crate::asymp::PeriodicDecomposition) -> Check {
    const NAME: &str = "restricted-power-exactness";
    if !d.rho_constant() {
        return Check::skipped(NAME, "rho varies over the samples");
    }
    if !s.cocycle.driving().is_finite() {
        return Check::skipped(NAME, "needs a finite driving");
    }
    match restricted_power_exactness(&s.cocycle, d, s.analysis.horizon, s.analysis.tol) {
        Ok(list) => {
            let ok = list.iter().all(|r| r.report.exact);
            let detail = format!(
                "k={} components exact: {}",
                d.rho_order().unwrap_or(0),
                list.iter()
                    .map(|r| format!("{}={}", r.component, r.report.exact))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            Check::of(NAME, ok, detail)
        }
        Err(Error::Unsupported(m)) => Check::skipped(NAME, m),
        Err(e) => Check::of(NAME, false, e.to_string()),
    }
}

fn qc_check(s: &Scenario, samples: &[EnvPoint], exact: bool) -> Check {
    const NAME: &str = "exact-implies-quasi-constrictive";
    if !exact {
        return Check::skipped(NAME, "not exact");
    }
    let h = match s.invariant_density() {
        Ok(h) => h,
        Err(e) => return Check::skipped(NAME, format!("no invariant density: {e}")),
    };
    for w in samples {
        match h.density_at(&s.cocycle, w) {
            Ok(d) if d.values().iter().all(|v| *v > 0.0) => {}
            Ok(_) => return Check::skipped(NAME, "invariant density has zeros"),
            Err(e) => return Check::skipped(NAME, format!("no invariant density: {e}")),
        }
    }
    let a = &s.analysis;
    let family = dyadic_runs(s.space.len(), a.qc_max_cells);
    let basis = cell_density_basis(&s.cocycle);
    match quasi_constrictive_probe(&s.cocycle, &a.eps_grid, &family, &basis, samples, a.horizon) {
        Ok(rep) => Check::of(
            NAME,
            rep.quasi_constrictive,
            format!("quasi-constrictive={} over {} points", rep.quasi_constrictive, rep.samples),
        ),
        Err(e) => Check::of(NAME, false, e.to_string()),
    }
}

fn report(common: &Common) -> Result<i32> {
    let s = load(common)?;
    let v = evaluate(&s)?;
    let mut stdout = std::io::stdout().lock();
    let w = |out: &mut dyn Write, line: String| writeln!(out, "{line}").map_err(Error::from);
    w(&mut stdout, format!("scenario: {}", s.name))?;
    for (n, m) in &v.mixing {
        w(&mut stdout, format!("mixing {n}: {}", verdict(*m, "mixing", "not mixing")))?;
    }
    w(&mut stdout, format!("exactness: {}", verdict(v.exact, "exact", "not exact")))?;
    w(&mut stdout, format!("dual ball: {}", verdict(v.lin_trivial, "trivial", "nontrivial")))?;
    if let Some(t) = v.tail_trivial {
        w(&mut stdout, format!("tail partition: {}", verdict(t, "trivial", "nontrivial")))?;
    }
    w(
        &mut stdout,
        format!(
            "periodicity: {}",
            v.r.map(|r| format!("r={r}")).unwrap_or_else(|| "no decomposition".into())
        ),
    )?;
    for c in &v.checks {
        let st = match c.status {
            CheckStatus::Pass => "ok",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "skipped",
        };
        w(&mut stdout, format!("check {}: {st} ({})", c.name, c.detail))?;
    }
    if let Some(out) = &common.out {
        let mut sink = Sink::open(Some(out), None, "report.csv", &["check", "status", "detail"])?;
        for c in &v.checks {
            let st = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::Skipped => "skipped",
            };
            sink.row([c.name, st, c.detail.as_str()])?;
        }
        sink.finish()?;
    }
    Ok(if v.consistent() { EXIT_OK } else { EXIT_INCONSISTENT })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycles() {
        assert_eq!(cycle_notation(&[1, 0, 2]), "(0 1)(2)");
        assert_eq!(cycle_notation(&[1, 2, 0]), "(0 1 2)");
        assert_eq!(cycle_notation(&[0]), "(0)");
    }

    #[test]
    fn floats() {
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(1e-20), "1e-20");
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["cocycle-lab", "run-nothing"]), EXIT_USAGE);
        assert_eq!(run(["cocycle-lab", "run-exactness"]), EXIT_USAGE);
        assert_eq!(
            run(["cocycle-lab", "run-exactness", "--scenario", "/nonexistent/x.toml"]),
            EXIT_USAGE
        );
    }
}
