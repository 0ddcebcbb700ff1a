use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use laminate_forge::analysis::{fit_exponent, tail, tail_at_least, tail_inverse, tail_inverse_at_least};
use laminate_forge::constants::{constants_run, detect_bounded, fit_c_tilde, mass_violations};
use laminate_forge::laminate::{validate_certificate, Laminate, SplitCertificate};
use laminate_forge::rational::int;
use laminate_forge::report::{stage_report, Report, SweepSummary};
use laminate_forge::sets::{Mode, Params, TieBreak};
use laminate_forge::staircase3d::{build_sequence_3d, fit_c0, Config3d};
use laminate_forge::staircase_nd::{build_sequence_nd, ConfigNd, StrayPolicy};
use laminate_forge::sweep::{applicable, sweep_lemma};
use laminate_forge::StaircaseError;
use serde_json::json;

#[derive(Parser)]
#[command(name = "laminate-forge", version, about = "Build, certify and analyse staircase laminates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tie {
    Strict,
    Upper,
    Lower,
}

impl From<Tie> for TieBreak {
    fn from(t: Tie) -> Self {
        match t {
            Tie::Strict => TieBreak::Strict,
            Tie::Upper => TieBreak::Upper,
            Tie::Lower => TieBreak::Lower,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Stray {
    Push,
    Keep,
}

#[derive(Subcommand)]
enum Command {
    /// Exact three-dimensional staircase.
    Staircase3d {
        #[arg(long)]
        jmax: usize,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Check the tracked bound with this growth constant instead of fitting one.
        #[arg(long)]
        c0: Option<f64>,
        #[arg(long, value_enum, default_value_t = Tie::Upper)]
        tie: Tie,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// General-dimensional staircase.
    StaircaseNd {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m1: usize,
        #[arg(long)]
        m2: usize,
        #[arg(long)]
        jmax: usize,
        #[arg(long, default_value_t = 0.1)]
        epsilon_prime: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check the mass bounds with this constant instead of fitting one.
        #[arg(long)]
        ctilde: Option<f64>,
        /// Seeded lemma sweep samples per grid cell (0 skips the sweep).
        #[arg(long, default_value_t = 0)]
        sweep_per_cell: usize,
        #[arg(long, default_value_t = 6)]
        sweep_max_index: usize,
        #[arg(long, value_enum, default_value_t = Tie::Upper)]
        tie: Tie,
        #[arg(long, value_enum, default_value_t = Stray::Push)]
        stray: Stray,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Constants recursion trace as CSV.
    Constants {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        ctilde: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon_prime: f64,
        #[arg(long)]
        jmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a certificate and compare it with a claimed laminate.
    Verify {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        laminate: PathBuf,
    },
    /// Tail tables of a laminate, with exponent fits of its `>=` tails.
    Tails {
        #[arg(long)]
        laminate: PathBuf,
        #[arg(long, default_value_t = 16)]
        tmax: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Invariant(String),
}

impl From<StaircaseError> for Failure {
    fn from(e: StaircaseError) -> Self {
        Failure::Invariant(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn staircase3d(jmax: usize, epsilon: f64, c0: Option<f64>, tie: Tie, seed: u64, out: Option<&Path>) -> Outcome {
    if jmax == 0 {
        return Err(usage("jmax must be at least 1"));
    }
    let cfg = Config3d { epsilon, c0: c0.unwrap_or(1.0), tie: tie.into() };
    let seq = build_sequence_3d(jmax, &cfg)?;
    let p = Params::three_d();
    let mut rep = Report::new("staircase3d", seed, p, epsilon);
    for st in &seq {
        rep.stages.push(stage_report(&st.nu, st.j, p, Mode::Exact3d, cfg.tie).map_err(StaircaseError::from)?);
        rep.fitted.insert(format!("c_measured[{}]", st.j), st.c_measured);
        if c0.is_some() && st.c_measured > st.c_tracked {
            rep.mass_violations.push(format!("j={}: measured {} > tracked {}", st.j, st.c_measured, st.c_tracked));
        }
    }
    rep.fitted.insert("c0".into(), fit_c0(&seq));
    emit(out, &rep.to_json())?;
    match rep.mass_violations.first() {
        Some(v) => Err(StaircaseError::MassBoundViolation(v.clone()).into()),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn staircase_nd(
    (n, m1, m2): (usize, usize, usize),
    jmax: usize,
    epsilon_prime: f64,
    seed: u64,
    ctilde: Option<f64>,
    (per_cell, max_index): (usize, usize),
    cfg: ConfigNd,
    out: Option<&Path>,
) -> Outcome {
    if n < 3 {
        return Err(usage(format!("n = {n}: n >= 3 violated")));
    }
    for (name, m) in [("m1", m1), ("m2", m2)] {
        if m < 1 || m > n - 2 {
            return Err(usage(format!("{name} = {m}: 1 <= {name} <= n-2 violated")));
        }
    }
    if jmax == 0 {
        return Err(usage("jmax must be at least 1"));
    }
    if epsilon_prime.is_nan() || epsilon_prime <= 0.0 || ctilde.is_some_and(|c| c.is_nan() || c <= 1.0) {
        return Err(usage("epsilon-prime must be positive and ctilde above 1"));
    }
    let p = Params::new(n, m1, m2).map_err(|e| usage(e.to_string()))?;
    let seq = build_sequence_nd(p, jmax, &cfg)?;
    let mut rep = Report::new("staircase-nd", seed, p, epsilon_prime);
    for st in &seq {
        rep.stages.push(stage_report(&st.nu, st.j, p, Mode::OpenNd, cfg.tie).map_err(StaircaseError::from)?);
    }
    let tables: Vec<_> = seq.iter().map(|s| (s.j, &s.masses)).collect();
    let ct = match ctilde {
        Some(c) => c,
        None => fit_c_tilde(&tables, p, epsilon_prime)
            .ok_or_else(|| StaircaseError::MassBoundViolation("no c~ up to 1e12 bounds the stage masses".into()))?,
    };
    rep.fitted.insert("c_tilde".into(), ct);
    let trace = constants_run(epsilon_prime, ct, n, jmax).map_err(|e| usage(e.to_string()))?;
    rep.mass_violations = mass_violations(&tables, p, &trace);
    let mut failures = Vec::new();
    if per_cell > 0 {
        for lemma in applicable(p) {
            let s = sweep_lemma(lemma, p, max_index, per_cell, seed)?;
            failures.extend(s.failures.iter().map(|f| format!("{lemma:?}: {f}")));
            rep.sweeps.push(SweepSummary::from(&s));
        }
    }
    emit(out, &rep.to_json())?;
    if let Some(v) = rep.mass_violations.first() {
        return Err(StaircaseError::MassBoundViolation(v.clone()).into());
    }
    match failures.first() {
        Some(f) => Err(Failure::Invariant(format!("lemma contract violated: {f}"))),
        None => Ok(()),
    }
}

fn constants(n: usize, ctilde: f64, epsilon_prime: f64, jmax: usize, out: Option<&Path>) -> Outcome {
    let t = constants_run(epsilon_prime, ctilde, n, jmax).map_err(|e| usage(e.to_string()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| usage(e.to_string());
    w.write_record(["j", "M_j", "max_C2"]).map_err(io)?;
    for (j, (m, c)) in t.m.iter().zip(&t.c2_max).enumerate() {
        w.write_record([(j + 1).to_string(), m.to_string(), c.to_string()]).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| usage(e.to_string()))?;
    emit(out, &String::from_utf8(bytes).expect("csv is utf-8"))?;
    let b = detect_bounded(&t);
    eprintln!(
        "plateaued: {} (M sup {:e}, C2 sup {:e}){}",
        b.plateaued,
        b.m_sup_estimate,
        b.c2_sup_estimate,
        b.reason.map(|r| format!("; {r}")).unwrap_or_default()
    );
    Ok(())
}

fn verify(cert: &Path, laminate: &Path) -> Outcome {
    let c = SplitCertificate::from_json(&read(cert)?).map_err(|e| usage(format!("{}: {e}", cert.display())))?;
    let l: Laminate =
        serde_json::from_str(&read(laminate)?).map_err(|e| usage(format!("{}: {e}", laminate.display())))?;
    let l = Laminate::new(l.atoms().to_vec()).map_err(|e| Failure::Invariant(format!("claimed laminate: {e}")))?;
    let check = validate_certificate(&c, &l);
    if check.valid {
        println!("ok: {} steps", c.steps.len());
        return Ok(());
    }
    let step = check.failing_step.map(|s| format!(" at step {s}")).unwrap_or_default();
    Err(Failure::Invariant(format!("certificate rejected{step}: {}", check.diagnostic)))
}

fn tails(laminate: &Path, tmax: i64, out: Option<&Path>) -> Outcome {
    let l: Laminate =
        serde_json::from_str(&read(laminate)?).map_err(|e| usage(format!("{}: {e}", laminate.display())))?;
    if tmax < 2 {
        return Err(usage("tmax must be at least 2"));
    }
    let ts: Vec<_> = (2..=tmax).map(int).collect();
    let (t, ti) = (tail(&l, &ts), tail_inverse(&l, &ts));
    let range = (2.0, tmax as f64);
    let fit = |x| fit_exponent(x, range).map_or_else(|e| json!({ "error": e.to_string() }), |f| json!(f));
    let (fa, fb) = (fit(&tail_at_least(&l, &ts)), fit(&tail_inverse_at_least(&l, &ts)));
    let v = json!({
        "atom_count": l.len(),
        "fits": { "tail": fa, "tail_inverse": fb },
        "tail": t,
        "tail_inverse": ti,
    });
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&v).expect("json")))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Staircase3d { jmax, epsilon, c0, tie, seed, out } => {
            staircase3d(jmax, epsilon, c0, tie, seed, out.as_deref())
        }
        Command::StaircaseNd {
            n,
            m1,
            m2,
            jmax,
            epsilon_prime,
            seed,
            ctilde,
            sweep_per_cell,
            sweep_max_index,
            tie,
            stray,
            out,
        } => {
            let stray = match stray {
                Stray::Push => StrayPolicy::Push,
                Stray::Keep => StrayPolicy::Keep,
            };
            let cfg = ConfigNd { epsilon_prime, tie: tie.into(), stray };
            staircase_nd(
                (n, m1, m2),
                jmax,
                epsilon_prime,
                seed,
                ctilde,
                (sweep_per_cell, sweep_max_index),
                cfg,
                out.as_deref(),
            )
        }
        Command::Constants { n, ctilde, epsilon_prime, jmax, out } => {
            constants(n, ctilde, epsilon_prime, jmax, out.as_deref())
        }
        Command::Verify { cert, laminate } => verify(&cert, &laminate),
        Command::Tails { laminate, tmax, out } => tails(&laminate, tmax, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
