//! Command-line front end.
//!
//! Verbs: `run` (Monte Carlo trials to a JSONL log), `analyze` (partition a
//! log and estimate per-subensemble CHSH), `exact` (analytic subensemble CHSH
//! values), `bayes` (pre/post-selection equivalence check), `certify`
//! (consistent-histories certificate), `scan` (grid scan for the maximal
//! |S|). All angles are radians. Exit codes: 0 success, 1 usage or I/O error,
//! 2 certificate or scan assertion failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::histories::{counterfactual_certificate, CertificateReport};
use crate::protocols::{
    bell_label_of, conditional_pair_state, estimate_stats, exact_chsh, partition_records,
    preset_angles, run_trials, scan_chsh, swap_outcome_state, bayes_check, AncillaOutcome,
    ChshAngles, Scenario, SettingPolicy, SubensembleStats, TrialRecord,
};
use crate::qcore::{BellLabel, BlochDirection, DensityMatrix, QState};
use crate::{Error, Result};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_ASSERTION: i32 = 2;

#[derive(Parser)]
#[command(
    name = "cfent",
    version,
    about = "Postselected entanglement statistics in separable states"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run seeded Monte Carlo trials and write a JSONL record log
    Run(RunArgs),
    /// Partition a record log by ancilla outcome and estimate CHSH
    Analyze(AnalyzeArgs),
    /// Analytic CHSH values of the conditional subensemble states
    Exact(ExactArgs),
    /// Preselection vs postselection equivalence over random directions
    Bayes(BayesArgs),
    /// Consistent-histories counterfactual certificate
    Certify(CertifyArgs),
    /// Grid scan for the maximal |S| of a state
    Scan(ScanArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioOpt {
    Ghz,
    Factorable,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatOpt {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateOpt {
    /// Reduced state of particles (1, 2) in the GHZ scenario
    Eq1,
    /// Maximally mixed reduced state of the factorable scenario
    Mixed,
    #[value(name = "phi_plus")]
    PhiPlus,
    #[value(name = "phi_minus")]
    PhiMinus,
    #[value(name = "psi_plus")]
    PsiPlus,
    #[value(name = "psi_minus")]
    PsiMinus,
}

fn parse_angles(s: &str) -> std::result::Result<ChshAngles, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err("expected four comma-separated radians: a,a',b,b'".into());
    }
    let mut vals = [0.0f64; 4];
    for (slot, part) in vals.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad angle {part:?}: {e}"))?;
    }
    Ok(ChshAngles::new(vals[0], vals[1], vals[2], vals[3]))
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioOpt,
    /// Ancilla polar angle (ghz only)
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    theta3: f64,
    /// Ancilla azimuthal angle (ghz only)
    #[arg(long, default_value_t = 0.0)]
    phi3: f64,
    /// CHSH quadruple a,a',b,b' cycled through as setting pairs
    #[arg(long, value_parser = parse_angles)]
    angles: Option<ChshAngles>,
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input JSONL path written by `run`
    #[arg(long)]
    records: PathBuf,
    /// CHSH quadruple the estimates are keyed on
    #[arg(long, value_parser = parse_angles)]
    angles: Option<ChshAngles>,
    #[arg(long, value_enum, default_value_t = FormatOpt::Json)]
    format: FormatOpt,
    /// Output path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioOpt,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    theta3: f64,
    #[arg(long, default_value_t = 0.0)]
    phi3: f64,
    /// Fixed quadruple; per-label presets when absent
    #[arg(long, value_parser = parse_angles)]
    angles: Option<ChshAngles>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BayesArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fix the ancilla direction instead of sampling it
    #[arg(long)]
    theta3: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    phi3: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, value_enum)]
    scenario: ScenarioOpt,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    theta3: f64,
    #[arg(long, default_value_t = 0.0)]
    phi3: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, value_enum, default_value_t = StateOpt::Eq1)]
    state: StateOpt,
    /// Points per angle over [0, pi)
    #[arg(long, default_value_t = 24)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses argv and executes; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    match execute(cli.verb) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("cfent: {err}");
            EXIT_USAGE
        }
    }
}

fn execute(verb: Verb) -> Result<i32> {
    match verb {
        Verb::Run(args) => cmd_run(args),
        Verb::Analyze(args) => cmd_analyze(args),
        Verb::Exact(args) => cmd_exact(args),
        Verb::Bayes(args) => cmd_bayes(args),
        Verb::Certify(args) => cmd_certify(args),
        Verb::Scan(args) => cmd_scan(args),
    }
}

fn build_scenario(opt: ScenarioOpt, theta3: f64, phi3: f64) -> Result<Scenario> {
    Ok(match opt {
        ScenarioOpt::Ghz => Scenario::Ghz {
            theta3: BlochDirection::new(theta3, phi3)?,
        },
        ScenarioOpt::Factorable => Scenario::Factorable,
    })
}

/// Writes via a sibling temp file and rename, so readers never see a partial
/// file.
fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(content.as_bytes())?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, content),
        None => {
            if content.ends_with('\n') {
                print!("{content}");
            } else {
                println!("{content}");
            }
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    emit(out, &text)
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    let scenario = build_scenario(args.scenario, args.theta3, args.phi3)?;
    let angles = args.angles.unwrap_or_else(|| preset_angles(BellLabel::PhiPlus));
    let menu = angles.direction_pairs().to_vec();
    let records = run_trials(&scenario, &menu, SettingPolicy::Cycle, args.shots, args.seed)?;
    let mut log = String::new();
    for record in &records {
        log.push_str(
            &serde_json::to_string(record).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        );
        log.push('\n');
    }
    write_atomic(&args.out, &log)?;
    Ok(EXIT_OK)
}

/// Reads a JSONL record log, reporting the first malformed line by number.
pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord =
            serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

fn stats_csv(rows: &[&SubensembleStats]) -> String {
    let mut out = String::from("label,count,a,b,n,e_hat,stderr,chsh,chsh_stderr\n");
    for stats in rows {
        let label = stats
            .label
            .map(|l| l.to_string())
            .unwrap_or_else(|| "all".to_owned());
        let chsh = stats.chsh.map(|v| v.to_string()).unwrap_or_default();
        let chsh_se = stats.chsh_stderr.map(|v| v.to_string()).unwrap_or_default();
        for c in &stats.correlators {
            out.push_str(&format!(
                "{label},{},{},{},{},{},{},{chsh},{chsh_se}\n",
                stats.count, c.a, c.b, c.n, c.e_hat, c.stderr
            ));
        }
    }
    out
}

/// Preset quadruple for the Bell state a subensemble's conditional state
/// matches; falls back to the Φ+ presets for degenerate branches.
fn subensemble_angles(label: AncillaOutcome, records: &[TrialRecord]) -> ChshAngles {
    let bell = match label {
        AncillaOutcome::Spin(s) => records
            .first()
            .and_then(|r| BlochDirection::new(r.anc_theta?, r.anc_phi?).ok())
            .and_then(|dir| conditional_pair_state(&dir, s).ok())
            .and_then(|branch| bell_label_of(&branch.state)),
        AncillaOutcome::Bell(l) => bell_label_of(&swap_outcome_state(l)),
    };
    preset_angles(bell.unwrap_or(BellLabel::PhiPlus))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32> {
    let records = read_records(&args.records)?;
    let angles = args.angles.unwrap_or_else(|| preset_angles(BellLabel::PhiPlus));
    let partition = partition_records(&records);
    let subensembles: Vec<SubensembleStats> = partition
        .iter()
        .map(|(&label, subset)| {
            let quad = args
                .angles
                .unwrap_or_else(|| subensemble_angles(label, subset));
            estimate_stats(Some(label), subset, &quad)
        })
        .collect();
    let ensemble = estimate_stats(None, &records, &angles);
    match args.format {
        FormatOpt::Json => {
            let doc = json!({
                "total": records.len(),
                "angles": angles,
                "subensembles": subensembles,
                "ensemble": ensemble,
            });
            emit_json(args.out.as_deref(), &doc)?;
        }
        FormatOpt::Csv => {
            let mut rows: Vec<&SubensembleStats> = subensembles.iter().collect();
            rows.push(&ensemble);
            emit(args.out.as_deref(), &stats_csv(&rows))?;
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ExactEntry {
    ancilla: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    bell_label: Option<BellLabel>,
    degenerate: bool,
    angles: ChshAngles,
    chsh: f64,
}

fn cmd_exact(args: ExactArgs) -> Result<i32> {
    let mut entries = Vec::new();
    match args.scenario {
        ScenarioOpt::Ghz => {
            let theta3 = BlochDirection::new(args.theta3, args.phi3)?;
            for outcome in [1, -1] {
                let branch = conditional_pair_state(&theta3, outcome)?;
                let label = bell_label_of(&branch.state);
                let angles = args
                    .angles
                    .unwrap_or_else(|| preset_angles(label.unwrap_or(BellLabel::PhiPlus)));
                let chsh = exact_chsh(&QState::Pure(branch.state), &angles)?;
                entries.push(ExactEntry {
                    ancilla: format!("{outcome:+}"),
                    bell_label: label,
                    degenerate: branch.degenerate,
                    angles,
                    chsh,
                });
            }
        }
        ScenarioOpt::Factorable => {
            for label in BellLabel::ALL {
                let state = swap_outcome_state(label);
                let swapped = bell_label_of(&state);
                let angles = args
                    .angles
                    .unwrap_or_else(|| preset_angles(swapped.unwrap_or(label)));
                let chsh = exact_chsh(&QState::Pure(state), &angles)?;
                entries.push(ExactEntry {
                    ancilla: label.as_str().to_owned(),
                    bell_label: swapped,
                    degenerate: false,
                    angles,
                    chsh,
                });
            }
        }
    }
    let doc = json!({ "entries": entries });
    emit_json(args.out.as_deref(), &doc)?;
    Ok(EXIT_OK)
}

const BAYES_SAMPLES: usize = 100;

fn cmd_bayes(args: BayesArgs) -> Result<i32> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let random_dir = |rng: &mut ChaCha8Rng| -> Result<BlochDirection> {
        BlochDirection::new(
            rng.random_range(0.0..std::f64::consts::PI),
            rng.random_range(0.0..2.0 * std::f64::consts::PI),
        )
    };
    let fixed3 = args
        .theta3
        .map(|t| BlochDirection::new(t, args.phi3))
        .transpose()?;
    let mut max_disc: f64 = 0.0;
    for _ in 0..BAYES_SAMPLES {
        let t1 = random_dir(&mut rng)?;
        let t2 = random_dir(&mut rng)?;
        let t3 = match &fixed3 {
            Some(d) => *d,
            None => random_dir(&mut rng)?,
        };
        max_disc = max_disc.max(bayes_check(&t1, &t2, &t3)?);
    }
    let doc = json!({
        "samples": BAYES_SAMPLES,
        "seed": args.seed,
        "max_discrepancy": max_disc,
    });
    emit_json(args.out.as_deref(), &doc)?;
    Ok(EXIT_OK)
}

const CERTIFY_SAMPLES: usize = 20;

#[derive(Serialize)]
struct CertifySummary {
    samples: usize,
    pass: bool,
    reports: Vec<CertificateReport>,
}

fn cmd_certify(args: CertifyArgs) -> Result<i32> {
    let scenario = build_scenario(args.scenario, args.theta3, args.phi3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut reports = Vec::with_capacity(CERTIFY_SAMPLES);
    for _ in 0..CERTIFY_SAMPLES {
        let t1 = BlochDirection::new(
            rng.random_range(0.0..std::f64::consts::PI),
            rng.random_range(0.0..2.0 * std::f64::consts::PI),
        )?;
        let t2 = BlochDirection::new(
            rng.random_range(0.0..std::f64::consts::PI),
            rng.random_range(0.0..2.0 * std::f64::consts::PI),
        )?;
        reports.push(counterfactual_certificate(&scenario, &t1, &t2)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    let summary = CertifySummary {
        samples: CERTIFY_SAMPLES,
        pass,
        reports,
    };
    emit_json(args.out.as_deref(), &summary)?;
    Ok(if pass { EXIT_OK } else { EXIT_ASSERTION })
}

fn cmd_scan(args: ScanArgs) -> Result<i32> {
    let (name, state, expected): (&str, QState, f64) = match args.state {
        StateOpt::Eq1 => {
            let rho = DensityMatrix::from_pure(&crate::protocols::build_ghz())
                .partial_trace(&[1, 2])?;
            ("eq1", rho.into(), 2.0)
        }
        StateOpt::Mixed => {
            let rho = DensityMatrix::from_pure(&crate::protocols::build_factorable())
                .partial_trace(&[1, 2])?;
            // correlation-free state; anything at or under the local bound passes
            ("mixed", rho.into(), 0.0)
        }
        StateOpt::PhiPlus => ("phi_plus", BellLabel::PhiPlus.state().into(), 2.0_f64.sqrt() * 2.0),
        StateOpt::PhiMinus => ("phi_minus", BellLabel::PhiMinus.state().into(), 2.0_f64.sqrt() * 2.0),
        StateOpt::PsiPlus => ("psi_plus", BellLabel::PsiPlus.state().into(), 2.0_f64.sqrt() * 2.0),
        StateOpt::PsiMinus => ("psi_minus", BellLabel::PsiMinus.state().into(), 2.0_f64.sqrt() * 2.0),
    };
    let result = scan_chsh(&state, args.grid)?;
    let pass = (result.max_abs_s - expected).abs() < 1e-9;
    let doc = json!({
        "state": name,
        "grid": args.grid,
        "max_abs_s": result.max_abs_s,
        "angles": result.angles,
        "expected": expected,
        "pass": pass,
    });
    emit_json(args.out.as_deref(), &doc)?;
    Ok(if pass { EXIT_OK } else { EXIT_ASSERTION })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_angles_accepts_quadruple() {
        let a = parse_angles("0,1.5707963,0.7853981,-0.7853981").unwrap();
        assert_eq!(a.a, 0.0);
        assert!((a.b_prime + 0.7853981).abs() < 1e-12);
        assert!(parse_angles("1,2,3").is_err());
        assert!(parse_angles("1,2,3,x").is_err());
    }

    #[test]
    fn run_command_parses() {
        let cli = Cli::try_parse_from([
            "cfent", "run", "--scenario", "ghz", "--theta3", "1.5707963", "--shots", "100000",
            "--seed", "42", "--out", "r.jsonl",
        ])
        .unwrap();
        match cli.verb {
            Verb::Run(args) => {
                assert_eq!(args.shots, 100_000);
                assert_eq!(args.seed, 42);
                assert_eq!(args.out, PathBuf::from("r.jsonl"));
            }
            _ => panic!("expected run"),
        }
    }

    #[test]
    fn certify_defaults_parse() {
        let cli = Cli::try_parse_from(["cfent", "certify", "--scenario", "factorable"]).unwrap();
        match cli.verb {
            Verb::Certify(args) => assert_eq!(args.seed, 0),
            _ => panic!("expected certify"),
        }
    }

    #[test]
    fn unknown_verb_is_usage_error() {
        assert!(Cli::try_parse_from(["cfent", "frobnicate"]).is_err());
    }

    #[test]
    fn zero_shots_is_rejected_at_execution() {
        let scenario = build_scenario(ScenarioOpt::Ghz, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let menu = preset_angles(BellLabel::PhiPlus).direction_pairs().to_vec();
        assert!(run_trials(&scenario, &menu, SettingPolicy::Cycle, 0, 0).is_err());
    }
}
