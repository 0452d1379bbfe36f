//! End-to-end scenarios: state preparation, early local measurements, delayed
//! ancilla measurement, record partitioning, subensemble statistics, CHSH
//! evaluation, and the Bayesian pre/post-selection equivalence check.
//!
//! Two scenarios are implemented. In the GHZ scenario three particles start in
//! (|↑↑↑⟩ + |↓↓↓⟩)/√2, particles 1 and 2 are measured locally, and particle 3
//! is measured later along a chosen axis. In the factorable scenario particles
//! 1 and 2 are each half of an independent Φ+ pair with ancillas 3 and 4, and
//! the delayed measurement is a Bell-operator measurement on (3, 4).

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::born::{
    collapse, correlator, outcome_probabilities, sample_outcome, Outcome, ProjectorFamily,
    RngStream, ZERO_PROB_TOL,
};
use crate::qcore::{BellLabel, BlochDirection, QState, StateVector};
use crate::{Error, Result};

/// One of the two worked scenarios.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Three particles in the GHZ state; ancilla is particle 3, measured along
    /// `theta3`.
    Ghz { theta3: BlochDirection },
    /// Four particles in Φ+₁₃ ⊗ Φ+₂₄; ancilla pair (3, 4) gets a Bell
    /// measurement.
    Factorable,
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            Scenario::Ghz { .. } => ScenarioKind::Ghz,
            Scenario::Factorable => ScenarioKind::Factorable,
        }
    }

    pub fn num_qubits(&self) -> usize {
        match self {
            Scenario::Ghz { .. } => 3,
            Scenario::Factorable => 4,
        }
    }

    pub fn initial_state(&self) -> StateVector {
        match self {
            Scenario::Ghz { .. } => build_ghz(),
            Scenario::Factorable => build_factorable(),
        }
    }
}

/// Scenario tag as it appears in record logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Ghz,
    Factorable,
}

/// Ancilla measurement result: a spin sign for GHZ, a Bell label for the
/// factorable scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AncillaOutcome {
    Spin(i32),
    Bell(BellLabel),
}

impl std::fmt::Display for AncillaOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AncillaOutcome::Spin(s) => write!(f, "{s:+}"),
            AncillaOutcome::Bell(l) => f.write_str(l.as_str()),
        }
    }
}

/// One experimental run, in the exact JSONL wire layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub run: u64,
    pub scenario: ScenarioKind,
    pub a1_theta: f64,
    pub a1_phi: f64,
    pub a2_theta: f64,
    pub a2_phi: f64,
    pub o1: i32,
    pub o2: i32,
    pub ancilla: AncillaOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anc_theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anc_phi: Option<f64>,
}

/// How trial settings are drawn from the menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SettingPolicy {
    /// Deterministic round-robin through the menu; equal counts per pair.
    Cycle,
    /// Seeded uniform draw per trial.
    Random,
}

// ---------------------------------------------------------------------------
// State preparation
// ---------------------------------------------------------------------------

/// Three-qubit GHZ state (|↑↑↑⟩ + |↓↓↓⟩)/√2.
pub fn build_ghz() -> StateVector {
    let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut amps = vec![Complex64::ZERO; 8];
    amps[0] = r;
    amps[7] = r;
    StateVector::new(3, amps).expect("unit norm")
}

/// Four-qubit state Φ+₁₃ ⊗ Φ+₂₄ in canonical particle order: equal ¼
/// amplitudes on |↑↑↑↑⟩, |↑↓↑↓⟩, |↓↑↓↑⟩, |↓↓↓↓⟩.
pub fn build_factorable() -> StateVector {
    let q = Complex64::new(0.25f64.sqrt(), 0.0);
    let mut amps = vec![Complex64::ZERO; 16];
    for idx in [0b0000, 0b0101, 0b1010, 0b1111] {
        amps[idx] = q;
    }
    StateVector::new(4, amps).expect("unit norm")
}

// ---------------------------------------------------------------------------
// Conditional branch states
// ---------------------------------------------------------------------------

/// Two-qubit state of particles (1, 2) conditioned on a σ₃θ₃ outcome.
#[derive(Debug, Clone)]
pub struct ConditionalBranch {
    pub outcome: i32,
    pub state: StateVector,
    pub probability: f64,
    /// Set when θ₃ is z-aligned: the branch is a product state and carries no
    /// counterfactual entanglement.
    pub degenerate: bool,
}

/// Branch state of particles (1, 2) given σ₃θ₃ = `outcome` on the GHZ state.
///
/// Computed by projecting particle 3 of the GHZ state onto the corresponding
/// spin eigenvector, so it matches the collapse engine bit for bit for any
/// Bloch direction, including azimuthal ones.
pub fn conditional_pair_state(theta3: &BlochDirection, outcome: i32) -> Result<ConditionalBranch> {
    if outcome != 1 && outcome != -1 {
        return Err(Error::InvalidArgument(format!(
            "spin outcome must be +1 or -1, got {outcome}"
        )));
    }
    let (up, down) = crate::qcore::spin_eigenbasis(theta3);
    let eig = if outcome == 1 { up } else { down };
    // branch ∝ ⟨e|↑z⟩ |↑↑⟩ + ⟨e|↓z⟩ |↓↓⟩
    let c0 = eig.amplitudes()[0].conj();
    let c1 = eig.amplitudes()[1].conj();
    let mut amps = vec![Complex64::ZERO; 4];
    amps[0] = c0;
    amps[3] = c1;
    let state = StateVector::normalized(2, amps)?;
    Ok(ConditionalBranch {
        outcome,
        state,
        probability: 0.5,
        degenerate: theta3.is_z_aligned(),
    })
}

/// Post-measurement state of particles (1, 2) after a Bell outcome on the
/// ancilla pair (3, 4), computed by collapsing the four-particle state.
pub fn swap_outcome_state(label: BellLabel) -> StateVector {
    let psi = build_factorable();
    let family = ProjectorFamily::bell(4, (3, 4)).expect("bell family");
    let collapsed = collapse(&psi, &family, label.index()).expect("all Bell outcomes are possible");
    let (head, _) = collapsed
        .contract_tail(&label.state())
        .expect("ancilla pair is in the measured Bell state");
    head
}

/// Matches a two-qubit state against the Bell basis; `None` when it is not a
/// Bell state up to global phase.
pub fn bell_label_of(state: &StateVector) -> Option<BellLabel> {
    BellLabel::ALL
        .into_iter()
        .find(|l| state.fidelity(&l.state()).unwrap_or(0.0) > 1.0 - 1e-10)
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

/// Runs `shots` independent trials: measure particles 1 and 2 first, then the
/// ancilla, and emit one record per trial. Deterministic in `seed`; records
/// are ordered by run index.
pub fn run_trials(
    scenario: &Scenario,
    settings_menu: &[(BlochDirection, BlochDirection)],
    setting_policy: SettingPolicy,
    shots: u64,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    if settings_menu.is_empty() {
        return Err(Error::InvalidArgument("settings menu is empty".into()));
    }
    let n = scenario.num_qubits();
    let initial = scenario.initial_state();
    // spin families are reused across trials; building them per shot would
    // dominate the runtime
    let menu_families: Vec<(ProjectorFamily, ProjectorFamily)> = settings_menu
        .iter()
        .map(|(a1, a2)| {
            Ok((
                ProjectorFamily::spin(n, 1, a1)?,
                ProjectorFamily::spin(n, 2, a2)?,
            ))
        })
        .collect::<Result<_>>()?;
    let ancilla_family = match scenario {
        Scenario::Ghz { theta3 } => ProjectorFamily::spin(n, 3, theta3)?,
        Scenario::Factorable => ProjectorFamily::bell(n, (3, 4))?,
    };
    let (anc_theta, anc_phi) = match scenario {
        Scenario::Ghz { theta3 } => (Some(theta3.theta()), Some(theta3.phi())),
        Scenario::Factorable => (None, None),
    };

    let mut records = Vec::with_capacity(shots as usize);
    for run in 0..shots {
        let mut rng = RngStream::new(seed, run).rng();
        let menu_idx = match setting_policy {
            SettingPolicy::Cycle => (run % settings_menu.len() as u64) as usize,
            SettingPolicy::Random => rand::Rng::random_range(&mut rng, 0..settings_menu.len()),
        };
        let (a1, a2) = settings_menu[menu_idx];
        let (f1, f2) = &menu_families[menu_idx];

        let mut state = initial.clone();
        let mut spins = [0i32; 2];
        for (slot, family) in spins.iter_mut().zip([f1, f2]) {
            let probs = outcome_probabilities(&state, family)?;
            let idx = sample_outcome(&probs, &mut rng);
            state = collapse(&state, family, idx)?;
            *slot = match family.label(idx) {
                Outcome::Spin(s) => s,
                Outcome::Bell(_) => unreachable!("spin family"),
            };
        }

        let probs = outcome_probabilities(&state, &ancilla_family)?;
        let idx = sample_outcome(&probs, &mut rng);
        let ancilla = match ancilla_family.label(idx) {
            Outcome::Spin(s) => AncillaOutcome::Spin(s),
            Outcome::Bell(l) => AncillaOutcome::Bell(l),
        };

        records.push(TrialRecord {
            run,
            scenario: scenario.kind(),
            a1_theta: a1.theta(),
            a1_phi: a1.phi(),
            a2_theta: a2.theta(),
            a2_phi: a2.phi(),
            o1: spins[0],
            o2: spins[1],
            ancilla,
            anc_theta,
            anc_phi,
        });
    }
    Ok(records)
}

/// Groups records by ancilla outcome. Exhaustive and disjoint: every input
/// record lands in exactly one group.
pub fn partition_records(records: &[TrialRecord]) -> BTreeMap<AncillaOutcome, Vec<TrialRecord>> {
    let mut groups: BTreeMap<AncillaOutcome, Vec<TrialRecord>> = BTreeMap::new();
    for rec in records {
        groups.entry(rec.ancilla).or_default().push(rec.clone());
    }
    groups
}

// ---------------------------------------------------------------------------
// CHSH
// ---------------------------------------------------------------------------

/// CHSH angle quadruple (x–z-plane polar angles, radians):
/// S = E(a,b) + E(a,b') + E(a',b) − E(a',b').
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshAngles {
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        Self {
            a,
            a_prime,
            b,
            b_prime,
        }
    }

    /// The four setting pairs, in the fixed order (a,b), (a,b'), (a',b),
    /// (a',b').
    pub fn setting_pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }

    /// Same pairs as Bloch directions.
    pub fn direction_pairs(&self) -> [(BlochDirection, BlochDirection); 4] {
        self.setting_pairs().map(|(a, b)| {
            (
                BlochDirection::from_xz_angle(a),
                BlochDirection::from_xz_angle(b),
            )
        })
    }
}

/// Preset angle quadruple reaching |S| = 2√2 on the given Bell state.
///
/// Generated by the grid scan over x–z-plane angles and frozen here; the scan
/// reproduces each value (see `scan_reproduces_presets` in the tests).
pub fn preset_angles(label: BellLabel) -> ChshAngles {
    use std::f64::consts::FRAC_PI_2;
    let q = std::f64::consts::FRAC_PI_4;
    match label {
        BellLabel::PhiPlus => ChshAngles::new(0.0, FRAC_PI_2, q, -q),
        BellLabel::PhiMinus => ChshAngles::new(0.0, FRAC_PI_2, -q, q),
        BellLabel::PsiPlus => ChshAngles::new(0.0, FRAC_PI_2, 3.0 * q, -3.0 * q),
        BellLabel::PsiMinus => ChshAngles::new(0.0, FRAC_PI_2, -3.0 * q, 3.0 * q),
    }
}

/// Exact CHSH value S from the Born-rule correlator.
pub fn exact_chsh(state: &QState, angles: &ChshAngles) -> Result<f64> {
    let [p1, p2, p3, p4] = angles.direction_pairs();
    Ok(correlator(state, &p1.0, &p1.1)?
        + correlator(state, &p2.0, &p2.1)?
        + correlator(state, &p3.0, &p3.1)?
        - correlator(state, &p4.0, &p4.1)?)
}

/// Result of a CHSH grid scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanResult {
    pub max_abs_s: f64,
    pub angles: ChshAngles,
}

/// Exhaustive scan of |S| over a grid of x–z-plane angle quadruples, `grid`
/// points per angle over [0, π).
///
/// Uses the precomputed correlation matrix, so each quadruple costs a few
/// flops; the value at the argmax agrees with [`exact_chsh`] exactly.
pub fn scan_chsh(state: &QState, grid: usize) -> Result<ScanResult> {
    if grid < 2 {
        return Err(Error::InvalidArgument("grid must have at least 2 points".into()));
    }
    // correlation matrix restricted to the x-z plane
    let x = BlochDirection::x();
    let z = BlochDirection::z();
    let txx = correlator(state, &x, &x)?;
    let txz = correlator(state, &x, &z)?;
    let tzx = correlator(state, &z, &x)?;
    let tzz = correlator(state, &z, &z)?;
    let angle = |i: usize| i as f64 * std::f64::consts::PI / grid as f64;
    let corr: Vec<Vec<f64>> = (0..grid)
        .map(|i| {
            let (sa, ca) = angle(i).sin_cos();
            (0..grid)
                .map(|j| {
                    let (sb, cb) = angle(j).sin_cos();
                    sa * sb * txx + sa * cb * txz + ca * sb * tzx + ca * cb * tzz
                })
                .collect()
        })
        .collect();
    let mut best = (0.0f64, [0usize; 4]);
    for a in 0..grid {
        for ap in 0..grid {
            for b in 0..grid {
                let partial = corr[a][b] + corr[ap][b];
                for bp in 0..grid {
                    let s = (partial + corr[a][bp] - corr[ap][bp]).abs();
                    if s > best.0 {
                        best = (s, [a, ap, b, bp]);
                    }
                }
            }
        }
    }
    let [a, ap, b, bp] = best.1;
    Ok(ScanResult {
        max_abs_s: best.0,
        angles: ChshAngles::new(angle(a), angle(ap), angle(b), angle(bp)),
    })
}

// ---------------------------------------------------------------------------
// Subensemble statistics
// ---------------------------------------------------------------------------

/// Sample correlator at one setting pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelatorEstimate {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub e_hat: f64,
    pub stderr: f64,
}

/// Per-subensemble record statistics and CHSH estimate.
#[derive(Debug, Clone, Serialize)]
pub struct SubensembleStats {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<AncillaOutcome>,
    pub count: usize,
    pub correlators: Vec<CorrelatorEstimate>,
    /// Setting pairs of the requested quadruple with no matching trials.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing_pairs: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chsh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chsh_stderr: Option<f64>,
}

/// Estimates E(a, b) and CHSH over one subensemble at the given quadruple.
///
/// E_hat is the sample mean of o1·o2 over trials at the matching setting pair;
/// missing pairs are reported and leave the CHSH entry empty.
pub fn estimate_stats(
    label: Option<AncillaOutcome>,
    records: &[TrialRecord],
    chsh_angles: &ChshAngles,
) -> SubensembleStats {
    let mut correlators = Vec::with_capacity(4);
    let mut missing = Vec::new();
    let mut terms = Vec::with_capacity(4);
    for (k, ((alpha, beta), (da, db))) in chsh_angles
        .setting_pairs()
        .into_iter()
        .zip(chsh_angles.direction_pairs())
        .enumerate()
    {
        let products: Vec<f64> = records
            .iter()
            .filter(|r| {
                r.a1_theta == da.theta()
                    && r.a1_phi == da.phi()
                    && r.a2_theta == db.theta()
                    && r.a2_phi == db.phi()
            })
            .map(|r| (r.o1 * r.o2) as f64)
            .collect();
        if products.is_empty() {
            missing.push([alpha, beta]);
            continue;
        }
        let n = products.len();
        let e_hat = products.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var =
                products.iter().map(|p| (p - e_hat).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        correlators.push(CorrelatorEstimate {
            a: alpha,
            b: beta,
            n,
            e_hat,
            stderr,
        });
        let sign = if k == 3 { -1.0 } else { 1.0 };
        terms.push((sign * e_hat, stderr));
    }
    let (chsh, chsh_stderr) = if missing.is_empty() {
        let s: f64 = terms.iter().map(|(t, _)| t).sum();
        let se = terms.iter().map(|(_, e)| e * e).sum::<f64>().sqrt();
        (Some(s), Some(se))
    } else {
        (None, None)
    };
    SubensembleStats {
        label,
        count: records.len(),
        correlators,
        missing_pairs: missing,
        chsh,
        chsh_stderr,
    }
}

// ---------------------------------------------------------------------------
// Bayesian equivalence (preselection vs postselection)
// ---------------------------------------------------------------------------

/// Joint probabilities of (o1, o2) ∈ {+1, −1}² measured in sequence, indexed
/// [o1_index][o2_index] with index 0 = +1.
fn joint_pair_probs(
    state: &StateVector,
    f1: &ProjectorFamily,
    f2: &ProjectorFamily,
) -> Result<[[f64; 2]; 2]> {
    let mut out = [[0.0; 2]; 2];
    let p1 = outcome_probabilities(state, f1)?;
    for (i1, &p) in p1.iter().enumerate() {
        if p < ZERO_PROB_TOL {
            continue;
        }
        let mid = collapse(state, f1, i1)?;
        let p2 = outcome_probabilities(&mid, f2)?;
        for (i2, &q) in p2.iter().enumerate() {
            out[i1][i2] = p * q;
        }
    }
    Ok(out)
}

/// Checks that preselection and postselection by the σ₃θ₃ outcome give
/// identical conditional statistics for the σ₁θ₁ ⊗ σ₂θ₂ results.
///
/// The left side conditions by collapsing on σ₃ first; the right side measures
/// particles 1 and 2 first and recombines via the probability ratio. Returns
/// the maximum absolute discrepancy over all outcome combinations.
pub fn bayes_check(
    theta1: &BlochDirection,
    theta2: &BlochDirection,
    theta3: &BlochDirection,
) -> Result<f64> {
    let psi = build_ghz();
    let f1 = ProjectorFamily::spin(3, 1, theta1)?;
    let f2 = ProjectorFamily::spin(3, 2, theta2)?;
    let f3 = ProjectorFamily::spin(3, 3, theta3)?;

    let p3 = outcome_probabilities(&psi, &f3)?;
    let unconditional = joint_pair_probs(&psi, &f1, &f2)?;

    let mut max_disc: f64 = 0.0;
    for (i3, &pi) in p3.iter().enumerate() {
        if pi < ZERO_PROB_TOL {
            return Err(Error::ZeroProbability(i3));
        }
        let preselected = collapse(&psi, &f3, i3)?;
        let lhs = joint_pair_probs(&preselected, &f1, &f2)?;
        for i1 in 0..2 {
            for i2 in 0..2 {
                let pj = unconditional[i1][i2];
                let rhs = if pj < ZERO_PROB_TOL {
                    0.0
                } else {
                    // P(sigma3 = i | o1, o2) from the postselected ordering
                    let after = collapse(&collapse(&psi, &f1, i1)?, &f2, i2)?;
                    let cond = outcome_probabilities(&after, &f3)?[i3];
                    pj * cond / pi
                };
                max_disc = max_disc.max((lhs[i1][i2] - rhs).abs());
            }
        }
    }
    Ok(max_disc)
}

/// Exact joint distribution over (o1, o2, ancilla outcome) for a scenario at
/// one setting pair, with the ancilla measured in the given slot.
///
/// Slot 0 measures the ancilla first, slot 2 last; any order gives the same
/// distribution because the observables commute, which the order-invariance
/// tests check entrywise.
pub fn exact_joint_distribution(
    scenario: &Scenario,
    a1: &BlochDirection,
    a2: &BlochDirection,
    ancilla_slot: usize,
) -> Result<BTreeMap<(i32, i32, AncillaOutcome), f64>> {
    if ancilla_slot > 2 {
        return Err(Error::InvalidArgument("ancilla slot must be 0..=2".into()));
    }
    let n = scenario.num_qubits();
    let f1 = ProjectorFamily::spin(n, 1, a1)?;
    let f2 = ProjectorFamily::spin(n, 2, a2)?;
    let fa = match scenario {
        Scenario::Ghz { theta3 } => ProjectorFamily::spin(n, 3, theta3)?,
        Scenario::Factorable => ProjectorFamily::bell(n, (3, 4))?,
    };
    let mut families = vec![f1, f2];
    families.insert(ancilla_slot, fa);
    let dist = crate::born::joint_distribution(&scenario.initial_state(), &families)?;
    let mut out = BTreeMap::new();
    for (key, p) in dist {
        // map family positions back to (o1, o2, ancilla)
        let mut spins = Vec::with_capacity(2);
        let mut anc = None;
        for (slot, &idx) in key.iter().enumerate() {
            match families[slot].label(idx) {
                Outcome::Spin(s) => spins.push(s),
                Outcome::Bell(l) => anc = Some(AncillaOutcome::Bell(l)),
            }
        }
        let anc = anc.unwrap_or_else(|| {
            // GHZ: the ancilla family is also a spin family; it sits at
            // `ancilla_slot`, so pull it out of the collected spins
            let s = spins.remove(ancilla_slot.min(spins.len() - 1));
            AncillaOutcome::Spin(s)
        });
        *out.entry((spins[0], spins[1], anc)).or_insert(0.0) += p;
    }
    Ok(out)
}
