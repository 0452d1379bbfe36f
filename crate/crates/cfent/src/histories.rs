//! Consistent-histories checker.
//!
//! A history chain runs from an initial projector D̂ through time-ordered
//! event families Ê₁ … Êₙ to a final projector F̂. Consistency is evaluated in
//! decoherence-functional form: for every pair of distinct selections α ≠ β,
//! Re Tr(C_α D̂ C_β† F̂) must vanish, with C the time-ordered product of the
//! selected projectors. When the chain is consistent, each selection carries
//! the classical probability Tr(C D̂ C† F̂) / Tr(D̂ F̂).
//!
//! The counterfactual certificate instantiates this for both scenarios: with
//! D̂ the initial entangled pure state and F̂ a completed measurement record,
//! the probability of the intermediate projection onto the branch entangled
//! state is unity for every attainable record.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::born::{Outcome, ProjectorFamily};
use crate::protocols::{
    conditional_pair_state, swap_outcome_state, AncillaOutcome, Scenario, ScenarioKind,
};
use crate::qcore::{
    bell_basis, projector, spin_eigenbasis, BellLabel, BlochDirection, Operator, StateVector,
    EXACT_TOL,
};
use crate::{Error, Result};

/// Chains multiply up to five matrices of dim ≤ 16; this leaves headroom over
/// the 1e-12 exact tolerance without masking genuine inconsistency.
pub const CONSISTENCY_TOL: f64 = 1e-10;

/// Initial projector, time-ordered event families, final projector.
#[derive(Debug, Clone)]
pub struct HistoryChain {
    initial: Operator,
    events: Vec<ProjectorFamily>,
    final_proj: Operator,
}

impl HistoryChain {
    pub fn new(initial: Operator, events: Vec<ProjectorFamily>, final_proj: Operator) -> Result<Self> {
        let dim = initial.dim();
        if final_proj.dim() != dim || events.iter().any(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch(
                "all chain operators must share one dimension".into(),
            ));
        }
        if !initial.is_projector(EXACT_TOL) || !final_proj.is_projector(EXACT_TOL) {
            return Err(Error::InvalidOperator(
                "initial and final events must be projectors".into(),
            ));
        }
        Ok(Self {
            initial,
            events,
            final_proj,
        })
    }

    pub fn initial(&self) -> &Operator {
        &self.initial
    }

    pub fn events(&self) -> &[ProjectorFamily] {
        &self.events
    }

    pub fn final_proj(&self) -> &Operator {
        &self.final_proj
    }

    /// All selections, one projector choice per event family, in lexicographic
    /// order.
    fn selections(&self) -> Vec<Vec<usize>> {
        let mut all = vec![Vec::new()];
        for family in &self.events {
            all = all
                .into_iter()
                .flat_map(|prefix| {
                    (0..family.len()).map(move |i| {
                        let mut next = prefix.clone();
                        next.push(i);
                        next
                    })
                })
                .collect();
        }
        all
    }

    /// C = Êₙ … Ê₁ for the given selection.
    fn chain_operator(&self, choices: &[usize]) -> Result<Operator> {
        let mut op = Operator::identity(self.initial.dim());
        for (family, &idx) in self.events.iter().zip(choices) {
            op = family.projector(idx).mul(&op)?;
        }
        Ok(op)
    }
}

/// One projector choice per event family, time-ordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistorySelection {
    pub choices: Vec<usize>,
}

fn check_selection(chain: &HistoryChain, sel: &HistorySelection) -> Result<()> {
    if sel.choices.len() != chain.events().len() {
        return Err(Error::InvalidArgument(
            "selection must choose once per event family".into(),
        ));
    }
    for (family, &idx) in chain.events().iter().zip(&sel.choices) {
        if idx >= family.len() {
            return Err(Error::InvalidArgument(format!(
                "selection index {idx} out of range"
            )));
        }
    }
    Ok(())
}

/// Maximum |Re Tr(C_α D̂ C_β† F̂)| over distinct selection pairs.
///
/// The chain is consistent iff the defect is below [`CONSISTENCY_TOL`].
pub fn consistency_defect(chain: &HistoryChain) -> Result<f64> {
    let selections = chain.selections();
    // cache C_alpha D and C_beta^dagger F per selection
    let mut left = Vec::with_capacity(selections.len());
    let mut right = Vec::with_capacity(selections.len());
    for sel in &selections {
        let c = chain.chain_operator(sel)?;
        left.push(c.mul(chain.initial())?);
        right.push(c.adjoint().mul(chain.final_proj())?);
    }
    let dim = chain.initial().dim();
    let mut defect: f64 = 0.0;
    for a in 0..selections.len() {
        for b in (a + 1)..selections.len() {
            let mut tr = 0.0;
            for r in 0..dim {
                for k in 0..dim {
                    tr += (left[a].at(r, k) * right[b].at(k, r)).re;
                }
            }
            defect = defect.max(tr.abs());
        }
    }
    Ok(defect)
}

/// Chain probability Tr(C D̂ C† F̂) / Tr(D̂ F̂).
///
/// Refuses to assign a probability to an inconsistent chain or when the
/// denominator vanishes.
pub fn history_probability(chain: &HistoryChain, sel: &HistorySelection) -> Result<f64> {
    check_selection(chain, sel)?;
    let defect = consistency_defect(chain)?;
    if defect >= CONSISTENCY_TOL {
        return Err(Error::InconsistentChain(defect));
    }
    let denom = chain.initial().mul(chain.final_proj())?.trace().re;
    if denom <= EXACT_TOL {
        return Err(Error::VanishingDenominator);
    }
    let c = chain.chain_operator(&sel.choices)?;
    let num = c
        .mul(chain.initial())?
        .mul(&c.adjoint())?
        .mul(chain.final_proj())?
        .trace()
        .re;
    Ok(num / denom)
}

/// Rank-1 final projector for a completed measurement record: spin outcomes
/// `(i, j)` along `directions` on particles 1 and 2, together with the ancilla
/// outcome (a σ₃θ₃ sign for GHZ, a Bell label on (3, 4) for factorable).
pub fn build_final_projector(
    scenario: &Scenario,
    outcomes: (i32, i32),
    ancilla_outcome: AncillaOutcome,
    directions: (&BlochDirection, &BlochDirection),
) -> Result<Operator> {
    let pick = |dir: &BlochDirection, sign: i32| -> Result<StateVector> {
        let (up, down) = spin_eigenbasis(dir);
        match sign {
            1 => Ok(up),
            -1 => Ok(down),
            other => Err(Error::InvalidArgument(format!(
                "spin outcome must be +1 or -1, got {other}"
            ))),
        }
    };
    let e1 = pick(directions.0, outcomes.0)?;
    let e2 = pick(directions.1, outcomes.1)?;
    let local = e1.tensor(&e2)?;
    let full = match (scenario, ancilla_outcome) {
        (Scenario::Ghz { theta3 }, AncillaOutcome::Spin(sign)) => {
            local.tensor(&pick(theta3, sign)?)?
        }
        (Scenario::Factorable, AncillaOutcome::Bell(label)) => local.tensor(&label.state())?,
        _ => {
            return Err(Error::InvalidArgument(
                "ancilla outcome kind does not match scenario".into(),
            ))
        }
    };
    projector(&full)
}

/// Intermediate event family on particles (1, 2): the two ancilla-conditioned
/// branch states completed by Ψ±. For an equatorial GHZ ancilla axis this is
/// exactly the Bell family; for the factorable scenario it is the Bell family
/// outright.
fn intermediate_family(scenario: &Scenario) -> Result<(ProjectorFamily, Vec<String>)> {
    let n = scenario.num_qubits();
    match scenario {
        Scenario::Ghz { theta3 } => {
            let plus = conditional_pair_state(theta3, 1)?;
            let minus = conditional_pair_state(theta3, -1)?;
            let basis = bell_basis();
            let states = [
                plus.state.clone(),
                minus.state.clone(),
                basis[2].clone(),
                basis[3].clone(),
            ];
            let projectors = states
                .iter()
                .map(|s| projector(s)?.embed(&[1, 2], n))
                .collect::<Result<Vec<_>>>()?;
            let names = states.iter().map(branch_name).collect();
            // labels are positional; branch states need not be Bell states
            let labels = (0..4).map(Outcome::Spin).collect();
            Ok((ProjectorFamily::new(projectors, labels)?, names))
        }
        Scenario::Factorable => {
            let family = ProjectorFamily::bell(n, (1, 2))?;
            let names = BellLabel::ALL.iter().map(|l| l.as_str().to_owned()).collect();
            Ok((family, names))
        }
    }
}

/// Human-readable name for a branch state: its Bell label when it is one, the
/// product-state name in the degenerate case, otherwise a generic tag.
fn branch_name(state: &StateVector) -> String {
    if let Some(label) = crate::protocols::bell_label_of(state) {
        return label.as_str().to_owned();
    }
    if state.fidelity(&StateVector::basis(2, 0)).unwrap_or(0.0) > 1.0 - 1e-10 {
        return "up_up".to_owned();
    }
    if state.fidelity(&StateVector::basis(2, 3)).unwrap_or(0.0) > 1.0 - 1e-10 {
        return "down_down".to_owned();
    }
    "entangled_branch".to_owned()
}

/// One final-outcome row of a certificate.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateEntry {
    pub ancilla: AncillaOutcome,
    pub i: i32,
    pub j: i32,
    pub tr_df: f64,
    pub defect: f64,
    pub probabilities: BTreeMap<String, f64>,
    pub designated: String,
    pub pass: bool,
}

/// Certificate that retrodicting the branch entangled state is consistent and
/// certain for every attainable measurement record.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub scenario: ScenarioKind,
    pub theta1: f64,
    pub phi1: f64,
    pub theta2: f64,
    pub phi2: f64,
    /// Set when the GHZ ancilla axis is z-aligned: the designated projectors
    /// are product states and carry no counterfactual entanglement.
    pub degenerate: bool,
    pub entries: Vec<CertificateEntry>,
    pub pass: bool,
}

/// Runs the full certificate for one (θ₁, θ₂) configuration.
///
/// Iterates every ancilla outcome and every (i, j) with Tr(D̂F̂) > 1e-12,
/// checks consistency, and demands probability 1 ± 1e-10 for the designated
/// intermediate projector and 0 ± 1e-10 for its alternatives.
pub fn counterfactual_certificate(
    scenario: &Scenario,
    theta1: &BlochDirection,
    theta2: &BlochDirection,
) -> Result<CertificateReport> {
    let initial = projector(&scenario.initial_state())?;
    let (family, names) = intermediate_family(scenario)?;
    let ancilla_outcomes: Vec<AncillaOutcome> = match scenario {
        Scenario::Ghz { .. } => vec![AncillaOutcome::Spin(1), AncillaOutcome::Spin(-1)],
        Scenario::Factorable => BellLabel::ALL.map(AncillaOutcome::Bell).to_vec(),
    };
    let degenerate = match scenario {
        Scenario::Ghz { theta3 } => theta3.is_z_aligned(),
        Scenario::Factorable => false,
    };

    let mut entries = Vec::new();
    for &anc in &ancilla_outcomes {
        // which intermediate projector the record retrodicts
        let designated_idx = match (scenario, anc) {
            (Scenario::Ghz { .. }, AncillaOutcome::Spin(s)) => {
                if s == 1 {
                    0
                } else {
                    1
                }
            }
            (Scenario::Factorable, AncillaOutcome::Bell(label)) => {
                let swapped = swap_outcome_state(label);
                crate::protocols::bell_label_of(&swapped)
                    .ok_or_else(|| {
                        Error::InvalidState("swap outcome is not a Bell state".into())
                    })?
                    .index()
            }
            _ => unreachable!("outcome kinds follow the scenario"),
        };
        for i in [1i32, -1] {
            for j in [1i32, -1] {
                let final_proj = build_final_projector(scenario, (i, j), anc, (theta1, theta2))?;
                let tr_df = initial.mul(&final_proj)?.trace().re;
                if tr_df <= EXACT_TOL {
                    continue;
                }
                let chain = HistoryChain::new(initial.clone(), vec![family.clone()], final_proj)?;
                let defect = consistency_defect(&chain)?;
                let mut probabilities = BTreeMap::new();
                let mut pass = defect < CONSISTENCY_TOL;
                for (idx, name) in names.iter().enumerate() {
                    let p = history_probability(
                        &chain,
                        &HistorySelection {
                            choices: vec![idx],
                        },
                    )?;
                    let expect = if idx == designated_idx { 1.0 } else { 0.0 };
                    pass &= (p - expect).abs() <= CONSISTENCY_TOL;
                    probabilities.insert(name.clone(), p);
                }
                entries.push(CertificateEntry {
                    ancilla: anc,
                    i,
                    j,
                    tr_df,
                    defect,
                    probabilities,
                    designated: names[designated_idx].clone(),
                    pass,
                });
            }
        }
    }
    let pass = !entries.is_empty() && entries.iter().all(|e| e.pass);
    Ok(CertificateReport {
        scenario: scenario.kind(),
        theta1: theta1.theta(),
        phi1: theta1.phi(),
        theta2: theta2.theta(),
        phi2: theta2.phi(),
        degenerate,
        entries,
        pass,
    })
}
