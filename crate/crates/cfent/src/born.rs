//! Born-rule measurement engine: exact outcome probabilities, collapse,
//! sequential measurement, and seeded stochastic sampling.
//!
//! Sampling is reproducible by construction: every trial draws from its own
//! counter-derived stream, so results depend only on `(seed, trial_index)` and
//! never on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::qcore::{
    bell_basis, projector, spin_eigenbasis, BellLabel, BlochDirection, Operator, QState,
    StateVector, EXACT_TOL,
};
use crate::{Error, Result};

/// Probabilities below this are treated as genuine zeros when collapsing.
pub const ZERO_PROB_TOL: f64 = 1e-12;

/// Label attached to one projector of a measurement family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    /// Spin outcome ±1.
    Spin(i32),
    /// Bell-operator outcome.
    Bell(BellLabel),
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Spin(s) => write!(f, "{s:+}"),
            Outcome::Bell(l) => f.write_str(l.as_str()),
        }
    }
}

/// One local spin measurement: which particle, along which axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    pub particle: usize,
    pub direction: BlochDirection,
}

/// Complete set of mutually orthogonal projectors with outcome labels.
#[derive(Debug, Clone)]
pub struct ProjectorFamily {
    projectors: Vec<Operator>,
    labels: Vec<Outcome>,
}

impl ProjectorFamily {
    /// Validates mutual orthogonality (PᵢPⱼ = 0 for i ≠ j) and completeness
    /// (ΣPᵢ = I), both entrywise within 1e-12.
    pub fn new(projectors: Vec<Operator>, labels: Vec<Outcome>) -> Result<Self> {
        if projectors.is_empty() || projectors.len() != labels.len() {
            return Err(Error::InvalidFamily(
                "projector and label counts must match and be nonzero".into(),
            ));
        }
        let dim = projectors[0].dim();
        let mut sum = Operator::zeros(dim);
        for (i, p) in projectors.iter().enumerate() {
            if p.dim() != dim {
                return Err(Error::InvalidFamily("mixed dimensions".into()));
            }
            if !p.is_projector(EXACT_TOL) {
                return Err(Error::InvalidFamily(format!("element {i} is not a projector")));
            }
            sum = sum.add(p)?;
            for q in projectors.iter().skip(i + 1) {
                if p.mul(q)?.max_abs_diff(&Operator::zeros(dim)) > EXACT_TOL {
                    return Err(Error::InvalidFamily("elements are not orthogonal".into()));
                }
            }
        }
        if sum.max_abs_diff(&Operator::identity(dim)) > EXACT_TOL {
            return Err(Error::InvalidFamily("family is not complete".into()));
        }
        Ok(Self { projectors, labels })
    }

    /// Two-outcome family for σ·n on one particle of an n-qubit system,
    /// labelled +1 (up) then −1 (down).
    pub fn spin(num_qubits: usize, particle: usize, direction: &BlochDirection) -> Result<Self> {
        let (up, down) = spin_eigenbasis(direction);
        let projectors = vec![
            projector(&up)?.embed(&[particle], num_qubits)?,
            projector(&down)?.embed(&[particle], num_qubits)?,
        ];
        Self::new(projectors, vec![Outcome::Spin(1), Outcome::Spin(-1)])
    }

    /// Four-outcome Bell-operator family on a particle pair, ordered
    /// [Φ+, Φ−, Ψ+, Ψ−].
    pub fn bell(num_qubits: usize, pair: (usize, usize)) -> Result<Self> {
        let mut projectors = Vec::with_capacity(4);
        let mut labels = Vec::with_capacity(4);
        for (state, label) in bell_basis().iter().zip(BellLabel::ALL) {
            projectors.push(projector(state)?.embed(&[pair.0, pair.1], num_qubits)?);
            labels.push(Outcome::Bell(label));
        }
        Self::new(projectors, labels)
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projector(&self, index: usize) -> &Operator {
        &self.projectors[index]
    }

    pub fn projectors(&self) -> &[Operator] {
        &self.projectors
    }

    pub fn label(&self, index: usize) -> Outcome {
        self.labels[index]
    }

    pub fn labels(&self) -> &[Outcome] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].dim()
    }

    /// Index of the outcome carrying the given label.
    pub fn index_of(&self, label: Outcome) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }
}

/// Deterministic per-trial randomness: one independent stream per
/// `(seed, stream_id)` pair, derived by a counter-based construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Born probabilities ⟨ψ|Pᵢ|ψ⟩ for each family outcome, clamped to [0, 1].
pub fn outcome_probabilities(state: &StateVector, family: &ProjectorFamily) -> Result<Vec<f64>> {
    if family.dim() != state.dim() {
        return Err(Error::DimensionMismatch(format!(
            "family dim {} vs state dim {}",
            family.dim(),
            state.dim()
        )));
    }
    let mut probs = Vec::with_capacity(family.len());
    for p in family.projectors() {
        let applied = p.apply(state.amplitudes())?;
        let prob: f64 = applied
            .iter()
            .zip(state.amplitudes())
            .map(|(pa, a)| (a.conj() * pa).re)
            .sum();
        probs.push(prob.clamp(0.0, 1.0));
    }
    Ok(probs)
}

/// Projects onto the selected outcome and renormalizes.
///
/// Fails with [`Error::ZeroProbability`] when the branch carries probability
/// below 1e-12, signalling an impossible postselection.
pub fn collapse(
    state: &StateVector,
    family: &ProjectorFamily,
    outcome_index: usize,
) -> Result<StateVector> {
    let probs = outcome_probabilities(state, family)?;
    let p = *probs
        .get(outcome_index)
        .ok_or_else(|| Error::InvalidArgument(format!("outcome index {outcome_index}")))?;
    if p < ZERO_PROB_TOL {
        return Err(Error::ZeroProbability(outcome_index));
    }
    let projected = family.projector(outcome_index).apply(state.amplitudes())?;
    StateVector::normalized(state.num_qubits(), projected)
}

/// Samples one outcome index from a probability vector.
pub fn sample_outcome<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Applies the listed spin measurements in order, sampling each outcome from
/// the conditional Born distribution given the prior collapses.
pub fn measure_sequence<R: Rng>(
    state: &StateVector,
    settings: &[MeasurementSetting],
    rng: &mut R,
) -> Result<(Vec<i32>, StateVector)> {
    let mut current = state.clone();
    let mut outcomes = Vec::with_capacity(settings.len());
    for setting in settings {
        let family = ProjectorFamily::spin(current.num_qubits(), setting.particle, &setting.direction)?;
        let probs = outcome_probabilities(&current, &family)?;
        let idx = sample_outcome(&probs, rng);
        current = collapse(&current, &family, idx)?;
        match family.label(idx) {
            Outcome::Spin(s) => outcomes.push(s),
            Outcome::Bell(_) => unreachable!("spin family carries spin labels"),
        }
    }
    Ok((outcomes, current))
}

/// ⟨O⟩ for a pure state or density matrix. The observable must be Hermitian.
pub fn expectation(state: &QState, obs: &Operator) -> Result<f64> {
    if !obs.is_hermitian(EXACT_TOL) {
        return Err(Error::InvalidOperator("observable is not Hermitian".into()));
    }
    match state {
        QState::Pure(v) => {
            if obs.dim() != v.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "observable dim {} vs state dim {}",
                    obs.dim(),
                    v.dim()
                )));
            }
            let applied = obs.apply(v.amplitudes())?;
            Ok(applied
                .iter()
                .zip(v.amplitudes())
                .map(|(oa, a)| (a.conj() * oa).re)
                .sum())
        }
        QState::Mixed(rho) => {
            if obs.dim() != rho.operator().dim() {
                return Err(Error::DimensionMismatch(format!(
                    "observable dim {} vs density matrix dim {}",
                    obs.dim(),
                    rho.operator().dim()
                )));
            }
            Ok(rho.operator().mul(obs)?.trace().re)
        }
    }
}

/// E(a, b) = ⟨(σ·a) ⊗ (σ·b)⟩ on a two-qubit state.
pub fn correlator(state: &QState, a: &BlochDirection, b: &BlochDirection) -> Result<f64> {
    if state.num_qubits() != 2 {
        return Err(Error::DimensionMismatch(
            "correlator requires a two-qubit state".into(),
        ));
    }
    let obs = crate::qcore::spin_operator(a).tensor(&crate::qcore::spin_operator(b));
    expectation(state, &obs)
}

/// Exact joint distribution over outcome-index tuples for a sequence of
/// measurement families applied in order, enumerated over every branch.
pub fn joint_distribution(
    state: &StateVector,
    families: &[ProjectorFamily],
) -> Result<Vec<(Vec<usize>, f64)>> {
    fn recurse(
        state: &StateVector,
        families: &[ProjectorFamily],
        prefix: &mut Vec<usize>,
        weight: f64,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) -> Result<()> {
        let Some((family, rest)) = families.split_first() else {
            out.push((prefix.clone(), weight));
            return Ok(());
        };
        let probs = outcome_probabilities(state, family)?;
        for (idx, &p) in probs.iter().enumerate() {
            prefix.push(idx);
            if p < ZERO_PROB_TOL {
                // dead branch: emit zero-probability completions without collapsing
                emit_zeros(rest, prefix, out);
            } else {
                let next = collapse(state, family, idx)?;
                recurse(&next, rest, prefix, weight * p, out)?;
            }
            prefix.pop();
        }
        Ok(())
    }

    fn emit_zeros(families: &[ProjectorFamily], prefix: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
        let Some((family, rest)) = families.split_first() else {
            out.push((prefix.clone(), 0.0));
            return;
        };
        for idx in 0..family.len() {
            prefix.push(idx);
            emit_zeros(rest, prefix, out);
            prefix.pop();
        }
    }

    let mut out = Vec::new();
    recurse(state, families, &mut Vec::new(), 1.0, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use super::*;
    use crate::qcore::DensityMatrix;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ghz() -> StateVector {
        let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut amps = vec![Complex64::ZERO; 8];
        amps[0] = r;
        amps[7] = r;
        StateVector::new(3, amps).unwrap()
    }

    #[test]
    fn eigenstate_has_certain_outcome() {
        let up = StateVector::basis(1, 0);
        let family = ProjectorFamily::spin(1, 1, &BlochDirection::z()).unwrap();
        let probs = outcome_probabilities(&up, &family).unwrap();
        assert!((probs[0] - 1.0).abs() < EXACT_TOL && probs[1] < EXACT_TOL);
    }

    #[test]
    fn ghz_ancilla_outcomes_are_even_for_any_direction() {
        for (theta, phi) in [(FRAC_PI_2, 0.0), (0.3, 1.2), (2.1, 4.0), (0.0, 0.0)] {
            let dir = BlochDirection::new(theta, phi).unwrap();
            let family = ProjectorFamily::spin(3, 3, &dir).unwrap();
            let probs = outcome_probabilities(&ghz(), &family).unwrap();
            assert!((probs[0] - 0.5).abs() < EXACT_TOL);
            assert!((probs[1] - 0.5).abs() < EXACT_TOL);
        }
    }

    #[test]
    fn bell_eigenstate_in_bell_family() {
        let family = ProjectorFamily::bell(2, (1, 2)).unwrap();
        let probs = outcome_probabilities(&BellLabel::PhiPlus.state(), &family).unwrap();
        assert!((probs[0] - 1.0).abs() < EXACT_TOL);
        assert!(probs[1..].iter().all(|&p| p < EXACT_TOL));
    }

    #[test]
    fn ghz_collapse_on_sigma3x_plus_gives_phi_plus_branch() {
        let family = ProjectorFamily::spin(3, 3, &BlochDirection::x()).unwrap();
        let collapsed = collapse(&ghz(), &family, 0).unwrap();
        let (up_x, _) = spin_eigenbasis(&BlochDirection::x());
        let expect = BellLabel::PhiPlus.state().tensor(&up_x).unwrap();
        assert!(collapsed.fidelity(&expect).unwrap() > 1.0 - EXACT_TOL);
    }

    #[test]
    fn collapse_fixed_point_and_zero_probability_branch() {
        let up = StateVector::basis(1, 0);
        let family = ProjectorFamily::spin(1, 1, &BlochDirection::z()).unwrap();
        let same = collapse(&up, &family, 0).unwrap();
        assert!(same.fidelity(&up).unwrap() > 1.0 - EXACT_TOL);
        assert!(matches!(
            collapse(&up, &family, 1),
            Err(Error::ZeroProbability(1))
        ));
    }

    #[test]
    fn measure_sequence_on_product_state_is_deterministic() {
        let upup = StateVector::basis(2, 0);
        let settings = [
            MeasurementSetting {
                particle: 1,
                direction: BlochDirection::z(),
            },
            MeasurementSetting {
                particle: 2,
                direction: BlochDirection::z(),
            },
        ];
        for seed in 0..20 {
            let mut rng = RngStream::new(7, seed).rng();
            let (outcomes, _) = measure_sequence(&upup, &settings, &mut rng).unwrap();
            assert_eq!(outcomes, vec![1, 1]);
        }
    }

    #[test]
    fn ghz_z_measurements_are_perfectly_correlated() {
        let settings = [
            MeasurementSetting {
                particle: 1,
                direction: BlochDirection::z(),
            },
            MeasurementSetting {
                particle: 2,
                direction: BlochDirection::z(),
            },
        ];
        for trial in 0..200 {
            let mut rng = RngStream::new(11, trial).rng();
            let (outcomes, _) = measure_sequence(&ghz(), &settings, &mut rng).unwrap();
            assert_eq!(outcomes[0], outcomes[1]);
        }
    }

    #[test]
    fn sampled_frequencies_match_exact_probabilities() {
        let n = 100_000usize;
        let settings = [
            MeasurementSetting {
                particle: 1,
                direction: BlochDirection::z(),
            },
            MeasurementSetting {
                particle: 2,
                direction: BlochDirection::z(),
            },
        ];
        let mut both_up = 0usize;
        for trial in 0..n {
            let mut rng = RngStream::new(3, trial as u64).rng();
            let (outcomes, _) = measure_sequence(&ghz(), &settings, &mut rng).unwrap();
            if outcomes == [1, 1] {
                both_up += 1;
            }
        }
        let p = 0.5;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = both_up as f64 / n as f64;
        assert!(
            (freq - p).abs() < 5.0 * sigma,
            "frequency {freq} departs from {p} beyond 5 sigma"
        );
    }

    #[test]
    fn expectation_examples() {
        let up = StateVector::basis(1, 0);
        let sz = crate::qcore::spin_operator(&BlochDirection::z());
        assert!((expectation(&up.clone().into(), &sz).unwrap() - 1.0).abs() < EXACT_TOL);

        let sx = crate::qcore::spin_operator(&BlochDirection::x());
        let xx = sx.tensor(&sx);
        let val = expectation(&BellLabel::PhiPlus.state().into(), &xx).unwrap();
        assert!((val - 1.0).abs() < EXACT_TOL);

        let mixed = DensityMatrix::maximally_mixed(1);
        assert!(expectation(&mixed.into(), &sz).unwrap().abs() < EXACT_TOL);
    }

    #[test]
    fn expectation_rejects_non_hermitian_observable() {
        let bad = Operator::from_entries(
            2,
            vec![
                Complex64::ZERO,
                Complex64::ONE,
                Complex64::ZERO,
                Complex64::ZERO,
            ],
        )
        .unwrap();
        assert!(expectation(&StateVector::basis(1, 0).into(), &bad).is_err());
    }

    #[test]
    fn eq1_density_matrix_correlators() {
        let rho = DensityMatrix::from_pure(&ghz()).partial_trace(&[1, 2]).unwrap();
        let state: QState = rho.into();
        let e_zz = correlator(&state, &BlochDirection::z(), &BlochDirection::z()).unwrap();
        assert!((e_zz - 1.0).abs() < EXACT_TOL);
        let e_xx = correlator(&state, &BlochDirection::x(), &BlochDirection::x()).unwrap();
        assert!(e_xx.abs() < EXACT_TOL);
    }

    #[test]
    fn joint_distribution_orders_commute() {
        let f1 = ProjectorFamily::spin(3, 1, &BlochDirection::new(0.7, 0.2).unwrap()).unwrap();
        let f2 = ProjectorFamily::spin(3, 2, &BlochDirection::new(1.9, 5.0).unwrap()).unwrap();
        let f3 = ProjectorFamily::spin(3, 3, &BlochDirection::x()).unwrap();
        let fwd = joint_distribution(&ghz(), &[f1.clone(), f2.clone(), f3.clone()]).unwrap();
        let rev = joint_distribution(&ghz(), &[f3, f2, f1]).unwrap();
        // compare P(o1, o2, o3) from both orderings
        for (key, p) in &fwd {
            let flipped = vec![key[2], key[1], key[0]];
            let q = rev
                .iter()
                .find(|(k, _)| *k == flipped)
                .map(|(_, q)| *q)
                .unwrap();
            assert!((p - q).abs() < EXACT_TOL);
        }
    }

    proptest! {
        #[test]
        fn probabilities_normalize_for_random_states_and_directions(
            re in proptest::collection::vec(-1.0f64..1.0, 8),
            im in proptest::collection::vec(-1.0f64..1.0, 8),
            theta in 0.0..PI,
            phi in 0.0..6.2831,
            particle in 1usize..=3,
        ) {
            let amps: Vec<Complex64> =
                re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
            let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
            prop_assume!(norm2 > 1e-3);
            let state = StateVector::normalized(3, amps).unwrap();
            let dir = BlochDirection::new(theta, phi).unwrap();
            let family = ProjectorFamily::spin(3, particle, &dir).unwrap();
            let probs = outcome_probabilities(&state, &family).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < EXACT_TOL);
            prop_assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }

        #[test]
        fn collapse_is_idempotent(
            re in proptest::collection::vec(-1.0f64..1.0, 4),
            im in proptest::collection::vec(-1.0f64..1.0, 4),
            theta in 0.0..PI,
            phi in 0.0..6.2831,
        ) {
            let amps: Vec<Complex64> =
                re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
            let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
            prop_assume!(norm2 > 1e-3);
            let state = StateVector::normalized(2, amps).unwrap();
            let dir = BlochDirection::new(theta, phi).unwrap();
            let family = ProjectorFamily::spin(2, 1, &dir).unwrap();
            let probs = outcome_probabilities(&state, &family).unwrap();
            let idx = if probs[0] >= probs[1] { 0 } else { 1 };
            let once = collapse(&state, &family, idx).unwrap();
            let twice = collapse(&once, &family, idx).unwrap();
            prop_assert!(once.fidelity(&twice).unwrap() > 1.0 - EXACT_TOL);
        }

        #[test]
        fn correlator_of_phi_plus_in_xz_plane(
            alpha in -PI..PI,
            beta in -PI..PI,
        ) {
            let state: QState = BellLabel::PhiPlus.state().into();
            let a = BlochDirection::from_xz_angle(alpha);
            let b = BlochDirection::from_xz_angle(beta);
            let e = correlator(&state, &a, &b).unwrap();
            prop_assert!((e - (alpha - beta).cos()).abs() < 1e-10);
            prop_assert!(e.abs() <= 1.0 + 1e-12);
        }
    }
}
