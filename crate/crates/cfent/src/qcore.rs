//! Dense complex linear algebra for small multi-qubit systems.
//!
//! Basis convention: particle 1 occupies the most significant basis bit, bit
//! value 0 is spin-up along z. All values are immutable after construction and
//! every operation is a pure function. Dimensions stay at or below 2^6, so
//! everything is stored dense.

use num_complex::Complex64;

use crate::{Error, Result};

/// Tolerance for exact linear-algebra identities (norms, Hermiticity, traces).
pub const EXACT_TOL: f64 = 1e-12;
/// Tolerance for eigenvalue positivity, looser to absorb accumulated rounding.
pub const EIGENVALUE_TOL: f64 = 1e-10;
/// Threshold below which |sin θ| marks a measurement direction as z-aligned.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Largest supported system size.
pub const MAX_QUBITS: usize = 6;

fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Bit value (0 = up, 1 = down) of `particle` (1-based, MSB first) in a basis
/// index over `num_qubits` qubits.
#[inline]
pub(crate) fn particle_bit(index: usize, particle: usize, num_qubits: usize) -> usize {
    (index >> (num_qubits - particle)) & 1
}

fn check_particle(particle: usize, num_qubits: usize) -> Result<()> {
    if particle == 0 || particle > num_qubits {
        return Err(Error::ParticleOutOfRange {
            particle,
            num_qubits,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Operator
// ---------------------------------------------------------------------------

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    entries: Vec<Complex64>,
}

impl Operator {
    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::InvalidOperator(format!(
                "expected {} entries for dim {}, got {}",
                dim * dim,
                dim,
                entries.len()
            )));
        }
        if !entries.iter().all(|&z| is_finite(z)) {
            return Err(Error::InvalidOperator("non-finite entry".into()));
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.entries[i * dim + i] = Complex64::ONE;
        }
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.dim + col] = value;
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "operator dims {} and {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.at(r, k);
                if a == Complex64::ZERO {
                    continue;
                }
                for c in 0..n {
                    out.entries[r * n + c] += a * other.at(k, c);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Self {
            dim: self.dim,
            entries,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Self {
            dim: self.dim,
            entries,
        })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&z| z * factor).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out.entries[c * n + r] = self.at(r, c).conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.at(i, i)).sum()
    }

    /// Kronecker product; `self` occupies the high-order bits of the result.
    pub fn tensor(&self, other: &Self) -> Self {
        let n = self.dim;
        let m = other.dim;
        let mut out = Self::zeros(n * m);
        for ar in 0..n {
            for ac in 0..n {
                let a = self.at(ar, ac);
                if a == Complex64::ZERO {
                    continue;
                }
                for br in 0..m {
                    for bc in 0..m {
                        out.entries[(ar * m + br) * n * m + (ac * m + bc)] = a * other.at(br, bc);
                    }
                }
            }
        }
        out
    }

    /// Matrix-vector product on a raw amplitude slice.
    pub fn apply(&self, amps: &[Complex64]) -> Result<Vec<Complex64>> {
        if amps.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "operator dim {} applied to vector of length {}",
                self.dim,
                amps.len()
            )));
        }
        let n = self.dim;
        let mut out = vec![Complex64::ZERO; n];
        for r in 0..n {
            let mut acc = Complex64::ZERO;
            for c in 0..n {
                acc += self.at(r, c) * amps[c];
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// Lifts an operator on the listed particles (1-based, in the order they
    /// appear as `self`'s own qubits, MSB first) into the full `num_qubits`
    /// space, acting as identity elsewhere.
    pub fn embed(&self, particles: &[usize], num_qubits: usize) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptyParticleSet);
        }
        for &p in particles {
            check_particle(p, num_qubits)?;
        }
        let m = particles.len();
        if self.dim != 1 << m {
            return Err(Error::DimensionMismatch(format!(
                "operator dim {} does not match {} target particles",
                self.dim, m
            )));
        }
        let mut sorted = particles.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != m {
            return Err(Error::InvalidArgument("repeated target particle".into()));
        }
        let full = 1 << num_qubits;
        let target_mask: usize = particles
            .iter()
            .map(|&p| 1usize << (num_qubits - p))
            .sum();
        let mut out = Self::zeros(full);
        for row in 0..full {
            let spectator = row & !target_mask;
            let r_small = assemble_sub_index(row, particles, num_qubits);
            for c_small in 0..self.dim {
                let v = self.at(r_small, c_small);
                if v == Complex64::ZERO {
                    continue;
                }
                // scatter c_small's bits back into the target positions
                let mut col = spectator;
                for (k, &p) in particles.iter().enumerate() {
                    let bit = (c_small >> (m - 1 - k)) & 1;
                    col |= bit << (num_qubits - p);
                }
                out.set(row, col, v);
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim;
        for r in 0..n {
            for c in r..n {
                if (self.at(r, c) - self.at(c, r).conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// P² = P and P† = P within `tol`, entrywise.
    pub fn is_projector(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        match self.mul(self) {
            Ok(sq) => sq.max_abs_diff(self) <= tol,
            Err(_) => false,
        }
    }
}

/// Gathers the bits of `index` at the listed particle positions into a small
/// index, first listed particle most significant.
fn assemble_sub_index(index: usize, particles: &[usize], num_qubits: usize) -> usize {
    particles.iter().fold(0, |acc, &p| {
        (acc << 1) | particle_bit(index, p, num_qubits)
    })
}

/// Eigenvalues of a Hermitian operator by cyclic complex Jacobi rotations.
pub fn hermitian_eigenvalues(op: &Operator) -> Result<Vec<f64>> {
    if !op.is_hermitian(1e-9) {
        return Err(Error::InvalidOperator(
            "eigenvalue routine requires a Hermitian operator".into(),
        ));
    }
    let n = op.dim();
    let mut a = op.entries().to_vec();
    let idx = |r: usize, c: usize| r * n + c;
    let scale: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[idx(p, q)].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(p, q)];
                let m = apq.norm();
                if m <= 1e-300 {
                    continue;
                }
                let phase = apq / m;
                let half = Complex64::from_polar(1.0, 0.5 * phase.arg());
                let app = a[idx(p, p)].re;
                let aqq = a[idx(q, q)].re;
                let theta = 0.5 * (2.0 * m).atan2(app - aqq);
                let (s, c) = theta.sin_cos();
                // V restricted to the (p, q) plane: phase factor then rotation
                let vpp = half * c;
                let vpq = half * (-s);
                let vqp = half.conj() * s;
                let vqq = half.conj() * c;
                for r in 0..n {
                    let arp = a[idx(r, p)];
                    let arq = a[idx(r, q)];
                    a[idx(r, p)] = arp * vpp + arq * vqp;
                    a[idx(r, q)] = arp * vpq + arq * vqq;
                }
                for col in 0..n {
                    let apc = a[idx(p, col)];
                    let aqc = a[idx(q, col)];
                    a[idx(p, col)] = vpp.conj() * apc + vqp.conj() * aqc;
                    a[idx(q, col)] = vpq.conj() * apc + vqq.conj() * aqc;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[idx(i, i)].re).collect())
}

// ---------------------------------------------------------------------------
// StateVector
// ---------------------------------------------------------------------------

/// Normalized pure state over the n-qubit computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Builds a state from already-normalized amplitudes (norm 1 within 1e-12).
    pub fn new(num_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        Self::check_shape(num_qubits, &amps)?;
        let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (norm2.sqrt() - 1.0).abs() > EXACT_TOL {
            return Err(Error::InvalidState(format!(
                "norm {} departs from 1 beyond tolerance",
                norm2.sqrt()
            )));
        }
        Ok(Self { num_qubits, amps })
    }

    /// Builds a state from unnormalized amplitudes, normalizing them.
    pub fn normalized(num_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        Self::check_shape(num_qubits, &amps)?;
        let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if norm2 < 1e-24 {
            return Err(Error::InvalidState("cannot normalize a null vector".into()));
        }
        let inv = Complex64::new(1.0 / norm2.sqrt(), 0.0);
        Ok(Self {
            num_qubits,
            amps: amps.into_iter().map(|z| z * inv).collect(),
        })
    }

    fn check_shape(num_qubits: usize, amps: &[Complex64]) -> Result<()> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::InvalidState(format!(
                "unsupported qubit count {num_qubits}"
            )));
        }
        if amps.len() != 1 << num_qubits {
            return Err(Error::InvalidState(format!(
                "expected {} amplitudes for {} qubits, got {}",
                1 << num_qubits,
                num_qubits,
                amps.len()
            )));
        }
        if !amps.iter().all(|&z| is_finite(z)) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        Ok(())
    }

    /// Computational basis state |index⟩.
    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let dim = 1 << num_qubits;
        assert!(index < dim, "basis index out of range");
        let mut amps = vec![Complex64::ZERO; dim];
        amps[index] = Complex64::ONE;
        Self { num_qubits, amps }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::DimensionMismatch(format!(
                "states on {} and {} qubits",
                self.num_qubits, other.num_qubits
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(&a, &b)| a.conj() * b)
            .sum())
    }

    /// Projector fidelity |⟨self|other⟩|², insensitive to global phase.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Tensor product; `self` occupies the high-order bits.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let num_qubits = self.num_qubits + other.num_qubits;
        if num_qubits > MAX_QUBITS {
            return Err(Error::InvalidState(format!(
                "tensor product would exceed {MAX_QUBITS} qubits"
            )));
        }
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for &a in &self.amps {
            for &b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(Self { num_qubits, amps })
    }

    /// Contracts the trailing qubits against `tail` and renormalizes, returning
    /// the leading-subsystem state and the contraction weight |⟨tail|ψ⟩|².
    pub fn contract_tail(&self, tail: &Self) -> Result<(Self, f64)> {
        if tail.num_qubits >= self.num_qubits {
            return Err(Error::DimensionMismatch(
                "tail must be a strict subsystem".into(),
            ));
        }
        let head_qubits = self.num_qubits - tail.num_qubits;
        let tail_dim = tail.dim();
        let mut amps = vec![Complex64::ZERO; 1 << head_qubits];
        for (r, amp) in amps.iter_mut().enumerate() {
            *amp = (0..tail_dim)
                .map(|s| tail.amps[s].conj() * self.amps[r * tail_dim + s])
                .sum();
        }
        let weight: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if weight < EXACT_TOL {
            return Err(Error::InvalidState(
                "contraction weight vanishes; subsystems are orthogonal".into(),
            ));
        }
        let state = Self::normalized(head_qubits, amps)?;
        Ok((state, weight))
    }

    /// Reorders particles: output position `k+1` receives the qubit at input
    /// position `source[k]` (1-based).
    pub fn permute_particles(&self, source: &[usize]) -> Result<Self> {
        let n = self.num_qubits;
        if source.len() != n {
            return Err(Error::InvalidArgument(
                "permutation length must equal qubit count".into(),
            ));
        }
        let mut seen = vec![false; n + 1];
        for &s in source {
            check_particle(s, n)?;
            if seen[s] {
                return Err(Error::InvalidArgument("repeated source position".into()));
            }
            seen[s] = true;
        }
        let dim = self.dim();
        let mut amps = vec![Complex64::ZERO; dim];
        for old in 0..dim {
            let mut new = 0usize;
            for (k, &s) in source.iter().enumerate() {
                new |= particle_bit(old, s, n) << (n - 1 - k);
            }
            amps[new] = self.amps[old];
        }
        Ok(Self {
            num_qubits: n,
            amps,
        })
    }
}

/// Rank-1 projector |v⟩⟨v|. Input must be normalized.
pub fn projector(v: &StateVector) -> Result<Operator> {
    let norm2: f64 = v.amplitudes().iter().map(|z| z.norm_sqr()).sum();
    if (norm2.sqrt() - 1.0).abs() > EXACT_TOL {
        return Err(Error::InvalidState("projector of unnormalized state".into()));
    }
    let dim = v.dim();
    let mut out = Operator::zeros(dim);
    for r in 0..dim {
        for c in 0..dim {
            out.set(r, c, v.amplitudes()[r] * v.amplitudes()[c].conj());
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// DensityMatrix
// ---------------------------------------------------------------------------

/// Hermitian, unit-trace, positive-semidefinite matrix over the n-qubit basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    op: Operator,
}

impl DensityMatrix {
    pub fn new(num_qubits: usize, op: Operator) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS || op.dim() != 1 << num_qubits {
            return Err(Error::DimensionMismatch(format!(
                "density matrix dim {} for {} qubits",
                op.dim(),
                num_qubits
            )));
        }
        if !op.is_hermitian(EXACT_TOL) {
            return Err(Error::InvalidState("density matrix is not Hermitian".into()));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > EXACT_TOL || tr.im.abs() > EXACT_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix trace {tr} departs from 1"
            )));
        }
        let min_eig = hermitian_eigenvalues(&op)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -EIGENVALUE_TOL {
            return Err(Error::InvalidState(format!(
                "density matrix has eigenvalue {min_eig} below -{EIGENVALUE_TOL}"
            )));
        }
        Ok(Self { num_qubits, op })
    }

    pub fn from_pure(v: &StateVector) -> Self {
        Self {
            num_qubits: v.num_qubits(),
            op: projector(v).expect("state vectors are normalized"),
        }
    }

    pub fn maximally_mixed(num_qubits: usize) -> Self {
        let dim = 1 << num_qubits;
        Self {
            num_qubits,
            op: Operator::identity(dim).scale(Complex64::new(1.0 / dim as f64, 0.0)),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.op.at(row, col)
    }

    /// Tr(ρ²); equals 1 for pure states.
    pub fn purity(&self) -> f64 {
        self.op
            .mul(&self.op)
            .expect("same dimension")
            .trace()
            .re
    }

    /// Traces out every particle not in `keep` (1-based, strictly increasing).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::EmptyParticleSet);
        }
        for &p in keep {
            check_particle(p, self.num_qubits)?;
        }
        if !keep.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "keep list must be strictly increasing".into(),
            ));
        }
        if keep.len() == self.num_qubits {
            return Ok(self.clone());
        }
        let n = self.num_qubits;
        let traced: Vec<usize> = (1..=n).filter(|p| !keep.contains(p)).collect();
        let k = keep.len();
        let kd = 1usize << k;
        let td = 1usize << traced.len();
        let assemble = |kept_bits: usize, traced_bits: usize| -> usize {
            let mut idx = 0usize;
            for (i, &p) in keep.iter().enumerate() {
                idx |= ((kept_bits >> (k - 1 - i)) & 1) << (n - p);
            }
            for (i, &p) in traced.iter().enumerate() {
                idx |= ((traced_bits >> (traced.len() - 1 - i)) & 1) << (n - p);
            }
            idx
        };
        let mut out = Operator::zeros(kd);
        for r in 0..kd {
            for c in 0..kd {
                let mut acc = Complex64::ZERO;
                for t in 0..td {
                    acc += self.op.at(assemble(r, t), assemble(c, t));
                }
                out.set(r, c, acc);
            }
        }
        DensityMatrix::new(k, out)
    }
}

/// Pure or mixed quantum state, for operations defined on either.
#[derive(Debug, Clone)]
pub enum QState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl QState {
    pub fn num_qubits(&self) -> usize {
        match self {
            QState::Pure(v) => v.num_qubits(),
            QState::Mixed(rho) => rho.num_qubits(),
        }
    }
}

impl From<StateVector> for QState {
    fn from(v: StateVector) -> Self {
        QState::Pure(v)
    }
}

impl From<DensityMatrix> for QState {
    fn from(rho: DensityMatrix) -> Self {
        QState::Mixed(rho)
    }
}

// ---------------------------------------------------------------------------
// Bloch directions and spin observables
// ---------------------------------------------------------------------------

/// Measurement axis on the Bloch sphere: polar angle θ ∈ [0, π], azimuth
/// φ ∈ [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochDirection {
    theta: f64,
    phi: f64,
}

impl BlochDirection {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::InvalidDirection(format!("theta {theta} not in [0, pi]")));
        }
        if !phi.is_finite() || !(0.0..std::f64::consts::TAU).contains(&phi) {
            return Err(Error::InvalidDirection(format!("phi {phi} not in [0, 2pi)")));
        }
        Ok(Self { theta, phi })
    }

    pub fn x() -> Self {
        Self {
            theta: std::f64::consts::FRAC_PI_2,
            phi: 0.0,
        }
    }

    pub fn y() -> Self {
        Self {
            theta: std::f64::consts::FRAC_PI_2,
            phi: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn z() -> Self {
        Self {
            theta: 0.0,
            phi: 0.0,
        }
    }

    /// Direction in the x–z plane at signed angle `alpha` from +z, mapped to
    /// canonical (θ, φ) with φ ∈ {0, π}.
    pub fn from_xz_angle(alpha: f64) -> Self {
        let a = alpha.rem_euclid(std::f64::consts::TAU);
        if a <= std::f64::consts::PI {
            Self { theta: a, phi: 0.0 }
        } else {
            Self {
                theta: std::f64::consts::TAU - a,
                phi: std::f64::consts::PI,
            }
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// True when the axis is parallel or antiparallel to z within the
    /// degeneracy threshold |sin θ| < 1e-9.
    pub fn is_z_aligned(&self) -> bool {
        self.theta.sin().abs() < DEGENERACY_TOL
    }
}

/// σ·n = sinθcosφ σx + sinθsinφ σy + cosθ σz.
pub fn spin_operator(n: &BlochDirection) -> Operator {
    let [nx, ny, nz] = n.unit_vector();
    Operator::from_entries(
        2,
        vec![
            Complex64::new(nz, 0.0),
            Complex64::new(nx, -ny),
            Complex64::new(nx, ny),
            Complex64::new(-nz, 0.0),
        ],
    )
    .expect("2x2 entries")
}

/// Eigenvectors of σ·n with the fixed phase convention
/// up = (cos(θ/2), e^{iφ} sin(θ/2)), down = (sin(θ/2), −e^{iφ} cos(θ/2)).
pub fn spin_eigenbasis(n: &BlochDirection) -> (StateVector, StateVector) {
    let (s, c) = (0.5 * n.theta()).sin_cos();
    let phase = Complex64::from_polar(1.0, n.phi());
    let up = StateVector::new(1, vec![Complex64::new(c, 0.0), phase * s]).expect("unit norm");
    let down = StateVector::new(1, vec![Complex64::new(s, 0.0), phase * (-c)]).expect("unit norm");
    (up, down)
}

// ---------------------------------------------------------------------------
// Bell basis
// ---------------------------------------------------------------------------

/// The four maximally entangled two-qubit basis states.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [
        BellLabel::PhiPlus,
        BellLabel::PhiMinus,
        BellLabel::PsiPlus,
        BellLabel::PsiMinus,
    ];

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|l| l == self).unwrap()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BellLabel::PhiPlus => "phi_plus",
            BellLabel::PhiMinus => "phi_minus",
            BellLabel::PsiPlus => "psi_plus",
            BellLabel::PsiMinus => "psi_minus",
        }
    }

    pub fn state(&self) -> StateVector {
        bell_basis()[self.index()].clone()
    }
}

impl std::fmt::Display for BellLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BellLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BellLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown Bell label {s:?}")))
    }
}

/// Ordered [Φ+, Φ−, Ψ+, Ψ−] with Φ± = (|↑↑⟩ ± |↓↓⟩)/√2, Ψ± = (|↑↓⟩ ± |↓↑⟩)/√2.
pub fn bell_basis() -> [StateVector; 4] {
    let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let z = Complex64::ZERO;
    let mk = |amps: Vec<Complex64>| StateVector::new(2, amps).expect("unit norm");
    [
        mk(vec![r, z, z, r]),
        mk(vec![r, z, z, -r]),
        mk(vec![z, r, r, z]),
        mk(vec![z, r, -r, z]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_direction(theta: f64, phi: f64) -> BlochDirection {
        BlochDirection::new(theta, phi).unwrap()
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let i2 = Operator::identity(2);
        assert_eq!(i2.tensor(&i2), Operator::identity(4));
    }

    #[test]
    fn tensor_of_basis_states_is_basis_state() {
        let up = StateVector::basis(1, 0);
        let prod = up.tensor(&up).unwrap();
        assert_eq!(prod, StateVector::basis(2, 0));
    }

    #[test]
    fn spin_operator_along_z_and_x() {
        let sz = spin_operator(&BlochDirection::z());
        assert!(sz.max_abs_diff(
            &Operator::from_entries(2, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
                .unwrap()
        ) < EXACT_TOL);
        let sx = spin_operator(&BlochDirection::x());
        assert!(sx.max_abs_diff(
            &Operator::from_entries(2, vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
                .unwrap()
        ) < EXACT_TOL);
    }

    #[test]
    fn spin_eigenbasis_conventions() {
        let (up, down) = spin_eigenbasis(&BlochDirection::x());
        for (amp, expect) in up.amplitudes().iter().zip([FRAC_1_SQRT_2, FRAC_1_SQRT_2]) {
            assert!((amp - c(expect, 0.0)).norm() < EXACT_TOL);
        }
        for (amp, expect) in down
            .amplitudes()
            .iter()
            .zip([FRAC_1_SQRT_2, -FRAC_1_SQRT_2])
        {
            assert!((amp - c(expect, 0.0)).norm() < EXACT_TOL);
        }
        let (up, down) = spin_eigenbasis(&BlochDirection::z());
        assert_eq!(up, StateVector::basis(1, 0));
        assert!(down.fidelity(&StateVector::basis(1, 1)).unwrap() > 1.0 - EXACT_TOL);
    }

    #[test]
    fn projector_examples() {
        let p = projector(&StateVector::basis(1, 0)).unwrap();
        assert!(p.at(0, 0).re == 1.0 && p.at(1, 1).norm() == 0.0);
        let plus = StateVector::new(1, vec![c(FRAC_1_SQRT_2, 0.0); 2]).unwrap();
        let p = projector(&plus).unwrap();
        for r in 0..2 {
            for col in 0..2 {
                assert!((p.at(r, col) - c(0.5, 0.0)).norm() < EXACT_TOL);
            }
        }
    }

    #[test]
    fn projector_rejects_unnormalized_input() {
        let v = StateVector {
            num_qubits: 1,
            amps: vec![c(2.0, 0.0), c(0.0, 0.0)],
        };
        assert!(projector(&v).is_err());
    }

    #[test]
    fn bell_basis_is_orthonormal_and_maximally_entangled() {
        let basis = bell_basis();
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let ip = a.inner(b).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip.norm() - expect).abs() < EXACT_TOL);
            }
        }
        let half = DensityMatrix::maximally_mixed(1);
        for state in &basis {
            let rho = DensityMatrix::from_pure(state);
            for keep in [[1usize], [2usize]] {
                let red = rho.partial_trace(&keep).unwrap();
                assert!(red.operator().max_abs_diff(half.operator()) < EXACT_TOL);
            }
        }
    }

    #[test]
    fn phi_plus_amplitudes() {
        let phi_plus = BellLabel::PhiPlus.state();
        let expect = [FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2];
        for (amp, e) in phi_plus.amplitudes().iter().zip(expect) {
            assert!((amp - c(e, 0.0)).norm() < EXACT_TOL);
        }
    }

    #[test]
    fn partial_trace_of_product_recovers_factor() {
        let (up, _) = spin_eigenbasis(&random_direction(0.7, 1.3));
        let rho_a = DensityMatrix::from_pure(&up);
        let rho_b = DensityMatrix::maximally_mixed(1);
        let joint = DensityMatrix::new(2, rho_a.operator().tensor(rho_b.operator())).unwrap();
        let back = joint.partial_trace(&[1]).unwrap();
        assert!(back.operator().max_abs_diff(rho_a.operator()) < EXACT_TOL);
    }

    #[test]
    fn ghz_reduction_matches_diagonal_half_mixture() {
        let r = c(FRAC_1_SQRT_2, 0.0);
        let mut amps = vec![Complex64::ZERO; 8];
        amps[0] = r;
        amps[7] = r;
        let ghz = StateVector::new(3, amps).unwrap();
        let rho12 = DensityMatrix::from_pure(&ghz).partial_trace(&[1, 2]).unwrap();
        let mut expect = Operator::zeros(4);
        expect.set(0, 0, c(0.5, 0.0));
        expect.set(3, 3, c(0.5, 0.0));
        assert!(rho12.operator().max_abs_diff(&expect) < EXACT_TOL);
    }

    #[test]
    fn partial_trace_composition_equals_union() {
        let r = c(FRAC_1_SQRT_2, 0.0);
        let mut amps = vec![Complex64::ZERO; 8];
        amps[0] = r;
        amps[7] = r;
        let ghz = DensityMatrix::from_pure(&StateVector::new(3, amps).unwrap());
        let direct = ghz.partial_trace(&[2]).unwrap();
        let staged = ghz
            .partial_trace(&[2, 3])
            .unwrap()
            .partial_trace(&[1])
            .unwrap();
        assert!(direct.operator().max_abs_diff(staged.operator()) < EXACT_TOL);
    }

    #[test]
    fn partial_trace_rejects_bad_keep_sets() {
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            rho.partial_trace(&[]),
            Err(Error::EmptyParticleSet)
        ));
        assert!(matches!(
            rho.partial_trace(&[3]),
            Err(Error::ParticleOutOfRange { .. })
        ));
    }

    #[test]
    fn embed_places_operator_on_requested_particle() {
        let sz = spin_operator(&BlochDirection::z());
        let on_second = sz.embed(&[2], 2).unwrap();
        let expect = Operator::identity(2).tensor(&sz);
        assert!(on_second.max_abs_diff(&expect) < EXACT_TOL);
        let on_first = sz.embed(&[1], 2).unwrap();
        let expect = sz.tensor(&Operator::identity(2));
        assert!(on_first.max_abs_diff(&expect) < EXACT_TOL);
    }

    #[test]
    fn hermitian_eigenvalues_of_pauli_x() {
        let sx = spin_operator(&BlochDirection::x());
        let mut eigs = hermitian_eigenvalues(&sx).unwrap();
        eigs.sort_by(f64::total_cmp);
        assert!((eigs[0] + 1.0).abs() < 1e-12 && (eigs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permute_particles_reorders_tensor_factors() {
        let phi_plus = BellLabel::PhiPlus.state();
        // particles laid out as (1,3,2,4), then brought to canonical order
        let raw = phi_plus.tensor(&phi_plus).unwrap();
        let canonical = raw.permute_particles(&[1, 3, 2, 4]).unwrap();
        // canonical state pairs (1,3) and (2,4) as Phi+
        let mut expect = vec![Complex64::ZERO; 16];
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            // particle bits: p1=i, p3=i, p2=j, p4=j
            let idx = (i << 3) | (j << 2) | (i << 1) | j;
            expect[idx] = c(0.5, 0.0);
        }
        for (a, e) in canonical.amplitudes().iter().zip(expect) {
            assert!((a - e).norm() < EXACT_TOL);
        }
    }

    #[test]
    fn contract_tail_splits_product_state() {
        let (up, down) = spin_eigenbasis(&random_direction(1.1, 0.4));
        let joint = BellLabel::PsiPlus.state().tensor(&down).unwrap();
        let (head, weight) = joint.contract_tail(&down).unwrap();
        assert!((weight - 1.0).abs() < EXACT_TOL);
        assert!(head.fidelity(&BellLabel::PsiPlus.state()).unwrap() > 1.0 - EXACT_TOL);
        assert!(joint.contract_tail(&up).is_err());
    }

    proptest! {
        #[test]
        fn tensor_is_associative(
            re in proptest::collection::vec(-1.0f64..1.0, 12),
            im in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let entries: Vec<Complex64> =
                re.iter().zip(&im).map(|(&r, &i)| c(r, i)).collect();
            let a = Operator::from_entries(2, entries[0..4].to_vec()).unwrap();
            let b = Operator::from_entries(2, entries[4..8].to_vec()).unwrap();
            let d = Operator::from_entries(2, entries[8..12].to_vec()).unwrap();
            let left = a.tensor(&b).tensor(&d);
            let right = a.tensor(&b.tensor(&d));
            prop_assert!(left.max_abs_diff(&right) < EXACT_TOL);
        }

        #[test]
        fn spin_operator_is_involutory_and_traceless(
            theta in 0.0..PI,
            phi in 0.0..6.2831,
        ) {
            let op = spin_operator(&random_direction(theta, phi));
            prop_assert!(op.is_hermitian(EXACT_TOL));
            prop_assert!(op.trace().norm() < EXACT_TOL);
            let sq = op.mul(&op).unwrap();
            prop_assert!(sq.max_abs_diff(&Operator::identity(2)) < EXACT_TOL);
        }

        #[test]
        fn spin_eigenbasis_is_orthonormal_resolution(
            theta in 0.0..PI,
            phi in 0.0..6.2831,
        ) {
            let dir = random_direction(theta, phi);
            let (up, down) = spin_eigenbasis(&dir);
            prop_assert!(up.inner(&down).unwrap().norm() < EXACT_TOL);
            let p_up = projector(&up).unwrap();
            let p_down = projector(&down).unwrap();
            prop_assert!(p_up.is_projector(EXACT_TOL));
            prop_assert!(
                p_up.add(&p_down).unwrap().max_abs_diff(&Operator::identity(2)) < EXACT_TOL
            );
            // sigma.n = P_up - P_down
            let diff = p_up.sub(&p_down).unwrap();
            prop_assert!(diff.max_abs_diff(&spin_operator(&dir)) < EXACT_TOL);
            // eigenvector equations
            let applied = spin_operator(&dir).apply(up.amplitudes()).unwrap();
            for (a, b) in applied.iter().zip(up.amplitudes()) {
                prop_assert!((a - b).norm() < EXACT_TOL);
            }
            let applied = spin_operator(&dir).apply(down.amplitudes()).unwrap();
            for (a, b) in applied.iter().zip(down.amplitudes()) {
                prop_assert!((a + b).norm() < EXACT_TOL);
            }
        }

        #[test]
        fn projector_of_random_state_is_idempotent(
            re in proptest::collection::vec(-1.0f64..1.0, 4),
            im in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let amps: Vec<Complex64> = re.iter().zip(&im).map(|(&r, &i)| c(r, i)).collect();
            let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
            prop_assume!(norm2 > 1e-3);
            let v = StateVector::normalized(2, amps).unwrap();
            prop_assert!(projector(&v).unwrap().is_projector(EXACT_TOL));
        }

        #[test]
        fn partial_trace_preserves_trace_and_hermiticity(
            re in proptest::collection::vec(-1.0f64..1.0, 16),
            im in proptest::collection::vec(-1.0f64..1.0, 16),
            weight in 0.05f64..0.95,
            keep_first in proptest::bool::ANY,
        ) {
            let amps: Vec<Complex64> = re.iter().zip(&im).map(|(&r, &i)| c(r, i)).collect();
            let n1: f64 = amps[0..8].iter().map(|z| z.norm_sqr()).sum();
            let n2: f64 = amps[8..16].iter().map(|z| z.norm_sqr()).sum();
            prop_assume!(n1 > 1e-3 && n2 > 1e-3);
            let v1 = StateVector::normalized(3, amps[0..8].to_vec()).unwrap();
            let v2 = StateVector::normalized(3, amps[8..16].to_vec()).unwrap();
            let mixed = DensityMatrix::from_pure(&v1)
                .operator()
                .scale(c(weight, 0.0))
                .add(&DensityMatrix::from_pure(&v2).operator().scale(c(1.0 - weight, 0.0)))
                .unwrap();
            let rho = DensityMatrix::new(3, mixed).unwrap();
            let keep: &[usize] = if keep_first { &[1] } else { &[2, 3] };
            let red = rho.partial_trace(keep).unwrap();
            prop_assert!((red.operator().trace().re - 1.0).abs() < EXACT_TOL);
            prop_assert!(red.operator().is_hermitian(EXACT_TOL));
        }
    }

    #[test]
    fn xz_angle_wraps_into_canonical_ranges() {
        let d = BlochDirection::from_xz_angle(-FRAC_PI_2);
        assert!((d.theta() - FRAC_PI_2).abs() < EXACT_TOL);
        assert!((d.phi() - PI).abs() < EXACT_TOL);
        let v = d.unit_vector();
        assert!((v[0] + 1.0).abs() < EXACT_TOL && v[2].abs() < EXACT_TOL);
    }
}
