//! A small dense-statevector backend with lazy qubit attachment.
//!
//! Qubits are attached on first use and removed as soon as they are measured,
//! so the live register tracks the causal width of the pattern rather than
//! its total size (a linear cluster of any length needs only two live qubits
//! at a time). Channels use trajectory semantics: one Kraus branch is sampled
//! per application and the state is renormalized, so repeated seeded runs
//! reproduce the channel's distribution without density matrices.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::Angle8;

/// Default cap on simultaneously live qubits (2^16 amplitudes).
pub const DEFAULT_ACTIVE_CAP: usize = 16;

/// Norm drift beyond this is an internal error rather than rounding.
pub const NORM_TOLERANCE: f64 = 1e-9;

pub type Label = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("label {0} is already attached")]
    AlreadyActive(Label),
    #[error("label {0} is not attached")]
    UnknownLabel(Label),
    #[error("attaching label {label} would exceed the live-qubit cap {cap}")]
    CapExceeded { label: Label, cap: usize },
    #[error("state norm drifted to {norm} (tolerance {NORM_TOLERANCE})")]
    NormDrift { norm: f64 },
    #[error("invalid channel: {0}")]
    BadChannel(String),
    #[error("channel arity {arity} does not match {given} target labels")]
    ArityMismatch { arity: usize, given: usize },
}

/// What the Client sends for one vertex: an equatorial state `|+_theta>` or a
/// computational dummy `|d>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreparedQubit {
    PlusTheta(Angle8),
    Dummy(bool),
}

/// Single-qubit Pauli operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Vec<Vec<Complex64>> {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            Pauli::X => vec![vec![z, one], vec![one, z]],
            Pauli::Y => vec![vec![z, -i], vec![i, z]],
            Pauli::Z => vec![vec![one, z], vec![z, -one]],
        }
    }

    /// Whether this Pauli flips a measurement outcome when inserted in the
    /// measurement frame (X and Y do; Z only adds a phase).
    pub fn flips_outcome(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }
}

/// A CPTP channel given by explicit Kraus matrices over `arity` qubits.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    arity: usize,
    ops: Vec<Vec<Vec<Complex64>>>,
}

impl KrausChannel {
    /// Validates completeness: the Kraus operators must satisfy
    /// `sum_i K_i^dag K_i = I` within [`NORM_TOLERANCE`].
    pub fn new(arity: usize, ops: Vec<Vec<Vec<Complex64>>>) -> Result<KrausChannel, SimError> {
        let dim = 1usize << arity;
        if ops.is_empty() {
            return Err(SimError::BadChannel("no Kraus operators".into()));
        }
        for k in &ops {
            if k.len() != dim || k.iter().any(|row| row.len() != dim) {
                return Err(SimError::BadChannel(format!(
                    "operator is not {dim}x{dim} for arity {arity}"
                )));
            }
        }
        // accum = sum K^dag K
        let mut accum = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        for k in &ops {
            for r in 0..dim {
                for c in 0..dim {
                    let mut s = Complex64::new(0.0, 0.0);
                    for m in 0..dim {
                        s += k[m][r].conj() * k[m][c];
                    }
                    accum[r][c] += s;
                }
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                let expect = if r == c { 1.0 } else { 0.0 };
                if (accum[r][c] - expect).norm() > 1e-9 {
                    return Err(SimError::BadChannel(
                        "Kraus operators do not resolve the identity".into(),
                    ));
                }
            }
        }
        Ok(KrausChannel { arity, ops })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn ops(&self) -> &[Vec<Vec<Complex64>>] {
        &self.ops
    }

    /// The identity channel on one qubit.
    pub fn identity() -> KrausChannel {
        let one = Complex64::new(1.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        KrausChannel::new(1, vec![vec![vec![one, z], vec![z, one]]]).unwrap()
    }

    /// Applies `X`, `Y`, `Z` with the given probabilities (identity with the
    /// remainder).
    pub fn pauli_mixture(px: f64, py: f64, pz: f64) -> Result<KrausChannel, SimError> {
        let total = px + py + pz;
        if !(0.0..=1.0).contains(&total) || px < 0.0 || py < 0.0 || pz < 0.0 {
            return Err(SimError::BadChannel(format!(
                "pauli mixture probabilities ({px}, {py}, {pz}) out of range"
            )));
        }
        let scale = |m: Vec<Vec<Complex64>>, w: f64| -> Vec<Vec<Complex64>> {
            m.into_iter()
                .map(|row| row.into_iter().map(|x| x * w.sqrt()).collect())
                .collect()
        };
        let eye = vec![
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ];
        KrausChannel::new(
            1,
            vec![
                scale(eye, 1.0 - total),
                scale(Pauli::X.matrix(), px),
                scale(Pauli::Y.matrix(), py),
                scale(Pauli::Z.matrix(), pz),
            ],
        )
    }

    /// The depolarizing channel `rho -> (1 - p) rho + p I/2`, i.e. each Pauli
    /// with probability `p/4`. At `p = 1` the qubit is fully mixed.
    pub fn depolarizing(p: f64) -> Result<KrausChannel, SimError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::BadChannel(format!("depolarizing p = {p} out of range")));
        }
        KrausChannel::pauli_mixture(p / 4.0, p / 4.0, p / 4.0)
    }
}

/// Dense statevector over the currently live qubits.
///
/// Bit `i` of an amplitude index is the computational state of `labels[i]`.
#[derive(Debug, Clone)]
pub struct StateVector {
    labels: Vec<Label>,
    amps: Vec<Complex64>,
    cap: usize,
    max_active_seen: usize,
}

impl Default for StateVector {
    fn default() -> Self {
        StateVector::new(DEFAULT_ACTIVE_CAP)
    }
}

impl StateVector {
    pub fn new(cap: usize) -> StateVector {
        StateVector {
            labels: Vec::new(),
            amps: vec![Complex64::new(1.0, 0.0)],
            cap,
            max_active_seen: 0,
        }
    }

    pub fn num_active(&self) -> usize {
        self.labels.len()
    }

    /// High-water mark of simultaneously live qubits.
    pub fn max_active_seen(&self) -> usize {
        self.max_active_seen
    }

    pub fn is_active(&self, label: Label) -> bool {
        self.labels.contains(&label)
    }

    /// Live labels in bit order (bit 0 first).
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Raw amplitudes, indexed with bit `i` = state of `labels()[i]`.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Probability that `label` reads 1 in the computational basis.
    pub fn prob_one(&self, label: Label) -> Result<f64, SimError> {
        let pos = self.position(label)?;
        let bit = 1usize << pos;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    fn position(&self, label: Label) -> Result<usize, SimError> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(SimError::UnknownLabel(label))
    }

    /// Tensors a freshly prepared qubit onto the state.
    pub fn attach(&mut self, label: Label, prep: PreparedQubit) -> Result<(), SimError> {
        if self.is_active(label) {
            return Err(SimError::AlreadyActive(label));
        }
        if self.labels.len() >= self.cap {
            return Err(SimError::CapExceeded { label, cap: self.cap });
        }
        let (q0, q1) = match prep {
            PreparedQubit::PlusTheta(theta) => {
                let inv = std::f64::consts::FRAC_1_SQRT_2;
                (
                    Complex64::new(inv, 0.0),
                    Complex64::from_polar(1.0, theta.radians()) * inv,
                )
            }
            PreparedQubit::Dummy(false) => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            PreparedQubit::Dummy(true) => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
        };
        let old = self.amps.len();
        let mut amps = vec![Complex64::new(0.0, 0.0); old * 2];
        for (i, &a) in self.amps.iter().enumerate() {
            amps[i] = a * q0;
            amps[i + old] = a * q1;
        }
        self.amps = amps;
        self.labels.push(label);
        self.max_active_seen = self.max_active_seen.max(self.labels.len());
        Ok(())
    }

    /// Controlled-Z between two live qubits.
    pub fn apply_cz(&mut self, a: Label, b: Label) -> Result<(), SimError> {
        let pa = 1usize << self.position(a)?;
        let pb = 1usize << self.position(b)?;
        if pa == pb {
            return Err(SimError::AlreadyActive(a));
        }
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & pa != 0 && i & pb != 0 {
                *amp = -*amp;
            }
        }
        Ok(())
    }

    /// A Pauli on one live qubit, acting on the state (lab frame).
    pub fn apply_pauli(&mut self, label: Label, p: Pauli) -> Result<(), SimError> {
        let bit = 1usize << self.position(label)?;
        match p {
            Pauli::X => {
                for i in 0..self.amps.len() {
                    if i & bit == 0 {
                        self.amps.swap(i, i | bit);
                    }
                }
            }
            Pauli::Y => {
                let im = Complex64::new(0.0, 1.0);
                for i in 0..self.amps.len() {
                    if i & bit == 0 {
                        let lo = self.amps[i];
                        let hi = self.amps[i | bit];
                        self.amps[i] = -im * hi;
                        self.amps[i | bit] = im * lo;
                    }
                }
            }
            Pauli::Z => {
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & bit != 0 {
                        *amp = -*amp;
                    }
                }
            }
        }
        Ok(())
    }

    /// Measures `label` in the equatorial basis `{|+_delta>, |-_delta>}`,
    /// collapses, removes the qubit, and returns the outcome bit
    /// (1 means the `|-_delta>` branch).
    pub fn measure_rotated<R: Rng + ?Sized>(
        &mut self,
        label: Label,
        delta: Angle8,
        rng: &mut R,
    ) -> Result<bool, SimError> {
        self.measure_rotated_deviated(label, delta, None, rng)
    }

    /// Like [`measure_rotated`](Self::measure_rotated) but with an optional
    /// Pauli inserted in the measurement frame just before readout: X and Y
    /// flip the reported outcome (and collapse to the matching branch), Z is
    /// statistically invisible.
    pub fn measure_rotated_deviated<R: Rng + ?Sized>(
        &mut self,
        label: Label,
        delta: Angle8,
        deviation: Option<Pauli>,
        rng: &mut R,
    ) -> Result<bool, SimError> {
        let pos = self.position(label)?;
        let bit = 1usize << pos;
        let phase = Complex64::from_polar(1.0, -delta.radians());
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let half = self.amps.len() / 2;
        let mut branch0 = vec![Complex64::new(0.0, 0.0); half];
        let mut branch1 = vec![Complex64::new(0.0, 0.0); half];
        // Iterate over indices with the measured bit clear; `rest` re-packs
        // the remaining bits into a dense index.
        let low_mask = bit - 1;
        for i in 0..self.amps.len() {
            if i & bit != 0 {
                continue;
            }
            let lo = self.amps[i];
            let hi = self.amps[i | bit];
            let rest = (i & low_mask) | ((i & !low_mask & !bit) >> 1);
            branch0[rest] = (lo + phase * hi) * inv;
            branch1[rest] = (lo - phase * hi) * inv;
        }
        let p0: f64 = branch0.iter().map(|a| a.norm_sqr()).sum();
        let p1: f64 = branch1.iter().map(|a| a.norm_sqr()).sum();
        let norm = p0 + p1;
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(SimError::NormDrift { norm });
        }
        let outcome = rng.random::<f64>() >= p0.clamp(0.0, 1.0);
        let (mut kept, p) = if outcome { (branch1, p1) } else { (branch0, p0) };
        let scale = 1.0 / p.max(f64::MIN_POSITIVE).sqrt();
        for a in &mut kept {
            *a *= scale;
        }
        self.amps = kept;
        self.labels.remove(pos);
        let reported = match deviation {
            Some(p) if p.flips_outcome() => !outcome,
            _ => outcome,
        };
        Ok(reported)
    }

    /// Applies a channel to the given live qubits by sampling one Kraus
    /// branch (trajectory semantics). Returns the sampled branch index.
    pub fn apply_channel<R: Rng + ?Sized>(
        &mut self,
        labels: &[Label],
        channel: &KrausChannel,
        rng: &mut R,
    ) -> Result<usize, SimError> {
        if labels.len() != channel.arity() {
            return Err(SimError::ArityMismatch { arity: channel.arity(), given: labels.len() });
        }
        let positions: Vec<usize> =
            labels.iter().map(|&l| self.position(l)).collect::<Result<_, _>>()?;
        let dim = 1usize << positions.len();
        // Candidate states for every branch, with Born weights.
        let mut candidates: Vec<(f64, Vec<Complex64>)> = Vec::with_capacity(channel.ops.len());
        for k in &channel.ops {
            let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
            for base in 0..self.amps.len() {
                if positions.iter().any(|&p| base & (1 << p) != 0) {
                    continue;
                }
                // Gather the 2^m amplitudes over the target qubits.
                let mut gathered = vec![Complex64::new(0.0, 0.0); dim];
                for (j, g) in gathered.iter_mut().enumerate() {
                    let mut idx = base;
                    for (l, &p) in positions.iter().enumerate() {
                        if j & (1 << l) != 0 {
                            idx |= 1 << p;
                        }
                    }
                    *g = self.amps[idx];
                }
                for (row, k_row) in k.iter().enumerate() {
                    let mut s = Complex64::new(0.0, 0.0);
                    for (col, &g) in gathered.iter().enumerate() {
                        s += k_row[col] * g;
                    }
                    let mut idx = base;
                    for (l, &p) in positions.iter().enumerate() {
                        if row & (1 << l) != 0 {
                            idx |= 1 << p;
                        }
                    }
                    out[idx] = s;
                }
            }
            let weight: f64 = out.iter().map(|a| a.norm_sqr()).sum();
            candidates.push((weight, out));
        }
        let total: f64 = candidates.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(SimError::NormDrift { norm: total });
        }
        let mut draw = rng.random::<f64>() * total;
        let mut chosen = candidates.len() - 1;
        for (i, (w, _)) in candidates.iter().enumerate() {
            if draw < *w {
                chosen = i;
                break;
            }
            draw -= w;
        }
        let (w, mut state) = candidates.swap_remove(chosen);
        let scale = 1.0 / w.max(f64::MIN_POSITIVE).sqrt();
        for a in &mut state {
            *a *= scale;
        }
        self.amps = state;
        Ok(chosen)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn attach_plus_state() {
        let mut s = StateVector::default();
        s.attach(0, PreparedQubit::PlusTheta(Angle8::ZERO)).unwrap();
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(s.amplitudes()[0], Complex64::new(inv, 0.0)));
        assert!(close(s.amplitudes()[1], Complex64::new(inv, 0.0)));
    }

    #[test]
    fn attach_dummy_one() {
        let mut s = StateVector::default();
        s.attach(3, PreparedQubit::Dummy(true)).unwrap();
        assert!(close(s.amplitudes()[0], Complex64::new(0.0, 0.0)));
        assert!(close(s.amplitudes()[1], Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn attach_plus_theta_pi_over_2() {
        let mut s = StateVector::default();
        s.attach(0, PreparedQubit::PlusTheta(Angle8::new(2))).unwrap();
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(s.amplitudes()[0], Complex64::new(inv, 0.0)));
        assert!(close(s.amplitudes()[1], Complex64::new(0.0, inv)));
    }

    #[test]
    fn attach_rejects_duplicates_and_cap() {
        let mut s = StateVector::new(1);
        s.attach(0, PreparedQubit::Dummy(false)).unwrap();
        assert_eq!(
            s.attach(0, PreparedQubit::Dummy(false)),
            Err(SimError::AlreadyActive(0))
        );
        assert_eq!(
            s.attach(1, PreparedQubit::Dummy(false)),
            Err(SimError::CapExceeded { label: 1, cap: 1 })
        );
    }

    #[test]
    fn cz_on_plus_plus() {
        let mut s = StateVector::default();
        s.attach(0, PreparedQubit::PlusTheta(Angle8::ZERO)).unwrap();
        s.attach(1, PreparedQubit::PlusTheta(Angle8::ZERO)).unwrap();
        s.apply_cz(0, 1).unwrap();
        let h = 0.5;
        assert!(close(s.amplitudes()[0], Complex64::new(h, 0.0)));
        assert!(close(s.amplitudes()[1], Complex64::new(h, 0.0)));
        assert!(close(s.amplitudes()[2], Complex64::new(h, 0.0)));
        assert!(close(s.amplitudes()[3], Complex64::new(-h, 0.0)));
    }

    #[test]
    fn cz_is_self_inverse_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let mut s = StateVector::default();
            for l in 0..3 {
                s.attach(l, PreparedQubit::PlusTheta(Angle8::random(&mut rng))).unwrap();
            }
            let before = s.amplitudes().to_vec();
            s.apply_cz(0, 2).unwrap();
            s.apply_cz(0, 2).unwrap();
            assert!(s
                .amplitudes()
                .iter()
                .zip(&before)
                .all(|(a, b)| close(*a, *b)));
        }
    }

    #[test]
    fn pauli_actions_on_basis_states() {
        let mut s = StateVector::default();
        s.attach(0, PreparedQubit::Dummy(false)).unwrap();
        s.apply_pauli(0, Pauli::Z).unwrap();
        assert!(close(s.amplitudes()[0], Complex64::new(1.0, 0.0)));
        s.apply_pauli(0, Pauli::X).unwrap();
        assert!(close(s.amplitudes()[1], Complex64::new(1.0, 0.0)));
        assert!((s.prob_one(0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measuring_plus_theta_at_matching_angle_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for theta in Angle8::all() {
            for _ in 0..20 {
                let mut s = StateVector::default();
                s.attach(0, PreparedQubit::PlusTheta(theta)).unwrap();
                assert!(!s.measure_rotated(0, theta, &mut rng).unwrap());
                assert_eq!(s.num_active(), 0);

                let mut s = StateVector::default();
                s.attach(0, PreparedQubit::PlusTheta(theta)).unwrap();
                assert!(s.measure_rotated(0, theta + Angle8::PI, &mut rng).unwrap());
            }
        }
    }

    #[test]
    fn measuring_dummy_at_any_angle_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 20_000;
        let mut ones = 0u32;
        for i in 0..trials {
            let mut s = StateVector::default();
            s.attach(0, PreparedQubit::Dummy(i % 2 == 0)).unwrap();
            if s.measure_rotated(0, Angle8::new((i % 8) as u8), &mut rng).unwrap() {
                ones += 1;
            }
        }
        let freq = f64::from(ones) / f64::from(trials as u32);
        assert!((freq - 0.5).abs() < 0.02, "dummy outcome frequency {freq}");
    }

    #[test]
    fn measurement_frame_x_deviation_always_flips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for theta in Angle8::all() {
            let mut s = StateVector::default();
            s.attach(0, PreparedQubit::PlusTheta(theta)).unwrap();
            let b = s
                .measure_rotated_deviated(0, theta, Some(Pauli::X), &mut rng)
                .unwrap();
            assert!(b, "X in the measurement frame must flip the deterministic outcome");
        }
    }

    #[test]
    fn full_depolarizing_on_zero_gives_fair_z_outcomes() {
        // rho -> I/2 at p = 1, so the computational outcome is a fair coin.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let channel = KrausChannel::depolarizing(1.0).unwrap();
        let trials = 100_000;
        let mut ones = 0u32;
        for _ in 0..trials {
            let mut s = StateVector::default();
            s.attach(0, PreparedQubit::Dummy(false)).unwrap();
            s.apply_channel(&[0], &channel, &mut rng).unwrap();
            let p1 = s.prob_one(0).unwrap();
            if rng.random::<f64>() < p1 {
                ones += 1;
            }
        }
        let freq = f64::from(ones) / f64::from(trials as u32);
        assert!((freq - 0.5).abs() < 0.01, "Z-outcome frequency {freq}");
    }

    #[test]
    fn zero_noise_channel_is_identity_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let channel = KrausChannel::depolarizing(0.0).unwrap();
        let mut s = StateVector::default();
        s.attach(0, PreparedQubit::PlusTheta(Angle8::new(5))).unwrap();
        let before = s.amplitudes().to_vec();
        s.apply_channel(&[0], &channel, &mut rng).unwrap();
        assert!(s.amplitudes().iter().zip(&before).all(|(a, b)| close(*a, *b)));
    }

    #[test]
    fn incomplete_kraus_set_is_rejected() {
        let half = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let err = KrausChannel::new(1, vec![vec![vec![half, z], vec![z, half]]]).unwrap_err();
        assert!(matches!(err, SimError::BadChannel(_)));
    }

    #[test]
    fn lazy_removal_tracks_active_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = StateVector::default();
        s.attach(0, PreparedQubit::PlusTheta(Angle8::ZERO)).unwrap();
        s.attach(1, PreparedQubit::PlusTheta(Angle8::ZERO)).unwrap();
        s.apply_cz(0, 1).unwrap();
        s.measure_rotated(0, Angle8::ZERO, &mut rng).unwrap();
        assert_eq!(s.num_active(), 1);
        s.attach(2, PreparedQubit::PlusTheta(Angle8::ZERO)).unwrap();
        assert_eq!(s.max_active_seen(), 2);
    }
}
