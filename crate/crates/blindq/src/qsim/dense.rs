//! Dense statevector path: exact gate application, branch enumeration and
//! amplitude extraction. This is the oracle side of the simulator; sampling
//! for large shot counts lives in [`super::factored`].

use crate::angle::Angle8;
use crate::qsim::{
    Circuit, Gate, Instruction, SimError, MAX_MEASURED_FOR_ENUMERATION, MAX_QUBITS,
};
use num_complex::Complex64;

const ZERO_BRANCH_EPS: f64 = 1e-15;

/// Dense state over `num_qubits` qubits; qubit `q` is bit `q` of the
/// amplitude index.
#[derive(Clone, Debug)]
pub struct Statevector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// |0...0>
    pub fn zero(num_qubits: usize) -> Result<Statevector, SimError> {
        if num_qubits > MAX_QUBITS {
            return Err(SimError::TooManyQubits(num_qubits));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Statevector { num_qubits, amps })
    }

    /// (|0> + e^{i k pi/4} |1>) / sqrt(2)
    pub fn plus_theta(theta: Angle8) -> Statevector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Statevector {
            num_qubits: 1,
            amps: vec![
                Complex64::new(s, 0.0),
                Complex64::from_polar(s, theta.radians()),
            ],
        }
    }

    pub fn from_amplitudes(num_qubits: usize, amps: Vec<Complex64>) -> Result<Statevector, SimError> {
        if amps.len() != 1 << num_qubits {
            return Err(SimError::DimensionMismatch(num_qubits, amps.len()));
        }
        Ok(Statevector { num_qubits, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for a in &mut self.amps {
                *a /= n;
            }
        }
    }

    /// Applies a unitary instruction in place.
    pub fn apply(&mut self, inst: &Instruction) -> Result<(), SimError> {
        for &q in &inst.qubits {
            if q >= self.num_qubits {
                return Err(SimError::QubitOutOfRange {
                    index: q,
                    num_qubits: self.num_qubits,
                });
            }
        }
        match inst.gate {
            Gate::Measure => return Err(SimError::MeasureOnUnitaryPath),
            Gate::H => self.apply_h(inst.qubits[0]),
            Gate::X => self.apply_x(inst.qubits[0]),
            Gate::Z => self.apply_phase(inst.qubits[0], Complex64::new(-1.0, 0.0)),
            Gate::Rz(a) => {
                self.apply_phase(inst.qubits[0], Complex64::from_polar(1.0, a.radians()))
            }
            Gate::Cz => self.apply_cz(inst.qubits[0], inst.qubits[1]),
            Gate::Cx => self.apply_cx(&[inst.qubits[0]], inst.qubits[1]),
            Gate::Ccx => self.apply_cx(&[inst.qubits[0], inst.qubits[1]], inst.qubits[2]),
            Gate::Swap => self.apply_swap(inst.qubits[0], inst.qubits[1]),
        }
        Ok(())
    }

    fn apply_h(&mut self, q: usize) {
        let mask = 1usize << q;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a = self.amps[i];
                let b = self.amps[i | mask];
                self.amps[i] = (a + b) * s;
                self.amps[i | mask] = (a - b) * s;
            }
        }
    }

    fn apply_x(&mut self, q: usize) {
        let mask = 1usize << q;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                self.amps.swap(i, i | mask);
            }
        }
    }

    /// diag(1, phase) on qubit q; Rz(theta) = diag(1, e^{i theta}).
    fn apply_phase(&mut self, q: usize, phase: Complex64) {
        let mask = 1usize << q;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask != 0 {
                *a *= phase;
            }
        }
    }

    fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = (1usize << a) | (1usize << b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    fn apply_cx(&mut self, controls: &[usize], target: usize) {
        let cmask: usize = controls.iter().map(|&c| 1usize << c).sum();
        let tmask = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cmask == cmask && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
    }

    fn apply_swap(&mut self, a: usize, b: usize) {
        let ma = 1usize << a;
        let mb = 1usize << b;
        for i in 0..self.amps.len() {
            if i & ma != 0 && i & mb == 0 {
                self.amps.swap(i, (i & !ma) | mb);
            }
        }
    }

    /// Probability that qubit q measures 1.
    pub fn prob_one(&self, q: usize) -> f64 {
        let mask = 1usize << q;
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Projects qubit q onto `value` without renormalizing; returns the
    /// projected weight.
    pub fn project(&mut self, q: usize, value: bool) -> f64 {
        let mask = 1usize << q;
        let mut weight = 0.0;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if (i & mask != 0) == value {
                weight += a.norm_sqr();
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        weight
    }

    /// Extracts the normalized sub-state over `keep` (ascending qubit ids),
    /// asserting all other qubits are in a definite computational state.
    pub fn extract(&self, keep: &[usize], label: &str) -> Result<Statevector, SimError> {
        let keep_mask: usize = keep.iter().map(|&q| 1usize << q).sum();
        // Find the dominant configuration of the dropped qubits.
        let mut best_cfg = 0usize;
        let mut best_weight = -1.0;
        let mut weights: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
        for (i, a) in self.amps.iter().enumerate() {
            let cfg = i & !keep_mask;
            let w = weights.entry(cfg).or_insert(0.0);
            *w += a.norm_sqr();
        }
        for (&cfg, &w) in &weights {
            if w > best_weight {
                best_weight = w;
                best_cfg = cfg;
            }
        }
        let stray: f64 = weights
            .iter()
            .filter(|(&cfg, _)| cfg != best_cfg)
            .map(|(_, &w)| w)
            .sum();
        if stray > 1e-9 {
            return Err(SimError::NonFactorizableResidual {
                bits: label.to_string(),
            });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << keep.len()];
        for (j, amp) in amps.iter_mut().enumerate() {
            let mut idx = best_cfg;
            for (bit, &q) in keep.iter().enumerate() {
                if j & (1 << bit) != 0 {
                    idx |= 1 << q;
                }
            }
            *amp = self.amps[idx];
        }
        let mut out = Statevector {
            num_qubits: keep.len(),
            amps,
        };
        out.normalize();
        Ok(out)
    }
}

/// |<a|b>|^2 — global-phase-insensitive state comparison.
pub fn fidelity(a: &Statevector, b: &Statevector) -> Result<f64, SimError> {
    if a.num_qubits != b.num_qubits {
        return Err(SimError::DimensionMismatch(a.num_qubits, b.num_qubits));
    }
    let overlap: Complex64 = a
        .amps
        .iter()
        .zip(&b.amps)
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(overlap.norm_sqr())
}

/// Runs all unitary instructions of `circuit` on |0..0>, erroring on measure.
pub fn run_unitary(circuit: &Circuit) -> Result<Statevector, SimError> {
    let mut state = Statevector::zero(circuit.num_qubits)?;
    for inst in &circuit.instructions {
        state.apply(inst)?;
    }
    Ok(state)
}

/// One measurement branch: the classical bits, its exact probability, and
/// the normalized residual over the circuit's never-measured qubits
/// (`None` for zero-probability branches).
#[derive(Clone, Debug)]
pub struct Branch {
    pub bits: String,
    pub probability: f64,
    pub residual: Option<Statevector>,
    /// Ascending qubit ids the residual ranges over.
    pub residual_qubits: Vec<usize>,
}

impl Branch {
    pub fn is_zero(&self) -> bool {
        self.probability < ZERO_BRANCH_EPS
    }

    /// Value of clbit `c` in this branch.
    pub fn bit(&self, c: usize) -> bool {
        let chars: Vec<char> = self.bits.chars().collect();
        chars[chars.len() - 1 - c] == '1'
    }
}

/// Exact enumeration of every measurement branch of `circuit`.
///
/// Branches are ordered by their bitstring read as a binary number over the
/// measure instructions in program order (first measure = low bit of the
/// enumeration, written to its clbit position in the output string).
pub fn enumerate_branches(circuit: &Circuit) -> Result<Vec<Branch>, SimError> {
    let measured = circuit.measured_clbits();
    if measured.is_empty() {
        return Err(SimError::NoMeasurements);
    }
    let n_meas = circuit
        .instructions
        .iter()
        .filter(|i| i.gate == Gate::Measure)
        .count();
    if n_meas > MAX_MEASURED_FOR_ENUMERATION {
        return Err(SimError::TooManyMeasured(n_meas));
    }
    let residual_qubits = circuit.unmeasured_qubits();
    let mut out = Vec::new();
    let state = Statevector::zero(circuit.num_qubits)?;
    let clbits = vec![false; circuit.num_clbits];
    recurse(
        circuit,
        0,
        Some(state),
        1.0,
        clbits,
        &residual_qubits,
        &mut out,
    )?;
    debug_assert_eq!(out.len(), 1 << n_meas);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    circuit: &Circuit,
    pos: usize,
    mut state: Option<Statevector>,
    prob: f64,
    clbits: Vec<bool>,
    residual_qubits: &[usize],
    out: &mut Vec<Branch>,
) -> Result<(), SimError> {
    let mut i = pos;
    while i < circuit.instructions.len() {
        let inst = &circuit.instructions[i];
        if inst.gate == Gate::Measure {
            let q = inst.qubits[0];
            let c = inst.clbit.expect("validated measure");
            for value in [false, true] {
                let (sub_state, sub_prob) = match &state {
                    Some(s) => {
                        let mut s2 = s.clone();
                        let w = s2.project(q, value);
                        if w > ZERO_BRANCH_EPS {
                            s2.normalize();
                            (Some(s2), prob * w)
                        } else {
                            (None, 0.0)
                        }
                    }
                    None => (None, 0.0),
                };
                let mut sub_clbits = clbits.clone();
                sub_clbits[c] = value;
                recurse(
                    circuit,
                    i + 1,
                    sub_state,
                    sub_prob,
                    sub_clbits,
                    residual_qubits,
                    out,
                )?;
            }
            return Ok(());
        }
        if let Some(s) = &mut state {
            s.apply(inst)?;
        }
        i += 1;
    }
    let bits = super::circuit::bits_to_string(&clbits);
    let residual = match &state {
        Some(s) if !residual_qubits.is_empty() => Some(s.extract(residual_qubits, &bits)?),
        Some(_) => None, // everything measured: no residual register
        None => None,
    };
    // A fully-measured nonzero branch carries no residual but is not a
    // zero branch; keep probability as the discriminator there.
    out.push(Branch {
        bits,
        probability: prob,
        residual,
        residual_qubits: residual_qubits.to_vec(),
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::Gate;

    fn bell() -> Circuit {
        let mut c = Circuit::new(2, 2).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::Cx, &[0, 1]).unwrap();
        c.measure(0, 0).unwrap();
        c.measure(1, 1).unwrap();
        c
    }

    #[test]
    fn h_on_zero() {
        let mut s = Statevector::zero(1).unwrap();
        s.apply(&Instruction::unitary(Gate::H, vec![0])).unwrap();
        let t = Statevector::plus_theta(Angle8::ZERO);
        assert!((fidelity(&s, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rz_identity_case() {
        let mut s = Statevector::plus_theta(Angle8::new(3));
        let before = s.clone();
        s.apply(&Instruction::unitary(Gate::Rz(Angle8::ZERO), vec![0]))
            .unwrap();
        assert!((fidelity(&s, &before).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rz_phase_convention() {
        // RZ(3pi/4) H |0> = |+_{3pi/4}>, amplitude ratio a1/a0 = e^{i 3pi/4}
        let mut s = Statevector::zero(1).unwrap();
        s.apply(&Instruction::unitary(Gate::H, vec![0])).unwrap();
        s.apply(&Instruction::unitary(Gate::Rz(Angle8::new(3)), vec![0]))
            .unwrap();
        let ratio = s.amplitudes()[1] / s.amplitudes()[0];
        let expected = Complex64::from_polar(1.0, Angle8::new(3).radians());
        assert!((ratio - expected).norm() < 1e-12);
        let t = Statevector::plus_theta(Angle8::new(3));
        assert!((fidelity(&s, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_basics() {
        let zero = Statevector::zero(1).unwrap();
        let mut one = Statevector::zero(1).unwrap();
        one.apply(&Instruction::unitary(Gate::X, vec![0])).unwrap();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&zero, &one).unwrap() < 1e-12);
        // global phase invariance
        let a = Statevector::plus_theta(Angle8::new(1));
        let amps: Vec<Complex64> = a
            .amplitudes()
            .iter()
            .map(|&x| x * Complex64::from_polar(1.0, 1.234))
            .collect();
        let b = Statevector::from_amplitudes(1, amps).unwrap();
        assert!((fidelity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let two = Statevector::zero(2).unwrap();
        assert!(fidelity(&zero, &two).is_err());
    }

    #[test]
    fn bell_branches() {
        let branches = enumerate_branches(&bell()).unwrap();
        assert_eq!(branches.len(), 4);
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for b in &branches {
            match b.bits.as_str() {
                "00" | "11" => assert!((b.probability - 0.5).abs() < 1e-12),
                _ => assert!(b.probability < 1e-12),
            }
        }
    }

    #[test]
    fn bell_partial_measurement_residuals() {
        let mut c = Circuit::new(2, 1).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::Cx, &[0, 1]).unwrap();
        c.measure(0, 0).unwrap();
        let branches = enumerate_branches(&c).unwrap();
        assert_eq!(branches.len(), 2);
        for b in &branches {
            assert!((b.probability - 0.5).abs() < 1e-12);
            let residual = b.residual.as_ref().unwrap();
            let mut expected = Statevector::zero(1).unwrap();
            if b.bits == "1" {
                expected
                    .apply(&Instruction::unitary(Gate::X, vec![0]))
                    .unwrap();
            }
            assert!((fidelity(residual, &expected).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_preserved_by_gate_sequences() {
        let mut s = Statevector::zero(3).unwrap();
        let ops = [
            Instruction::unitary(Gate::H, vec![0]),
            Instruction::unitary(Gate::Rz(Angle8::new(5)), vec![0]),
            Instruction::unitary(Gate::Cx, vec![0, 1]),
            Instruction::unitary(Gate::Ccx, vec![0, 1, 2]),
            Instruction::unitary(Gate::Cz, vec![1, 2]),
            Instruction::unitary(Gate::Swap, vec![0, 2]),
            Instruction::unitary(Gate::H, vec![2]),
            Instruction::unitary(Gate::Z, vec![1]),
            Instruction::unitary(Gate::X, vec![0]),
        ];
        for inst in &ops {
            s.apply(inst).unwrap();
        }
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measure_rejected_on_unitary_path() {
        let mut s = Statevector::zero(1).unwrap();
        let err = s.apply(&Instruction::measure(0, 0)).unwrap_err();
        assert!(matches!(err, SimError::MeasureOnUnitaryPath));
    }
}
