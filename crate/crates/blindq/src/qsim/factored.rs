//! Shot sampling over a factored state.
//!
//! The composed protocol circuits act on many small, mostly-disjoint
//! registers (one 5-qubit state-preparation block per pattern node). Keeping
//! the state as a product of independent tensor factors, merging factors only
//! when a multi-qubit gate spans them and dropping qubits as soon as they are
//! measured, keeps per-shot cost proportional to the largest entangled
//! register instead of 2^(total qubits).
//!
//! Shots are embarrassingly parallel: each derives an independent rng stream
//! from (seed, shot index) and results merge associatively, so counts are
//! deterministic for a given seed regardless of scheduling.

use crate::qsim::circuit::bits_to_string;
use crate::qsim::{Circuit, Gate, SimError};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

const MAX_FACTOR_QUBITS: usize = 22;

struct Factor {
    /// Global qubit ids; `qubits[i]` occupies local bit `i`.
    qubits: Vec<usize>,
    amps: Vec<Complex64>,
}

struct FactoredState {
    factors: Vec<Option<Factor>>,
    /// Per global qubit: index into `factors`, or None while classical.
    location: Vec<Option<usize>>,
    /// Classical value when not part of any factor (post-measurement or
    /// still untouched |0>).
    classical: Vec<bool>,
}

impl FactoredState {
    fn new(num_qubits: usize) -> FactoredState {
        FactoredState {
            factors: Vec::new(),
            location: vec![None; num_qubits],
            classical: vec![false; num_qubits],
        }
    }

    /// Promotes a classical qubit into a 1-qubit factor.
    fn ensure_quantum(&mut self, q: usize) -> usize {
        if let Some(f) = self.location[q] {
            return f;
        }
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let amps = if self.classical[q] {
            vec![zero, one]
        } else {
            vec![one, zero]
        };
        let factor = Factor {
            qubits: vec![q],
            amps,
        };
        let idx = self.factors.len();
        self.factors.push(Some(factor));
        self.location[q] = Some(idx);
        idx
    }

    /// Merges the factors holding the given qubits into one; returns its index.
    fn merge_for(&mut self, qubits: &[usize]) -> Result<usize, SimError> {
        let mut idxs: Vec<usize> = qubits.iter().map(|&q| self.ensure_quantum(q)).collect();
        idxs.sort_unstable();
        idxs.dedup();
        let base = idxs[0];
        for &other in &idxs[1..] {
            let a = self.factors[base].take().expect("live factor");
            let b = self.factors[other].take().expect("live factor");
            if a.qubits.len() + b.qubits.len() > MAX_FACTOR_QUBITS {
                return Err(SimError::TooManyQubits(a.qubits.len() + b.qubits.len()));
            }
            let na = a.amps.len();
            let mut amps = vec![Complex64::new(0.0, 0.0); na * b.amps.len()];
            for (j, &bj) in b.amps.iter().enumerate() {
                for (i, &ai) in a.amps.iter().enumerate() {
                    amps[(j << a.qubits.len()) | i] = ai * bj;
                }
            }
            let mut qubits = a.qubits;
            qubits.extend_from_slice(&b.qubits);
            let merged = Factor { qubits, amps };
            for &q in &merged.qubits {
                self.location[q] = Some(base);
            }
            self.factors[base] = Some(merged);
            self.factors[other] = None;
        }
        Ok(base)
    }

    fn local_pos(&self, fidx: usize, q: usize) -> usize {
        self.factors[fidx]
            .as_ref()
            .expect("live factor")
            .qubits
            .iter()
            .position(|&x| x == q)
            .expect("qubit in factor")
    }

    fn apply_1q<F: Fn(Complex64, Complex64) -> (Complex64, Complex64)>(
        &mut self,
        q: usize,
        kernel: F,
    ) {
        let fidx = self.ensure_quantum(q);
        let pos = self.local_pos(fidx, q);
        let factor = self.factors[fidx].as_mut().expect("live factor");
        let mask = 1usize << pos;
        for i in 0..factor.amps.len() {
            if i & mask == 0 {
                let (a, b) = kernel(factor.amps[i], factor.amps[i | mask]);
                factor.amps[i] = a;
                factor.amps[i | mask] = b;
            }
        }
    }

    fn apply(&mut self, gate: Gate, qubits: &[usize]) -> Result<(), SimError> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match gate {
            Gate::H => self.apply_1q(qubits[0], |a, b| ((a + b) * s, (a - b) * s)),
            Gate::X => {
                // classical fast path
                if self.location[qubits[0]].is_none() {
                    self.classical[qubits[0]] = !self.classical[qubits[0]];
                } else {
                    self.apply_1q(qubits[0], |a, b| (b, a));
                }
            }
            Gate::Z => self.apply_1q(qubits[0], |a, b| (a, -b)),
            Gate::Rz(angle) => {
                let phase = Complex64::from_polar(1.0, angle.radians());
                self.apply_1q(qubits[0], move |a, b| (a, b * phase));
            }
            Gate::Cz => {
                let fidx = self.merge_for(qubits)?;
                let factor = self.factors[fidx].as_mut().expect("live factor");
                let mask = (1usize << self_pos(factor, qubits[0]))
                    | (1usize << self_pos(factor, qubits[1]));
                for (i, amp) in factor.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
            Gate::Cx | Gate::Ccx => {
                let (controls, target) = qubits.split_at(qubits.len() - 1);
                // controls that are classical 1 drop out; classical 0 kills the gate
                if controls
                    .iter()
                    .any(|&c| self.location[c].is_none() && !self.classical[c])
                {
                    return Ok(());
                }
                let quantum_controls: Vec<usize> = controls
                    .iter()
                    .copied()
                    .filter(|&c| self.location[c].is_some())
                    .collect();
                if quantum_controls.is_empty() {
                    return self.apply(Gate::X, &[target[0]]);
                }
                let mut operands = quantum_controls.clone();
                operands.push(target[0]);
                let fidx = self.merge_for(&operands)?;
                let factor = self.factors[fidx].as_mut().expect("live factor");
                let cmask: usize = quantum_controls
                    .iter()
                    .map(|&c| 1usize << self_pos(factor, c))
                    .sum();
                let tmask = 1usize << self_pos(factor, target[0]);
                for i in 0..factor.amps.len() {
                    if i & cmask == cmask && i & tmask == 0 {
                        factor.amps.swap(i, i | tmask);
                    }
                }
            }
            Gate::Swap => {
                let (a, b) = (qubits[0], qubits[1]);
                match (self.location[a], self.location[b]) {
                    (None, None) => self.classical.swap(a, b),
                    _ => {
                        let fidx = self.merge_for(&[a, b])?;
                        let factor = self.factors[fidx].as_mut().expect("live factor");
                        let ma = 1usize << self_pos(factor, a);
                        let mb = 1usize << self_pos(factor, b);
                        for i in 0..factor.amps.len() {
                            if i & ma != 0 && i & mb == 0 {
                                factor.amps.swap(i, (i & !ma) | mb);
                            }
                        }
                    }
                }
            }
            Gate::Measure => unreachable!("measure handled by caller"),
        }
        Ok(())
    }

    /// Samples qubit q, collapses it, removes it from its factor, and leaves
    /// it classical with the sampled value.
    fn measure(&mut self, q: usize, rng: &mut ChaCha8Rng) -> bool {
        let Some(fidx) = self.location[q] else {
            return self.classical[q];
        };
        let pos = self.local_pos(fidx, q);
        let factor = self.factors[fidx].as_mut().expect("live factor");
        let mask = 1usize << pos;
        let p1: f64 = factor
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        let total: f64 = factor.amps.iter().map(|a| a.norm_sqr()).sum();
        let outcome = rng.random::<f64>() * total < p1;
        // project and drop local bit `pos`
        let mut amps = vec![Complex64::new(0.0, 0.0); factor.amps.len() / 2];
        let low = mask - 1;
        for (i, amp) in factor.amps.iter().enumerate() {
            if (i & mask != 0) == outcome {
                amps[(i & low) | ((i >> 1) & !low)] = *amp;
            }
        }
        let scale = if outcome { p1 } else { total - p1 };
        let scale = scale.sqrt();
        for a in &mut amps {
            *a /= scale;
        }
        factor.qubits.remove(pos);
        factor.amps = amps;
        self.location[q] = None;
        self.classical[q] = outcome;
        if factor.qubits.is_empty() {
            self.factors[fidx] = None;
        }
        outcome
    }
}

fn self_pos(factor: &Factor, q: usize) -> usize {
    factor
        .qubits
        .iter()
        .position(|&x| x == q)
        .expect("qubit in factor")
}

fn run_one_shot(circuit: &Circuit, rng: &mut ChaCha8Rng) -> Result<String, SimError> {
    let mut state = FactoredState::new(circuit.num_qubits);
    let mut clbits = vec![false; circuit.num_clbits];
    for inst in &circuit.instructions {
        if inst.gate == Gate::Measure {
            let outcome = state.measure(inst.qubits[0], rng);
            clbits[inst.clbit.expect("validated measure")] = outcome;
        } else {
            state.apply(inst.gate, &inst.qubits)?;
        }
    }
    Ok(bits_to_string(&clbits))
}

/// Samples `shots` independent executions of `circuit` per the Born rule.
///
/// Deterministic for a given `seed`: shot `i` uses rng stream `(seed, i)`.
pub fn run_shots(
    circuit: &Circuit,
    shots: u64,
    seed: u64,
) -> Result<BTreeMap<String, u64>, SimError> {
    if shots == 0 {
        return Err(SimError::NoMeasurements);
    }
    if circuit.measured_clbits().is_empty() {
        return Err(SimError::NoMeasurements);
    }
    (0..shots)
        .into_par_iter()
        .try_fold(
            BTreeMap::new,
            |mut acc: BTreeMap<String, u64>, shot| -> Result<BTreeMap<String, u64>, SimError> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(shot);
                let bits = run_one_shot(circuit, &mut rng)?;
                *acc.entry(bits).or_insert(0) += 1;
                Ok(acc)
            },
        )
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (bits, n) in b {
                *a.entry(bits).or_insert(0) += n;
            }
            Ok(a)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::Angle8;
    use crate::qsim::enumerate_branches;

    #[test]
    fn empty_circuit_one_measured_qubit() {
        let mut c = Circuit::new(1, 1).unwrap();
        c.measure(0, 0).unwrap();
        let counts = run_shots(&c, 100, 7).unwrap();
        assert_eq!(counts.get("0"), Some(&100));
    }

    #[test]
    fn bell_only_00_and_11() {
        let mut c = Circuit::new(2, 2).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::Cx, &[0, 1]).unwrap();
        c.measure(0, 0).unwrap();
        c.measure(1, 1).unwrap();
        let counts = run_shots(&c, 1000, 42).unwrap();
        let total: u64 = counts.values().sum();
        assert_eq!(total, 1000);
        for bits in counts.keys() {
            assert!(bits == "00" || bits == "11", "unexpected outcome {bits}");
        }
    }

    #[test]
    fn ghz_only_extremes() {
        let mut c = Circuit::new(3, 3).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::Cx, &[0, 1]).unwrap();
        c.gate(Gate::Cx, &[0, 2]).unwrap();
        for q in 0..3 {
            c.measure(q, q).unwrap();
        }
        let counts = run_shots(&c, 500, 1).unwrap();
        for bits in counts.keys() {
            assert!(bits == "000" || bits == "111");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut c = Circuit::new(2, 2).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::Rz(Angle8::new(1)), &[0]).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::Cx, &[0, 1]).unwrap();
        c.measure(0, 0).unwrap();
        c.measure(1, 1).unwrap();
        let a = run_shots(&c, 2000, 99).unwrap();
        let b = run_shots(&c, 2000, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_measured_clbits_rejected() {
        let mut c = Circuit::new(1, 0).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        assert!(matches!(run_shots(&c, 10, 0), Err(SimError::NoMeasurements)));
    }

    #[test]
    fn swap_and_reuse_of_measured_qubit() {
        // measure q0 (random), then swap with fresh q1 and measure q1: the
        // swapped-in value must equal the first outcome.
        let mut c = Circuit::new(2, 2).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.measure(0, 0).unwrap();
        c.gate(Gate::Swap, &[0, 1]).unwrap();
        c.measure(1, 1).unwrap();
        let counts = run_shots(&c, 200, 5).unwrap();
        for bits in counts.keys() {
            assert!(bits == "00" || bits == "11");
        }
    }

    #[test]
    fn matches_enumeration_on_rotated_circuit() {
        // chi-square of sampled frequencies vs exact branch probabilities
        let mut c = Circuit::new(2, 2).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::H, &[1]).unwrap();
        c.gate(Gate::Cz, &[0, 1]).unwrap();
        c.gate(Gate::Rz(Angle8::new(1)), &[0]).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::Rz(Angle8::new(3)), &[1]).unwrap();
        c.gate(Gate::H, &[1]).unwrap();
        c.measure(0, 0).unwrap();
        c.measure(1, 1).unwrap();
        let shots = 100_000u64;
        let counts = run_shots(&c, shots, 1234).unwrap();
        let branches = enumerate_branches(&c).unwrap();
        let p = crate::stats::chi_square_p_value(
            &branches
                .iter()
                .map(|b| {
                    let observed = *counts.get(&b.bits).unwrap_or(&0) as f64;
                    (observed, b.probability * shots as f64)
                })
                .collect::<Vec<_>>(),
        );
        assert!(p > 0.001, "chi-square p = {p}");
    }
}
