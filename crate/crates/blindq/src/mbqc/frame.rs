//! Byproduct calibration: fits the measurement-outcome-dependent Pauli
//! corrections of a pattern by exact branch enumeration.
//!
//! The all-zero-outcome branch is taken as the reference residual. Every
//! single-outcome branch is matched against the reference under candidate
//! output Paulis; a backtracking pass picks one candidate per measured node
//! so that the XOR-composed prediction reproduces *every* branch exactly
//! (up to global phase). The result is an XOR-linear frame: flip X on
//! output o iff the parity of outcomes in `x_deps[o]` is odd, likewise Z.

use crate::mbqc::{lower_to_circuit, NodeId, Pattern, PatternError, WireInput};
use crate::qsim::{enumerate_branches, fidelity, Branch, Gate, Instruction, Statevector};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

const FIT_EPS: f64 = 1e-9;

/// XOR-linear byproduct corrections for a pattern's outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    /// measured nodes whose outcome parity toggles X on each output node
    pub x_deps: BTreeMap<NodeId, BTreeSet<NodeId>>,
    /// measured nodes whose outcome parity toggles Z on each output node
    pub z_deps: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl PauliFrame {
    /// Frame applying no correction to any output. Used when no exact
    /// XOR-linear frame exists and decoding keeps only the zero branch.
    pub fn identity(pattern: &Pattern) -> Self {
        PauliFrame {
            x_deps: pattern.output_nodes().iter().map(|&o| (o, BTreeSet::new())).collect(),
            z_deps: pattern.output_nodes().iter().map(|&o| (o, BTreeSet::new())).collect(),
        }
    }

    /// X-correction bit for `output` given the measured-node outcomes.
    pub fn x_flip(
        &self,
        output: NodeId,
        outcomes: &BTreeMap<NodeId, bool>,
    ) -> Result<bool, PatternError> {
        let deps = self.x_deps.get(&output).ok_or(PatternError::FrameMismatch)?;
        let mut flip = false;
        for node in deps {
            flip ^= *outcomes.get(node).ok_or(PatternError::FrameMismatch)?;
        }
        Ok(flip)
    }
}

/// One output Pauli as X/Z bitmasks over the residual-qubit positions.
/// Composition is mask XOR; global phase is irrelevant here because all
/// comparisons go through phase-insensitive fidelity.
#[derive(Clone, Copy, PartialEq, Eq)]
struct Pauli {
    x: u64,
    z: u64,
}

fn apply_pauli(state: &Statevector, pauli: Pauli, num_outputs: usize) -> Statevector {
    let mut out = state.clone();
    for q in 0..num_outputs {
        if pauli.x >> q & 1 == 1 {
            out.apply(&Instruction::unitary(Gate::X, vec![q])).unwrap();
        }
        if pauli.z >> q & 1 == 1 {
            out.apply(&Instruction::unitary(Gate::Z, vec![q])).unwrap();
        }
    }
    out
}

fn matches_reference(
    branch: &Branch,
    pauli: Pauli,
    reference: &Statevector,
    num_outputs: usize,
) -> Result<bool, PatternError> {
    let residual = branch
        .residual
        .as_ref()
        .ok_or_else(|| PatternError::ZeroBranch(branch.bits.clone()))?;
    let corrected = apply_pauli(residual, pauli, num_outputs);
    Ok((fidelity(&corrected, reference)? - 1.0).abs() < FIT_EPS)
}

/// Calibrates the Pauli frame of `pattern` by exact enumeration of its
/// unblinded lowering with all-|+> inputs.
pub fn calibrate_frame(pattern: &Pattern) -> Result<PauliFrame, PatternError> {
    if pattern.measured_nodes().is_empty() {
        // nothing to correct: every output needs the identity
        return Ok(PauliFrame::identity(pattern));
    }
    let inputs: BTreeMap<usize, WireInput> = (0..pattern.num_wires())
        .map(|w| (w, WireInput::Plus))
        .collect();
    let (circuit, layout) = lower_to_circuit(pattern, &inputs, false)?;
    let branches = enumerate_branches(&circuit)?;
    let measured = pattern.measured_nodes();
    let outputs = pattern.output_nodes();
    let m = measured.len();
    let num_outputs = outputs.len();

    // Index branches by their measured-bit mask (clbit i = measured[i]).
    let mut by_mask: BTreeMap<u64, &Branch> = BTreeMap::new();
    for branch in &branches {
        let mut mask = 0u64;
        for i in 0..m {
            if branch.bit(layout.measured_clbit[&measured[i]]) {
                mask |= 1 << i;
            }
        }
        if branch.is_zero() {
            return Err(PatternError::ZeroBranch(branch.bits.clone()));
        }
        by_mask.insert(mask, branch);
    }
    let reference = by_mask[&0]
        .residual
        .as_ref()
        .ok_or_else(|| PatternError::ZeroBranch(by_mask[&0].bits.clone()))?;

    // All Paulis reproducing each single-outcome branch. States invariant
    // under some Pauli (e.g. Z on a computational output) give several
    // candidates; the backtracking pass below disambiguates them.
    let mut candidates: Vec<Vec<Pauli>> = Vec::with_capacity(m);
    for i in 0..m {
        let branch = by_mask[&(1u64 << i)];
        let mut fits = Vec::new();
        for x in 0..1u64 << num_outputs {
            for z in 0..1u64 << num_outputs {
                let pauli = Pauli { x, z };
                if matches_reference(branch, pauli, reference, num_outputs)? {
                    fits.push(pauli);
                }
            }
        }
        if fits.is_empty() {
            return Err(PatternError::NoExactPauli {
                bits: branch.bits.clone(),
            });
        }
        candidates.push(fits);
    }

    // Pick one candidate per node so XOR composition explains every branch;
    // prune at each depth using the branches supported on assigned nodes.
    let mut chosen: Vec<Pauli> = Vec::with_capacity(m);
    if !backtrack(0, m, &candidates, &by_mask, reference, num_outputs, &mut chosen)? {
        return Err(PatternError::FrameNotLinear);
    }

    let mut x_deps: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut z_deps: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for (pos, &out) in outputs.iter().enumerate() {
        let mut xs = BTreeSet::new();
        let mut zs = BTreeSet::new();
        for (i, pauli) in chosen.iter().enumerate() {
            if pauli.x >> pos & 1 == 1 {
                xs.insert(measured[i]);
            }
            if pauli.z >> pos & 1 == 1 {
                zs.insert(measured[i]);
            }
        }
        x_deps.insert(out, xs);
        z_deps.insert(out, zs);
    }
    Ok(PauliFrame { x_deps, z_deps })
}

#[allow(clippy::too_many_arguments)]
fn backtrack(
    depth: usize,
    m: usize,
    candidates: &[Vec<Pauli>],
    by_mask: &BTreeMap<u64, &Branch>,
    reference: &Statevector,
    num_outputs: usize,
    chosen: &mut Vec<Pauli>,
) -> Result<bool, PatternError> {
    if depth == m {
        return Ok(true);
    }
    'next: for &candidate in &candidates[depth] {
        chosen.push(candidate);
        // verify every branch whose support lies in nodes 0..=depth and
        // includes node `depth` (lower-support branches were checked before)
        for mask in 0..1u64 << (depth + 1) {
            if mask >> depth & 1 == 0 {
                continue;
            }
            let mut composed = Pauli { x: 0, z: 0 };
            for (i, p) in chosen.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    composed = Pauli {
                        x: composed.x ^ p.x,
                        z: composed.z ^ p.z,
                    };
                }
            }
            if !matches_reference(by_mask[&mask], composed, reference, num_outputs)? {
                chosen.pop();
                continue 'next;
            }
        }
        if backtrack(depth + 1, m, candidates, by_mask, reference, num_outputs, chosen)? {
            return Ok(true);
        }
        chosen.pop();
    }
    Ok(false)
}
