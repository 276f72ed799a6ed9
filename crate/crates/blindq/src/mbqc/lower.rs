//! Pattern-to-circuit lowering.
//!
//! Every node becomes one qubit prepared in |+> (optionally rotated to
//! |+_theta> for blinded inputs), every edge a CZ, and every measured node
//! the sequence Rz(angle); H; measure, so that outcome 0 projects the chain
//! step H*Rz(angle) onto the successor. Output nodes are measured in the
//! computational basis when requested, or left unmeasured so branch
//! enumeration exposes their residual state.

use crate::angle::Angle8;
use crate::mbqc::{NodeId, Pattern, PatternError};
use crate::qsim::{Circuit, Gate};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WireInput {
    Plus,
    PlusTheta(Angle8),
}

/// Node-to-qubit/clbit assignment of a lowered pattern.
#[derive(Clone, Debug)]
pub struct LowerLayout {
    /// qubit carrying each node (identity here: node id = qubit index)
    pub node_qubit: Vec<usize>,
    /// clbit per measured node, in node order
    pub measured_clbit: BTreeMap<NodeId, usize>,
    /// clbit per output node (present only when outputs are measured)
    pub output_clbit: BTreeMap<NodeId, usize>,
}

/// Lowers with per-wire inputs: the first node of each wire is prepared in
/// the given state, all other nodes in |+>.
pub fn lower_to_circuit(
    pattern: &Pattern,
    inputs: &BTreeMap<usize, WireInput>,
    measure_outputs: bool,
) -> Result<(Circuit, LowerLayout), PatternError> {
    let mut preps = BTreeMap::new();
    for wire in 0..pattern.num_wires() {
        let input = inputs
            .get(&wire)
            .ok_or(PatternError::MissingWireInput(wire))?;
        if let WireInput::PlusTheta(theta) = input {
            let node = pattern.input_node_of_wire(wire).expect("wire exists");
            preps.insert(node, *theta);
        }
    }
    lower_with_preps(pattern, &preps, measure_outputs)
}

/// Lowers with explicit per-node preparation rotations: node `n` with an
/// entry theta is prepared in |+_theta>, all others in |+>. This is the
/// blinded path, where every measured node carries a secret rotation.
pub fn lower_with_preps(
    pattern: &Pattern,
    preps: &BTreeMap<NodeId, Angle8>,
    measure_outputs: bool,
) -> Result<(Circuit, LowerLayout), PatternError> {
    pattern.validate()?;
    let measured = pattern.measured_nodes();
    let outputs = pattern.output_nodes();
    let num_clbits = measured.len() + if measure_outputs { outputs.len() } else { 0 };
    let mut circuit = Circuit::new(pattern.nodes.len(), num_clbits)?;

    for node in &pattern.nodes {
        circuit.gate(Gate::H, &[node.id])?;
        if let Some(&theta) = preps.get(&node.id) {
            if theta != Angle8::ZERO {
                circuit.gate(Gate::Rz(theta), &[node.id])?;
            }
        }
    }
    for &(a, b) in &pattern.edges {
        circuit.gate(Gate::Cz, &[a, b])?;
    }

    let mut measured_clbit = BTreeMap::new();
    for (i, &node) in measured.iter().enumerate() {
        let angle = pattern.nodes[node].angle.expect("measured node");
        if angle != Angle8::ZERO {
            circuit.gate(Gate::Rz(angle), &[node])?;
        }
        circuit.gate(Gate::H, &[node])?;
        circuit.measure(node, i)?;
        measured_clbit.insert(node, i);
    }

    let mut output_clbit = BTreeMap::new();
    if measure_outputs {
        for (i, &node) in outputs.iter().enumerate() {
            let clbit = measured.len() + i;
            circuit.measure(node, clbit)?;
            output_clbit.insert(node, clbit);
        }
    }

    Ok((
        circuit,
        LowerLayout {
            node_qubit: (0..pattern.nodes.len()).collect(),
            measured_clbit,
            output_clbit,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbqc::compile_circuit;
    use crate::qsim::{enumerate_branches, fidelity, run_unitary, Statevector};

    fn all_plus(pattern: &Pattern) -> BTreeMap<usize, WireInput> {
        (0..pattern.num_wires()).map(|w| (w, WireInput::Plus)).collect()
    }

    /// Residual of the all-zero-outcome branch with outputs unmeasured.
    pub(crate) fn zero_branch_residual(
        pattern: &Pattern,
        inputs: &BTreeMap<usize, WireInput>,
    ) -> Statevector {
        let (circuit, _) = lower_to_circuit(pattern, inputs, false).unwrap();
        let branches = enumerate_branches(&circuit).unwrap();
        let zero = branches
            .iter()
            .find(|b| b.bits.chars().all(|c| c == '0'))
            .expect("zero branch present");
        zero.residual.clone().expect("nonzero probability")
    }

    /// U |+...+> for the given source circuit.
    fn unitary_on_plus(source: &Circuit) -> Statevector {
        let mut prefixed = Circuit::new(source.num_qubits, 0).unwrap();
        for q in 0..source.num_qubits {
            prefixed.gate(Gate::H, &[q]).unwrap();
        }
        for inst in &source.instructions {
            prefixed.push(inst.clone()).unwrap();
        }
        run_unitary(&prefixed).unwrap()
    }

    #[test]
    fn missing_wire_input_rejected() {
        let p = Pattern::chain(&[Angle8::ZERO]);
        let err = lower_to_circuit(&p, &BTreeMap::new(), true).unwrap_err();
        assert!(matches!(err, PatternError::MissingWireInput(0)));
    }

    #[test]
    fn output_only_pattern_measures_input() {
        let p = Pattern::chain(&[]);
        let mut inputs = BTreeMap::new();
        inputs.insert(0, WireInput::PlusTheta(Angle8::PI)); // |->
        let (c, layout) = lower_to_circuit(&p, &inputs, true).unwrap();
        assert_eq!(layout.output_clbit.len(), 1);
        let branches = enumerate_branches(&c).unwrap();
        // measuring |-> is uniform
        for b in &branches {
            assert!((b.probability - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_zero_angle_realizes_h() {
        // chain [0] realizes H; on |+> the zero branch residual is H|+> = |0>
        let p = Pattern::chain(&[Angle8::ZERO]);
        let residual = zero_branch_residual(&p, &all_plus(&p));
        let expected = Statevector::zero(1).unwrap();
        assert!((fidelity(&residual, &expected).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_node_chain_uniform_branches() {
        // Both angles zero: 4 branches, each probability 1/4.
        let p = Pattern::chain(&[Angle8::ZERO, Angle8::ZERO]);
        let (c, _) = lower_to_circuit(&p, &all_plus(&p), false).unwrap();
        let branches = enumerate_branches(&c).unwrap();
        assert_eq!(branches.len(), 4);
        for b in &branches {
            assert!((b.probability - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn compiled_rz_realizes_rz_for_every_angle() {
        use crate::mbqc::compile_1q;
        for k in 0..8u8 {
            let mut source = Circuit::new(1, 0).unwrap();
            source.gate(Gate::Rz(Angle8::new(k as i64)), &[0]).unwrap();
            let p = compile_1q(&[Gate::Rz(Angle8::new(k as i64))]).unwrap();
            if p.measured_nodes().is_empty() {
                continue; // k = 0 compiles to the empty word
            }
            let residual = zero_branch_residual(&p, &all_plus(&p));
            let expected = unitary_on_plus(&source);
            assert!(
                (fidelity(&residual, &expected).unwrap() - 1.0).abs() < 1e-9,
                "k = {k}"
            );
        }
    }

    #[test]
    fn compiled_x_realizes_x_up_to_phase() {
        use crate::mbqc::compile_1q;
        let p = compile_1q(&[Gate::X]).unwrap();
        let mut source = Circuit::new(1, 0).unwrap();
        source.gate(Gate::X, &[0]).unwrap();
        let residual = zero_branch_residual(&p, &all_plus(&p));
        let expected = unitary_on_plus(&source);
        assert!((fidelity(&residual, &expected).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compiled_bell_zero_branch_matches_unitary() {
        let mut source = Circuit::new(2, 0).unwrap();
        source.gate(Gate::H, &[1]).unwrap();
        source.gate(Gate::Cx, &[0, 1]).unwrap();
        let p = compile_circuit(&source).unwrap();
        let residual = zero_branch_residual(&p, &all_plus(&p));
        let expected = unitary_on_plus(&source);
        assert!((fidelity(&residual, &expected).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn merged_rz_and_direct_rz_have_identical_branch_semantics() {
        use crate::mbqc::compile_1q;
        let a = Angle8::new(2);
        let b = Angle8::new(3);
        let merged = compile_1q(&[Gate::Rz(a), Gate::Rz(b)]).unwrap();
        let direct = compile_1q(&[Gate::Rz(a + b)]).unwrap();
        assert_eq!(merged, direct);
        let (ca, _) = lower_to_circuit(&merged, &all_plus(&merged), true).unwrap();
        let (cb, _) = lower_to_circuit(&direct, &all_plus(&direct), true).unwrap();
        let ba = enumerate_branches(&ca).unwrap();
        let bb = enumerate_branches(&cb).unwrap();
        for (x, y) in ba.iter().zip(&bb) {
            assert_eq!(x.bits, y.bits);
            assert!((x.probability - y.probability).abs() < 1e-12);
        }
    }
}
