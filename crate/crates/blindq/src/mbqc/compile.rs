//! Circuit-model to measurement-pattern compiler.
//!
//! Single-qubit gates are rewritten into words over {H, Rz(k pi/4)} and
//! reduced with the gate identities (adjacent Rz merge mod 8, H H
//! cancellation, Rz commuting through CZ). Each H in the reduced word closes
//! one chain node: a node measured at angle phi realizes H*Rz(phi). A
//! trailing rotation Rz(a) closes with two nodes (a, 0) since
//! H Rz(0) H Rz(a) = Rz(a). CX is lowered as H on the target conjugating a
//! CZ. Repeated CZ at the same frontier toggles the edge away (CZ^2 = I).

use crate::angle::Angle8;
use crate::mbqc::{Pattern, PatternError};
use crate::qsim::{Circuit, Gate};
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tok {
    H,
    Rz(Angle8),
}

/// Reduced word: no adjacent H pairs, no adjacent or zero rotations.
#[derive(Default)]
struct Word(Vec<Tok>);

impl Word {
    fn push(&mut self, tok: Tok) {
        match (self.0.last().copied(), tok) {
            (Some(Tok::H), Tok::H) => {
                self.0.pop();
            }
            (Some(Tok::Rz(a)), Tok::Rz(b)) => {
                self.0.pop();
                let merged = a + b;
                if merged != Angle8::ZERO {
                    // re-push so an exposed H pair can still cancel later
                    self.push(Tok::Rz(merged));
                }
            }
            (_, Tok::Rz(a)) if a == Angle8::ZERO => {}
            _ => self.0.push(tok),
        }
    }

    fn push_gate(&mut self, gate: Gate) -> Result<(), PatternError> {
        match gate {
            Gate::H => self.push(Tok::H),
            Gate::Z => self.push(Tok::Rz(Angle8::PI)),
            Gate::Rz(a) => self.push(Tok::Rz(a)),
            Gate::X => {
                self.push(Tok::H);
                self.push(Tok::Rz(Angle8::PI));
                self.push(Tok::H);
            }
            other => return Err(PatternError::UnsupportedGate(other.name())),
        }
        Ok(())
    }
}

struct WireBuilder {
    pending: Word,
    /// Angles of measured chain nodes emitted so far; the frontier node sits
    /// at position `angles.len()`.
    angles: Vec<Angle8>,
}

impl WireBuilder {
    fn new() -> WireBuilder {
        WireBuilder {
            pending: Word::default(),
            angles: Vec::new(),
        }
    }

    fn frontier(&self) -> usize {
        self.angles.len()
    }

    /// Emits chain nodes for every pending token up to and including the
    /// last H; a trailing rotation stays pending (it commutes with CZ).
    fn flush_for_cz(&mut self) {
        let last_h = match self.pending.0.iter().rposition(|&t| t == Tok::H) {
            Some(i) => i,
            None => return,
        };
        let rest = self.pending.0.split_off(last_h + 1);
        let toks = std::mem::take(&mut self.pending.0);
        self.emit(&toks);
        self.pending.0 = rest;
    }

    /// Emits everything, closing a trailing rotation with the (a, 0) pair.
    fn finish(&mut self) {
        let toks = std::mem::take(&mut self.pending.0);
        let trailing = self.emit(&toks);
        if let Some(a) = trailing {
            self.angles.push(a);
            self.angles.push(Angle8::ZERO);
        }
    }

    /// Walks tokens in application order; each H closes one node whose angle
    /// is the rotation accumulated since the previous H. Returns a trailing
    /// accumulated rotation, if any.
    fn emit(&mut self, toks: &[Tok]) -> Option<Angle8> {
        let mut acc = Angle8::ZERO;
        for &tok in toks {
            match tok {
                Tok::Rz(a) => acc = acc + a,
                Tok::H => {
                    self.angles.push(acc);
                    acc = Angle8::ZERO;
                }
            }
        }
        (acc != Angle8::ZERO).then_some(acc)
    }
}

/// Compiles a single-qubit gate word over {H, X, Z, Rz} into a one-wire
/// chain realizing the same unitary up to the measurement byproduct.
pub fn compile_1q(gates: &[Gate]) -> Result<Pattern, PatternError> {
    let mut builder = WireBuilder::new();
    for &gate in gates {
        builder.pending.push_gate(gate)?;
    }
    builder.finish();
    Ok(Pattern::chain(&builder.angles))
}

/// Compiles a circuit over {H, X, Z, Rz, CZ, CX} into a chain+bridge
/// pattern. The pattern's unitary semantics take every wire input as |+>.
pub fn compile_circuit(circuit: &Circuit) -> Result<Pattern, PatternError> {
    let mut wires: Vec<WireBuilder> = (0..circuit.num_qubits).map(|_| WireBuilder::new()).collect();
    let mut bridges: BTreeSet<((usize, usize), (usize, usize))> = BTreeSet::new();

    let add_cz = |wires: &mut Vec<WireBuilder>,
                      bridges: &mut BTreeSet<((usize, usize), (usize, usize))>,
                      a: usize,
                      b: usize| {
        wires[a].flush_for_cz();
        wires[b].flush_for_cz();
        let mut key = (
            (a, wires[a].frontier()),
            (b, wires[b].frontier()),
        );
        if key.1 < key.0 {
            key = (key.1, key.0);
        }
        // CZ is self-inverse: a repeated edge at the same frontier cancels
        if !bridges.insert(key) {
            bridges.remove(&key);
        }
    };

    for inst in &circuit.instructions {
        match inst.gate {
            Gate::H | Gate::X | Gate::Z | Gate::Rz(_) => {
                wires[inst.qubits[0]].pending.push_gate(inst.gate)?;
            }
            Gate::Cz => add_cz(&mut wires, &mut bridges, inst.qubits[0], inst.qubits[1]),
            Gate::Cx => {
                let (control, target) = (inst.qubits[0], inst.qubits[1]);
                wires[target].pending.push_gate(Gate::H)?;
                add_cz(&mut wires, &mut bridges, control, target);
                wires[target].pending.push_gate(Gate::H)?;
            }
            other => return Err(PatternError::UnsupportedGate(other.name())),
        }
    }
    for builder in &mut wires {
        builder.finish();
    }
    let pattern = Pattern::from_wires(wires.into_iter().map(|w| w.angles).collect(), bridges);
    pattern.validate()?;
    Ok(pattern)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn angles_of(p: &Pattern) -> Vec<u8> {
        p.nodes.iter().filter_map(|n| n.angle.map(|a| a.k())).collect()
    }

    #[test]
    fn h_is_single_node() {
        let p = compile_1q(&[Gate::H]).unwrap();
        assert_eq!(angles_of(&p), vec![0]);
    }

    #[test]
    fn rz_is_two_nodes() {
        for k in 1..8 {
            let p = compile_1q(&[Gate::Rz(Angle8::new(k))]).unwrap();
            assert_eq!(angles_of(&p), vec![k as u8, 0]);
        }
    }

    #[test]
    fn x_is_zero_then_pi() {
        let p = compile_1q(&[Gate::X]).unwrap();
        assert_eq!(angles_of(&p), vec![0, 4]);
    }

    #[test]
    fn adjacent_rz_merge() {
        let p = compile_1q(&[Gate::Rz(Angle8::new(2)), Gate::Rz(Angle8::new(3))]).unwrap();
        assert_eq!(angles_of(&p), vec![5, 0]);
    }

    #[test]
    fn hh_cancels_to_output_only() {
        let p = compile_1q(&[Gate::H, Gate::H]).unwrap();
        assert!(angles_of(&p).is_empty());
        assert_eq!(p.nodes.len(), 1);
    }

    #[test]
    fn xx_cancels() {
        let p = compile_1q(&[Gate::X, Gate::X]).unwrap();
        assert!(angles_of(&p).is_empty());
    }

    #[test]
    fn bell_prep_has_one_bridge() {
        let mut c = Circuit::new(2, 0).unwrap();
        c.gate(Gate::H, &[1]).unwrap();
        c.gate(Gate::Cx, &[0, 1]).unwrap();
        let p = compile_circuit(&c).unwrap();
        p.validate().unwrap();
        assert_eq!(p.num_wires(), 2);
        let chain_edges = p.measured_nodes().len();
        let bridges = p.edges.len() - chain_edges;
        assert_eq!(bridges, 1, "pattern: {p:?}");
    }

    #[test]
    fn double_cz_cancels_edge() {
        let mut c = Circuit::new(2, 0).unwrap();
        c.gate(Gate::Cz, &[0, 1]).unwrap();
        c.gate(Gate::Cz, &[1, 0]).unwrap();
        let p = compile_circuit(&c).unwrap();
        assert!(p.measured_nodes().is_empty());
        assert!(p.edges.is_empty());
    }

    #[test]
    fn ccx_unsupported() {
        let mut c = Circuit::new(3, 0).unwrap();
        c.gate(Gate::Ccx, &[0, 1, 2]).unwrap();
        assert!(matches!(
            compile_circuit(&c),
            Err(PatternError::UnsupportedGate("ccx"))
        ));
    }
}
