//! Gate-level circuit representation and its JSON wire schema.
//!
//! The gate set is closed by construction: decoding rejects anything outside
//! {h, x, z, rz, cz, cx, ccx, swap, measure}. Outcome bitstrings render
//! clbit 0 as the rightmost character.

use crate::angle::Angle8;
use crate::qsim::{SimError, MAX_QUBITS};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    H,
    X,
    Z,
    Rz(Angle8),
    Cz,
    Cx,
    Ccx,
    Swap,
    Measure,
}

impl Gate {
    pub fn arity(self) -> usize {
        match self {
            Gate::H | Gate::X | Gate::Z | Gate::Rz(_) | Gate::Measure => 1,
            Gate::Cz | Gate::Cx | Gate::Swap => 2,
            Gate::Ccx => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::H => "h",
            Gate::X => "x",
            Gate::Z => "z",
            Gate::Rz(_) => "rz",
            Gate::Cz => "cz",
            Gate::Cx => "cx",
            Gate::Ccx => "ccx",
            Gate::Swap => "swap",
            Gate::Measure => "measure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    pub gate: Gate,
    /// Operand qubits; for cx/ccx the last entry is the target.
    pub qubits: Vec<usize>,
    /// Destination clbit, measure only.
    pub clbit: Option<usize>,
}

impl Instruction {
    pub fn unitary(gate: Gate, qubits: Vec<usize>) -> Instruction {
        Instruction {
            gate,
            qubits,
            clbit: None,
        }
    }

    pub fn measure(qubit: usize, clbit: usize) -> Instruction {
        Instruction {
            gate: Gate::Measure,
            qubits: vec![qubit],
            clbit: Some(clbit),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    pub num_qubits: usize,
    pub num_clbits: usize,
    pub instructions: Vec<Instruction>,
}

impl Circuit {
    pub fn new(num_qubits: usize, num_clbits: usize) -> Result<Circuit, SimError> {
        if num_qubits > MAX_QUBITS {
            return Err(SimError::TooManyQubits(num_qubits));
        }
        Ok(Circuit {
            num_qubits,
            num_clbits,
            instructions: Vec::new(),
        })
    }

    pub fn push(&mut self, inst: Instruction) -> Result<(), SimError> {
        self.validate(&inst)?;
        self.instructions.push(inst);
        Ok(())
    }

    pub fn gate(&mut self, gate: Gate, qubits: &[usize]) -> Result<(), SimError> {
        self.push(Instruction::unitary(gate, qubits.to_vec()))
    }

    pub fn measure(&mut self, qubit: usize, clbit: usize) -> Result<(), SimError> {
        self.push(Instruction::measure(qubit, clbit))
    }

    fn validate(&self, inst: &Instruction) -> Result<(), SimError> {
        let expected = inst.gate.arity();
        if inst.qubits.len() != expected {
            return Err(SimError::BadArity {
                gate: inst.gate.name(),
                expected,
                got: inst.qubits.len(),
            });
        }
        for &q in &inst.qubits {
            if q >= self.num_qubits {
                return Err(SimError::QubitOutOfRange {
                    index: q,
                    num_qubits: self.num_qubits,
                });
            }
        }
        if expected > 1 {
            for i in 0..inst.qubits.len() {
                for j in i + 1..inst.qubits.len() {
                    if inst.qubits[i] == inst.qubits[j] {
                        return Err(SimError::DuplicateOperand);
                    }
                }
            }
        }
        match (inst.gate, inst.clbit) {
            (Gate::Measure, Some(c)) => {
                if c >= self.num_clbits {
                    return Err(SimError::ClbitOutOfRange {
                        index: c,
                        num_clbits: self.num_clbits,
                    });
                }
            }
            (Gate::Measure, None) => {
                return Err(SimError::BadArity {
                    gate: "measure",
                    expected: 1,
                    got: 0,
                })
            }
            (_, Some(_)) => return Err(SimError::MeasureOnUnitaryPath),
            (_, None) => {}
        }
        Ok(())
    }

    /// Clbits written by at least one measure instruction.
    pub fn measured_clbits(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_clbits];
        for inst in &self.instructions {
            if let Some(c) = inst.clbit {
                seen[c] = true;
            }
        }
        (0..self.num_clbits).filter(|&c| seen[c]).collect()
    }

    /// Qubits never targeted by a measure instruction.
    pub fn unmeasured_qubits(&self) -> Vec<usize> {
        let mut measured = vec![false; self.num_qubits];
        for inst in &self.instructions {
            if inst.gate == Gate::Measure {
                measured[inst.qubits[0]] = true;
            }
        }
        (0..self.num_qubits).filter(|&q| !measured[q]).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&CircuitJson::from(self)).expect("circuit serialization")
    }

    pub fn from_json(text: &str) -> Result<Circuit, SimError> {
        let raw: CircuitJson =
            serde_json::from_str(text).map_err(|e| SimError::BadJson(e.to_string()))?;
        raw.try_into()
    }
}

impl Serialize for Circuit {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CircuitJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Circuit {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Circuit, D::Error> {
        let raw = CircuitJson::deserialize(deserializer)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }
}

/// Renders classical bits as a string with clbit 0 rightmost.
pub(crate) fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().rev().map(|&b| if b { '1' } else { '0' }).collect()
}

#[derive(Serialize, Deserialize)]
struct OpJson {
    g: String,
    q: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct CircuitJson {
    n_qubits: usize,
    n_clbits: usize,
    ops: Vec<OpJson>,
}

impl From<&Circuit> for CircuitJson {
    fn from(c: &Circuit) -> CircuitJson {
        CircuitJson {
            n_qubits: c.num_qubits,
            n_clbits: c.num_clbits,
            ops: c
                .instructions
                .iter()
                .map(|inst| OpJson {
                    g: inst.gate.name().to_string(),
                    q: inst.qubits.clone(),
                    k: match inst.gate {
                        Gate::Rz(a) => Some(i64::from(a.k())),
                        _ => None,
                    },
                    c: inst.clbit,
                })
                .collect(),
        }
    }
}

impl TryFrom<CircuitJson> for Circuit {
    type Error = SimError;

    fn try_from(raw: CircuitJson) -> Result<Circuit, SimError> {
        let mut circuit = Circuit::new(raw.n_qubits, raw.n_clbits)?;
        for op in raw.ops {
            let gate = match op.g.as_str() {
                "h" => Gate::H,
                "x" => Gate::X,
                "z" => Gate::Z,
                "rz" => {
                    let k = op
                        .k
                        .ok_or_else(|| SimError::BadJson("rz without k".to_string()))?;
                    Gate::Rz(Angle8::new(k))
                }
                "cz" => Gate::Cz,
                "cx" => Gate::Cx,
                "ccx" => Gate::Ccx,
                "swap" => Gate::Swap,
                "measure" => Gate::Measure,
                other => return Err(SimError::BadJson(format!("unknown gate {other:?}"))),
            };
            if gate != Gate::Measure && op.c.is_some() {
                return Err(SimError::BadJson("c field on a unitary gate".to_string()));
            }
            circuit.push(Instruction {
                gate,
                qubits: op.q,
                clbit: op.c,
            })?;
        }
        Ok(circuit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        let mut c = Circuit::new(2, 1).unwrap();
        assert!(matches!(
            c.gate(Gate::H, &[2]),
            Err(SimError::QubitOutOfRange { .. })
        ));
        assert!(matches!(
            c.measure(0, 3),
            Err(SimError::ClbitOutOfRange { .. })
        ));
        assert!(matches!(c.gate(Gate::Cz, &[1, 1]), Err(SimError::DuplicateOperand)));
    }

    #[test]
    fn json_round_trip() {
        let mut c = Circuit::new(3, 2).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.gate(Gate::Rz(Angle8::new(3)), &[0]).unwrap();
        c.gate(Gate::Ccx, &[0, 1, 2]).unwrap();
        c.measure(0, 0).unwrap();
        c.measure(2, 1).unwrap();
        let text = c.to_json();
        let back = Circuit::from_json(&text).unwrap();
        assert_eq!(c, back);
        // byte-exact re-encode
        assert_eq!(text, back.to_json());
    }

    #[test]
    fn json_rejects_unknown_gate() {
        let text = r#"{"n_qubits":1,"n_clbits":0,"ops":[{"g":"t","q":[0]}]}"#;
        assert!(Circuit::from_json(text).is_err());
    }

    #[test]
    fn bit_order_clbit0_rightmost() {
        assert_eq!(bits_to_string(&[true, false]), "01");
        assert_eq!(bits_to_string(&[false, true, true]), "110");
    }
}
