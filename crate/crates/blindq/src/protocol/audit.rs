//! Blindness audit: structural checks that the server's view is
//! independent of the client's secrets.
//!
//! This is not a cryptographic proof; it verifies the artifact-level
//! consequences of the design. Two runs of the same source circuit under
//! different seeds must produce instruction streams that are identical
//! except for rotation angles (the published deltas and squeezing alphas),
//! and the published delta marginal must be indistinguishable from uniform.

use crate::protocol::wire::{decode, WireMessage};
use crate::protocol::ProtocolError;
use crate::qsim::Gate;
use crate::stats::chi_square_uniform_p_value;

#[derive(Clone, Debug)]
pub struct AuditReport {
    /// logs have identical shape and differ only in rotation angles
    pub structural_pass: bool,
    /// every logged line is a well-formed submit with no extra fields
    pub wire_shape_pass: bool,
    /// chi-square p-value of the delta samples against uniform Z8
    pub delta_p_value: f64,
    pub delta_samples: usize,
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.structural_pass && self.wire_shape_pass && self.delta_p_value > 0.001
    }
}

const SUBMIT_FIELDS: [&str; 5] = ["kind", "job_id", "circuit", "shots", "seed"];

/// Compares two server logs from runs of the same source circuit under
/// different seeds and tests the published-delta marginal for uniformity.
/// `delta_samples` should hold at least 800 per-node delta values gathered
/// across many seeds.
pub fn blindness_audit(
    log_a: &[String],
    log_b: &[String],
    delta_samples: &[u8],
) -> Result<AuditReport, ProtocolError> {
    let mut notes = Vec::new();
    let mut structural_pass = true;
    let mut wire_shape_pass = true;

    if log_a.len() != log_b.len() {
        structural_pass = false;
        notes.push(format!(
            "log lengths differ: {} vs {}",
            log_a.len(),
            log_b.len()
        ));
    }
    for line in log_a.iter().chain(log_b) {
        if !submit_line_well_formed(line) {
            wire_shape_pass = false;
            notes.push(format!("non-submit or extra-field line: {line}"));
        }
    }
    for (i, (a, b)) in log_a.iter().zip(log_b).enumerate() {
        match diff_submits(a, b) {
            Ok(allowed) => {
                if !allowed {
                    structural_pass = false;
                    notes.push(format!("line {i}: differs beyond rotation angles"));
                }
            }
            Err(e) => {
                structural_pass = false;
                notes.push(format!("line {i}: {e}"));
            }
        }
    }

    let delta_p_value = if delta_samples.is_empty() {
        0.0
    } else {
        chi_square_uniform_p_value(delta_samples, 8)
    };
    Ok(AuditReport {
        structural_pass,
        wire_shape_pass,
        delta_p_value,
        delta_samples: delta_samples.len(),
        notes,
    })
}

/// A logged line must decode as a submit and carry exactly the public
/// fields — the codec has no way to serialize thetas, phis, or trapdoors,
/// and this guards against that ever changing.
fn submit_line_well_formed(line: &str) -> bool {
    if !matches!(decode(line), Ok(WireMessage::Submit { .. })) {
        return false;
    }
    let Ok(value) = serde_json::from_str::<serde_json::Value>(line) else {
        return false;
    };
    let Some(obj) = value.as_object() else {
        return false;
    };
    obj.len() == SUBMIT_FIELDS.len() && SUBMIT_FIELDS.iter().all(|f| obj.contains_key(*f))
}

/// True iff the two submit lines are identical apart from Rz angle values.
fn diff_submits(a: &str, b: &str) -> Result<bool, ProtocolError> {
    let (WireMessage::Submit {
        circuit: ca,
        shots: sa,
        ..
    },
    WireMessage::Submit {
        circuit: cb,
        shots: sb,
        ..
    }) = (decode(a)?, decode(b)?)
    else {
        return Ok(false);
    };
    if sa != sb
        || ca.num_qubits != cb.num_qubits
        || ca.num_clbits != cb.num_clbits
        || ca.instructions.len() != cb.instructions.len()
    {
        return Ok(false);
    }
    for (ia, ib) in ca.instructions.iter().zip(&cb.instructions) {
        if ia.qubits != ib.qubits || ia.clbit != ib.clbit {
            return Ok(false);
        }
        match (ia.gate, ib.gate) {
            (Gate::Rz(_), Gate::Rz(_)) => {} // the only permitted difference
            (ga, gb) if ga == gb => {}
            _ => return Ok(false),
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{client_run, demo_source, InProcTransport, RunConfig};
    use crate::protocol::wire::encode;
    use crate::qsim::Circuit;
    use crate::ubqc::blind;
    use std::sync::Arc;

    fn logged_run(seed: u64) -> Vec<String> {
        let source = demo_source("bell").unwrap();
        let config = RunConfig {
            shots: 64,
            seed,
            ..RunConfig::default()
        };
        let mut transport = InProcTransport::new();
        client_run(&source, &config, &mut transport).unwrap();
        transport.server.audit_log()
    }

    #[test]
    fn same_source_two_seeds_differ_only_in_angles() {
        let log_a = logged_run(101);
        let log_b = logged_run(202);
        let report = blindness_audit(&log_a, &log_b, &[]).unwrap();
        assert!(report.structural_pass, "{:?}", report.notes);
        assert!(report.wire_shape_pass, "{:?}", report.notes);
    }

    #[test]
    fn different_shape_is_flagged() {
        let log_a = logged_run(7);
        let mut c = Circuit::new(1, 1).unwrap();
        c.gate(Gate::H, &[0]).unwrap();
        c.measure(0, 0).unwrap();
        let other = vec![encode(&WireMessage::Submit {
            job_id: 0,
            circuit: c,
            shots: 64,
            seed: 0,
        })];
        let report = blindness_audit(&log_a, &other, &[]).unwrap();
        assert!(!report.structural_pass);
    }

    #[test]
    fn delta_marginal_uniform() {
        use crate::angle::Angle8;
        use crate::mbqc::Pattern;
        let pattern = Pattern::chain(&[Angle8::new(3), Angle8::new(6)]);
        let mut samples = Vec::new();
        for seed in 0..500 {
            let blinded = blind(&pattern, seed).unwrap();
            for n in pattern.measured_nodes() {
                samples.push(blinded.server_view().nodes[n].angle.unwrap().k());
            }
        }
        let report = blindness_audit(&[], &[], &samples).unwrap();
        assert!(report.delta_samples >= 800);
        assert!(report.delta_p_value > 0.001, "p = {}", report.delta_p_value);
        assert!(report.pass());
    }

    #[test]
    fn logged_lines_never_mention_secret_fields() {
        let log = logged_run(11);
        assert!(!log.is_empty());
        for line in &log {
            for token in ["theta", "phi", "d0", "secrets", "trapdoor", "key"] {
                assert!(!line.contains(token), "{token} leaked in {line}");
            }
        }
    }

    #[test]
    fn audit_sees_server_log_through_shared_handle() {
        let server = Arc::new(crate::protocol::Server::new());
        let mut t = InProcTransport {
            server: Arc::clone(&server),
        };
        let source = demo_source("chain").unwrap();
        let config = RunConfig {
            shots: 16,
            seed: 2,
            ..RunConfig::default()
        };
        client_run(&source, &config, &mut t).unwrap();
        assert_eq!(server.audit_log().len(), 1);
    }
}
