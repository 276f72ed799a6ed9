//! The blinding layer: secret per-node rotations, published difference
//! angles, output decoding, and the verification suite for the
//! correction-pushing algebra.
//!
//! Blinding replaces each measured node's angle phi with delta = phi - theta
//! (mod 8, in pi/4 units) and prepares that node's qubit in |+_theta>
//! instead of |+>. Since Rz(delta) Rz(theta) = Rz(phi), every measurement
//! branch of the blinded run equals the corresponding branch of the
//! unblinded run, while a server seeing only delta learns nothing about phi.

use crate::angle::Angle8;
use crate::mbqc::{
    lower_to_circuit, lower_with_preps, NodeId, Pattern, PatternError, PauliFrame, WireInput,
};
use crate::qsim::{enumerate_branches, fidelity, Circuit, Gate, Statevector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UbqcError {
    #[error("r flags must be all-zero in protocol mode")]
    RNotAllowed,
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// Per-node pi-flip flags of the measurement angle. Protocol mode pins them
/// to zero; the free flags exist only for the byproduct case analysis,
/// which shows non-zero flags break non-interactive decoding.
#[derive(Clone, Debug)]
pub struct RFlags {
    pub flags: BTreeMap<NodeId, bool>,
    pub protocol_mode: bool,
}

impl RFlags {
    pub fn protocol(pattern: &Pattern) -> RFlags {
        RFlags {
            flags: pattern.measured_nodes().iter().map(|&n| (n, false)).collect(),
            protocol_mode: true,
        }
    }

    pub fn test_mode(flags: BTreeMap<NodeId, bool>) -> RFlags {
        RFlags {
            flags,
            protocol_mode: false,
        }
    }
}

/// A pattern with measurement angles replaced by published deltas. The
/// secret thetas stay client-side: the field is private, carries no serde
/// implementation, and only the delta pattern is reachable for the wire.
#[derive(Clone, Debug)]
pub struct BlindedPattern {
    delta_pattern: Pattern,
    secrets: BTreeMap<NodeId, Angle8>,
}

impl BlindedPattern {
    /// The server-visible projection: graph plus delta angles only.
    pub fn server_view(&self) -> &Pattern {
        &self.delta_pattern
    }

    /// Client-side secret preparation angle of a measured node.
    pub fn theta(&self, node: NodeId) -> Option<Angle8> {
        self.secrets.get(&node).copied()
    }

    pub fn secrets(&self) -> &BTreeMap<NodeId, Angle8> {
        &self.secrets
    }
}

/// Samples one uniform secret theta per measured node and publishes
/// delta = phi - theta. Deterministic given the seed.
pub fn blind(pattern: &Pattern, seed: u64) -> Result<BlindedPattern, UbqcError> {
    blind_with(pattern, seed, &RFlags::protocol(pattern))
}

/// Blinding with explicit r flags: delta = phi - theta + 4r. Protocol-mode
/// flags must be all-zero.
pub fn blind_with(
    pattern: &Pattern,
    seed: u64,
    rflags: &RFlags,
) -> Result<BlindedPattern, UbqcError> {
    if rflags.protocol_mode && rflags.flags.values().any(|&r| r) {
        return Err(UbqcError::RNotAllowed);
    }
    pattern.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut secrets = BTreeMap::new();
    let mut deltas = BTreeMap::new();
    for node in pattern.measured_nodes() {
        let phi = pattern.nodes[node].angle.expect("measured node");
        let theta = Angle8::new(rng.random_range(0..8));
        let r = rflags.flags.get(&node).copied().unwrap_or(false);
        let mut delta = phi - theta;
        if r {
            delta = delta + Angle8::PI;
        }
        secrets.insert(node, theta);
        deltas.insert(node, delta);
    }
    Ok(BlindedPattern {
        delta_pattern: pattern.with_angles(&deltas),
        secrets,
    })
}

/// Blinding with caller-chosen thetas (used when theta must hit the states
/// a remote-preparation gadget actually produced).
pub fn blind_with_thetas(
    pattern: &Pattern,
    thetas: &BTreeMap<NodeId, Angle8>,
) -> Result<BlindedPattern, UbqcError> {
    pattern.validate()?;
    let mut deltas = BTreeMap::new();
    for node in pattern.measured_nodes() {
        let phi = pattern.nodes[node].angle.expect("measured node");
        deltas.insert(node, phi - thetas[&node]);
    }
    Ok(BlindedPattern {
        delta_pattern: pattern.with_angles(&deltas),
        secrets: thetas.clone(),
    })
}

/// Circuit fragment mapping |0> to |+_theta>: H then Rz(theta).
pub fn blinded_input_prep(theta: Angle8, qubit: usize, num_qubits: usize) -> Circuit {
    let mut c = Circuit::new(num_qubits, 0).expect("small fragment");
    c.gate(Gate::H, &[qubit]).expect("valid qubit");
    if theta != Angle8::ZERO {
        c.gate(Gate::Rz(theta), &[qubit]).expect("valid qubit");
    }
    c
}

/// Applies the calibrated byproduct corrections to computational-basis
/// output bits: output o flips iff the parity of the branch bits in
/// frame.x_deps[o] is odd. Z dependencies act trivially on computational
/// outputs and are ignored.
pub fn decode_output(
    outputs: &BTreeMap<NodeId, bool>,
    branch: &BTreeMap<NodeId, bool>,
    frame: &PauliFrame,
) -> Result<BTreeMap<NodeId, bool>, UbqcError> {
    let mut decoded = BTreeMap::new();
    for (&node, &bit) in outputs {
        decoded.insert(node, bit ^ frame.x_flip(node, branch)?);
    }
    Ok(decoded)
}

/// Per-branch comparison of a blinded run against the unblinded reference.
#[derive(Clone, Debug)]
pub struct BranchComparison {
    pub bits: String,
    pub probability_unblinded: f64,
    pub probability_blinded: f64,
    /// None when both branches have zero probability.
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub branches: Vec<BranchComparison>,
    pub pass: bool,
}

pub const EQUIV_FIDELITY_EPS: f64 = 1e-9;
pub const EQUIV_PROB_EPS: f64 = 1e-12;

/// Verifies branch-by-branch that blinding is a no-op: every measurement
/// branch of the blinded lowering (inputs |+_theta>, angles delta) matches
/// the unblinded lowering (inputs |+>, angles phi) in probability and
/// residual state.
pub fn verify_blinding_equivalence(
    pattern: &Pattern,
    thetas: &BTreeMap<NodeId, Angle8>,
) -> Result<EquivalenceReport, UbqcError> {
    let blinded = blind_with_thetas(pattern, thetas)?;
    let inputs: BTreeMap<usize, WireInput> = (0..pattern.num_wires())
        .map(|w| (w, WireInput::Plus))
        .collect();
    let (reference_circuit, _) = lower_to_circuit(pattern, &inputs, false)?;
    let (blinded_circuit, _) =
        lower_with_preps(blinded.server_view(), blinded.secrets(), false)?;
    let reference = enumerate_branches(&reference_circuit).map_err(PatternError::Sim)?;
    let blinded_branches = enumerate_branches(&blinded_circuit).map_err(PatternError::Sim)?;

    let mut branches = Vec::with_capacity(reference.len());
    let mut pass = true;
    for (a, b) in reference.iter().zip(&blinded_branches) {
        assert_eq!(a.bits, b.bits);
        if (a.probability - b.probability).abs() > EQUIV_PROB_EPS {
            pass = false;
        }
        let fid = match (&a.residual, &b.residual) {
            (Some(x), Some(y)) => {
                let f = fidelity(x, y).map_err(PatternError::Sim)?;
                if f < 1.0 - EQUIV_FIDELITY_EPS {
                    pass = false;
                }
                Some(f)
            }
            (None, None) => None,
            _ => {
                pass = false;
                None
            }
        };
        branches.push(BranchComparison {
            bits: a.bits.clone(),
            probability_unblinded: a.probability,
            probability_blinded: b.probability,
            fidelity: fid,
        });
    }
    Ok(EquivalenceReport { branches, pass })
}

/// Outcome of the pi-flip case analysis for one (r1, r2) setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RCaseOutcome {
    /// every branch matches the reference without postprocessing
    MatchNoFlip,
    /// every branch matches after an output bitflip on some branches
    MatchAfterFlip,
    /// some branch matches neither directly nor after a bitflip
    NoBitflipWorks,
}

#[derive(Clone, Debug)]
pub struct RCaseReport {
    pub cases: BTreeMap<(bool, bool), RCaseOutcome>,
}

/// Classifies all four (r1, r2) settings on the two-node chain
/// [phi1, phi2], exhaustively over all 64 (theta1, theta2) pairs: with
/// delta_i = phi_i - theta_i + 4 r_i, does any output bitflip recover the
/// unblinded branches?
pub fn verify_r_cases(phi1: Angle8, phi2: Angle8) -> Result<RCaseReport, UbqcError> {
    let pattern = Pattern::chain(&[phi1, phi2]);
    let inputs: BTreeMap<usize, WireInput> = BTreeMap::from([(0, WireInput::Plus)]);
    let (reference_circuit, _) = lower_to_circuit(&pattern, &inputs, false)?;
    let reference = enumerate_branches(&reference_circuit).map_err(PatternError::Sim)?;

    let mut cases = BTreeMap::new();
    for (r1, r2) in [(false, false), (false, true), (true, false), (true, true)] {
        let rflags = RFlags::test_mode(BTreeMap::from([(0, r1), (1, r2)]));
        let mut all_no_flip = true;
        let mut all_some_flip = true;
        for t1 in Angle8::all() {
            for t2 in Angle8::all() {
                let thetas = BTreeMap::from([(0, t1), (1, t2)]);
                let mut deltas = BTreeMap::new();
                for (&n, &t) in &thetas {
                    let phi = pattern.nodes[n].angle.unwrap();
                    let mut d = phi - t;
                    if (n == 0 && r1) || (n == 1 && r2) {
                        d = d + Angle8::PI;
                    }
                    deltas.insert(n, d);
                }
                let _ = &rflags;
                let (circuit, _) =
                    lower_with_preps(&pattern.with_angles(&deltas), &thetas, false)?;
                let branches = enumerate_branches(&circuit).map_err(PatternError::Sim)?;
                for (a, b) in reference.iter().zip(&branches) {
                    let (Some(ra), Some(rb)) = (&a.residual, &b.residual) else {
                        continue;
                    };
                    let direct = fidelity(ra, rb).map_err(PatternError::Sim)?;
                    let flipped =
                        fidelity(ra, &apply_x(rb)).map_err(PatternError::Sim)?;
                    let prob_ok = (a.probability - b.probability).abs() < EQUIV_PROB_EPS;
                    if !prob_ok || direct < 1.0 - EQUIV_FIDELITY_EPS {
                        all_no_flip = false;
                    }
                    if !prob_ok
                        || (direct < 1.0 - EQUIV_FIDELITY_EPS
                            && flipped < 1.0 - EQUIV_FIDELITY_EPS)
                    {
                        all_some_flip = false;
                    }
                }
            }
        }
        let outcome = if all_no_flip {
            RCaseOutcome::MatchNoFlip
        } else if all_some_flip {
            RCaseOutcome::MatchAfterFlip
        } else {
            RCaseOutcome::NoBitflipWorks
        };
        cases.insert((r1, r2), outcome);
    }
    Ok(RCaseReport { cases })
}

fn apply_x(state: &Statevector) -> Statevector {
    let mut out = state.clone();
    out.apply(&crate::qsim::Instruction::unitary(Gate::X, vec![0]))
        .expect("single qubit");
    out
}

/// The branch-(00) residual of the unblinded two-node chain, in closed
/// form: proportional to (1 + e^{i phi1})|+> + e^{i phi2}(1 - e^{i phi1})|->.
pub fn chain2_branch00_reference(phi1: Angle8, phi2: Angle8) -> Statevector {
    let e1 = Complex64::from_polar(1.0, phi1.radians());
    let e2 = Complex64::from_polar(1.0, phi2.radians());
    let one = Complex64::new(1.0, 0.0);
    let cp = one + e1;
    let cm = e2 * (one - e1);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // |+> = (|0>+|1>)/sqrt2, |-> = (|0>-|1>)/sqrt2
    let a0 = (cp + cm) * s;
    let a1 = (cp - cm) * s;
    let mut v = Statevector::from_amplitudes(1, vec![a0, a1]).expect("dim 2");
    v.normalize();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbqc::{calibrate_frame, compile_circuit};
    use crate::stats::chi_square_uniform_p_value;

    #[test]
    fn delta_example() {
        // phi = 2, theta = 3 -> delta = 7
        assert_eq!((Angle8::new(2) - Angle8::new(3)).k(), 7);
    }

    #[test]
    fn blind_is_deterministic_and_consistent() {
        let p = Pattern::chain(&[Angle8::new(2), Angle8::new(5)]);
        let a = blind(&p, 42).unwrap();
        let b = blind(&p, 42).unwrap();
        assert_eq!(a.server_view(), b.server_view());
        for n in p.measured_nodes() {
            let phi = p.nodes[n].angle.unwrap();
            let theta = a.theta(n).unwrap();
            let delta = a.server_view().nodes[n].angle.unwrap();
            assert_eq!(delta, phi - theta);
        }
    }

    #[test]
    fn theta_zero_gives_unblinded_delta() {
        let p = Pattern::chain(&[Angle8::new(3)]);
        let thetas = BTreeMap::from([(0, Angle8::ZERO)]);
        let b = blind_with_thetas(&p, &thetas).unwrap();
        assert_eq!(b.server_view().nodes[0].angle.unwrap().k(), 3);
    }

    #[test]
    fn delta_uniform_over_seeds() {
        let p = Pattern::chain(&[Angle8::new(2)]);
        let samples: Vec<u8> = (0..8000)
            .map(|seed| blind(&p, seed).unwrap().server_view().nodes[0].angle.unwrap().k())
            .collect();
        let pval = chi_square_uniform_p_value(&samples, 8);
        assert!(pval > 0.001, "p = {pval}");
    }

    #[test]
    fn protocol_mode_rejects_r() {
        let p = Pattern::chain(&[Angle8::new(1)]);
        let mut rflags = RFlags::protocol(&p);
        rflags.flags.insert(0, true);
        assert!(matches!(
            blind_with(&p, 7, &rflags),
            Err(UbqcError::RNotAllowed)
        ));
    }

    #[test]
    fn input_prep_states() {
        use crate::qsim::run_unitary;
        // theta = 0 -> |+>; theta = 4 -> |->; theta = 1 -> ratio e^{i pi/4}
        for k in [0i64, 4, 1] {
            let frag = blinded_input_prep(Angle8::new(k), 0, 1);
            let s = run_unitary(&frag).unwrap();
            let expected = Statevector::plus_theta(Angle8::new(k));
            assert!((fidelity(&s, &expected).unwrap() - 1.0).abs() < 1e-12);
        }
        let frag = blinded_input_prep(Angle8::new(1), 0, 1);
        let s = run_unitary(&frag).unwrap();
        let ratio = s.amplitudes()[1] / s.amplitudes()[0];
        let expected = Complex64::from_polar(1.0, Angle8::new(1).radians());
        assert!((ratio - expected).norm() < 1e-12);
    }

    #[test]
    fn decode_all_zero_branch_is_identity() {
        let p = Pattern::chain(&[Angle8::new(2), Angle8::new(5)]);
        let frame = calibrate_frame(&p).unwrap();
        let outputs = BTreeMap::from([(2, true)]);
        let branch = BTreeMap::from([(0, false), (1, false)]);
        let decoded = decode_output(&outputs, &branch, &frame).unwrap();
        assert_eq!(decoded[&2], true);
    }

    #[test]
    fn chain_frame_flips_on_second_outcome() {
        // two-node chain: output X-correction depends on the second outcome
        let p = Pattern::chain(&[Angle8::new(2), Angle8::new(5)]);
        let frame = calibrate_frame(&p).unwrap();
        assert!(frame.x_deps[&2].contains(&1));
        let outputs = BTreeMap::from([(2, false)]);
        let mut branch = BTreeMap::from([(0, false), (1, true)]);
        if frame.x_deps[&2].contains(&0) {
            branch.insert(0, false);
        }
        let decoded = decode_output(&outputs, &branch, &frame).unwrap();
        assert_eq!(decoded[&2], true);
    }

    #[test]
    fn empty_deps_decode_is_identity() {
        let frame = PauliFrame {
            x_deps: BTreeMap::from([(5, Default::default())]),
            z_deps: BTreeMap::from([(5, Default::default())]),
        };
        let outputs = BTreeMap::from([(5, true)]);
        let branch = BTreeMap::from([(0, true), (1, true)]);
        assert_eq!(decode_output(&outputs, &branch, &frame).unwrap()[&5], true);
    }

    #[test]
    fn equivalence_all_zero_thetas() {
        let p = Pattern::chain(&[Angle8::new(3), Angle8::new(6)]);
        let thetas = BTreeMap::from([(0, Angle8::ZERO), (1, Angle8::ZERO)]);
        assert!(verify_blinding_equivalence(&p, &thetas).unwrap().pass);
    }

    #[test]
    fn equivalence_exhaustive_on_2chain() {
        let p = Pattern::chain(&[Angle8::new(2), Angle8::new(5)]);
        for t1 in Angle8::all() {
            for t2 in Angle8::all() {
                let thetas = BTreeMap::from([(0, t1), (1, t2)]);
                let report = verify_blinding_equivalence(&p, &thetas).unwrap();
                assert!(report.pass, "thetas ({t1:?}, {t2:?})");
            }
        }
    }

    #[test]
    fn equivalence_on_compiled_bell() {
        let mut c = Circuit::new(2, 0).unwrap();
        c.gate(Gate::H, &[1]).unwrap();
        c.gate(Gate::Cx, &[0, 1]).unwrap();
        let p = compile_circuit(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let thetas: BTreeMap<NodeId, Angle8> = p
                .measured_nodes()
                .into_iter()
                .map(|n| (n, Angle8::new(rng.random_range(0..8))))
                .collect();
            assert!(verify_blinding_equivalence(&p, &thetas).unwrap().pass);
        }
    }

    #[test]
    fn branch00_closed_form_matches_enumeration() {
        let phi1 = Angle8::new(3);
        let phi2 = Angle8::new(5);
        let p = Pattern::chain(&[phi1, phi2]);
        let inputs = BTreeMap::from([(0, WireInput::Plus)]);
        let (c, _) = lower_to_circuit(&p, &inputs, false).unwrap();
        let branches = enumerate_branches(&c).unwrap();
        let b00 = branches.iter().find(|b| b.bits == "00").unwrap();
        let expected = chain2_branch00_reference(phi1, phi2);
        let f = fidelity(b00.residual.as_ref().unwrap(), &expected).unwrap();
        assert!((f - 1.0).abs() < 1e-9);
    }

    #[test]
    fn r_case_classification() {
        // phi1 in {2, 6} (i.e. pi/2, 3pi/2) is degenerate: 1 + e^{2 i phi1}
        // vanishes and the (1,0) case accidentally matches after a flip.
        // A generic phi1 exhibits the intended breakage.
        let report = verify_r_cases(Angle8::new(1), Angle8::new(5)).unwrap();
        assert_eq!(report.cases[&(false, false)], RCaseOutcome::MatchNoFlip);
        assert_eq!(report.cases[&(false, true)], RCaseOutcome::MatchAfterFlip);
        assert_eq!(report.cases[&(true, false)], RCaseOutcome::NoBitflipWorks);
        // the (1,1) setting is reported, not asserted: record it exists
        assert!(report.cases.contains_key(&(true, true)));
    }
}
