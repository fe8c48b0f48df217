//! The polarization-path Hardy construction, the qubit-qutrit KCBS
//! activation, and the flagged qutrit Werner state.

use std::f64::consts::PI;

use thiserror::Error;

use crate::optimize::{multistart_minimize, SearchOptions};
use crate::qmath::{
    antisymmetric_projector, c, hermitian_eigenvalues, kron, re, ComplexMatrix, DensityOperator,
    Ket, QmathError, C64, EPS_NUM,
};
use crate::scenario::{
    encode, EmpiricalModel, QuantumMeasurement, QuantumParty, QuantumScenario, ScenarioError,
};

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("parameter {name} = {value} outside {range}")]
    Parameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("conditioning branch has probability {0:e}")]
    ZeroBranch(f64),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Qmath(#[from] QmathError),
}

pub type Result<T> = std::result::Result<T, ConstructionError>;

fn sqrt5() -> f64 {
    5f64.sqrt()
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ConstructionError::Parameter {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

fn complement(d: usize, p: &ComplexMatrix) -> ComplexMatrix {
    &ComplexMatrix::identity(d) - p
}

// ---------------------------------------------------------------------------
// polarization-path

pub const PPATH_ALICE: [&str; 2] = ["X2", "Y2"];
pub const PPATH_BOB: [&str; 4] = ["X1", "Y1", "X1'", "Y1'"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    X,
    Y,
}

/// Outcome-indexed kets of the adaptive X and Y bases.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitBases {
    pub x: [Ket; 2],
    pub y: [Ket; 2],
}

impl QubitBases {
    pub fn ket(&self, basis: Basis, outcome: usize) -> &Ket {
        match basis {
            Basis::X => &self.x[outcome],
            Basis::Y => &self.y[outcome],
        }
    }
}

/// (basis, outcome) for Bob's polarization, Bob's path and Alice, in that order.
pub type PpathEvent = [(Basis, usize); 3];

/// Target event x₁ = x₁' = x₂ = 1.
pub const HARDY_TARGET: PpathEvent = [(Basis::X, 1), (Basis::X, 1), (Basis::X, 1)];

/// The six zero-probability events.
pub const HARDY_EVENTS: [PpathEvent; 6] = [
    [(Basis::X, 1), (Basis::Y, 1), (Basis::Y, 1)],
    [(Basis::Y, 1), (Basis::X, 1), (Basis::Y, 1)],
    [(Basis::Y, 1), (Basis::Y, 1), (Basis::X, 1)],
    [(Basis::X, 1), (Basis::Y, 0), (Basis::Y, 0)],
    [(Basis::Y, 0), (Basis::X, 1), (Basis::Y, 0)],
    [(Basis::Y, 0), (Basis::Y, 0), (Basis::X, 1)],
];

#[derive(Clone, Debug)]
pub struct PpathConstruction {
    pub h0: f64,
    pub h1: f64,
    pub phi: f64,
    pub bases: QubitBases,
    /// Ordered Alice ⊗ Bob-polarization ⊗ Bob-path; basis states H ↦ 0, V ↦ 1,
    /// path +1 ↦ 0, path −1 ↦ 1.
    pub state: Ket,
    pub quantum: QuantumScenario,
}

pub fn ppath_bases(h0: f64, h1: f64, phi: f64) -> QubitBases {
    let e = C64::from_polar(1.0, phi / 3.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let i = c(0.0, 1.0);
    QubitBases {
        x: [
            Ket::normalized(vec![re(h0), -e * h1]),
            Ket::normalized(vec![re(h1), e * h0]),
        ],
        y: [
            Ket::normalized(vec![re(s), -i * e * s]),
            Ket::normalized(vec![re(s), i * e * s]),
        ],
    }
}

pub fn build_ppath(h0: f64, phi: f64) -> Result<PpathConstruction> {
    check_unit("h0", h0)?;
    if !phi.is_finite() {
        return Err(ConstructionError::Parameter {
            name: "phi",
            value: phi,
            range: "finite reals",
        });
    }
    let h1 = (1.0 - h0 * h0).max(0.0).sqrt();
    let bases = ppath_bases(h0, h1, phi);
    let mut amps = vec![C64::default(); 8];
    amps[0] = re(h0);
    amps[7] = C64::from_polar(h1, phi);
    let state = Ket::new(amps)?;

    let id2 = ComplexMatrix::identity(2);
    let pvm = |b: Basis| -> Vec<ComplexMatrix> {
        (0..2).map(|o| bases.ket(b, o).projector()).collect()
    };
    let alice = QuantumParty {
        name: "A".into(),
        dim: 2,
        measurements: vec![
            QuantumMeasurement::indexed("X2", pvm(Basis::X)),
            QuantumMeasurement::indexed("Y2", pvm(Basis::Y)),
        ],
        contexts: vec![vec!["X2".into()], vec!["Y2".into()]],
    };
    let pol = |b: Basis| pvm(b).iter().map(|p| kron(p, &id2)).collect::<Vec<_>>();
    let path = |b: Basis| pvm(b).iter().map(|p| kron(&id2, p)).collect::<Vec<_>>();
    let bob = QuantumParty {
        name: "B".into(),
        dim: 4,
        measurements: vec![
            QuantumMeasurement::indexed("X1", pol(Basis::X)),
            QuantumMeasurement::indexed("Y1", pol(Basis::Y)),
            QuantumMeasurement::indexed("X1'", path(Basis::X)),
            QuantumMeasurement::indexed("Y1'", path(Basis::Y)),
        ],
        contexts: vec![
            vec!["X1".into(), "X1'".into()],
            vec!["X1".into(), "Y1'".into()],
            vec!["Y1".into(), "X1'".into()],
            vec!["Y1".into(), "Y1'".into()],
        ],
    };
    let tested = crate::scenario::product_family(&[2, 4]);
    let quantum = QuantumScenario::new(vec![alice, bob], tested)?;
    Ok(PpathConstruction {
        h0,
        h1,
        phi,
        bases,
        state,
        quantum,
    })
}

impl PpathConstruction {
    pub fn density(&self) -> DensityOperator {
        DensityOperator::from_ket(&self.state, vec![2, 4]).expect("normalized ket")
    }

    pub fn model(&self) -> Result<EmpiricalModel> {
        Ok(self.quantum.born_table(&self.density())?)
    }

    /// ⟨pol|⟨path|⟨alice| applied to the two-term state, summed term by term.
    pub fn amplitude(&self, event: &PpathEvent) -> C64 {
        let [b, p, a] = event.map(|(basis, o)| self.bases.ket(basis, o).amplitudes().to_vec());
        let s = self.state.amplitudes();
        s[0] * (a[0] * b[0] * p[0]).conj() + s[7] * (a[1] * b[1] * p[1]).conj()
    }

    pub fn event_probability(&self, event: &PpathEvent) -> f64 {
        self.amplitude(event).norm_sqr()
    }
}

/// The six Hardy zero-event probabilities.
pub fn hardy_zero_events(c: &PpathConstruction) -> [f64; 6] {
    HARDY_EVENTS.map(|e| c.event_probability(&e))
}

/// W_H: target probability minus the six zero events.
pub fn hardy_witness(c: &PpathConstruction) -> f64 {
    c.event_probability(&HARDY_TARGET) - hardy_zero_events(c).iter().sum::<f64>()
}

/// W_H read off an empirical ppath table.
pub fn hardy_witness_from_model(model: &EmpiricalModel) -> Option<f64> {
    let lookup = |event: &PpathEvent| -> Option<f64> {
        let s = model.scenario();
        let alice_id = match event[2].0 {
            Basis::X => "X2",
            Basis::Y => "Y2",
        };
        let pol_id = match event[0].0 {
            Basis::X => "X1",
            Basis::Y => "Y1",
        };
        let path_id = match event[1].0 {
            Basis::X => "X1'",
            Basis::Y => "Y1'",
        };
        let (_, am) = s.find_measurement(alice_id)?;
        let (_, pm) = s.find_measurement(pol_id)?;
        let (_, qm) = s.find_measurement(path_id)?;
        let actx = s.parties[0].contexts.iter().position(|c| c.members == [am])?;
        let bctx = s.parties[1].contexts.iter().position(|c| c.members == [pm, qm])?;
        let k = s.tested.iter().position(|t| t == &[actx, bctx])?;
        let t = encode(&[event[2].1, event[0].1, event[1].1], &s.context_radices(k));
        Some(model.table(k)[t])
    };
    let mut w = lookup(&HARDY_TARGET)?;
    for e in &HARDY_EVENTS {
        w -= lookup(e)?;
    }
    Some(w)
}

/// Largest target indicator over the 2⁶ deterministic assignments that avoid
/// every enabled zero event.
pub fn hardy_nchv_bound(enabled: &[bool; 6]) -> f64 {
    // assignment digits: x1, y1, x1', y1', x2, y2
    let value = |bits: &[usize; 6], (basis, o): (Basis, usize), offset: usize| -> bool {
        let v = match basis {
            Basis::X => bits[offset],
            Basis::Y => bits[offset + 1],
        };
        v == o
    };
    let occurs = |bits: &[usize; 6], e: &PpathEvent| {
        value(bits, e[0], 0) && value(bits, e[1], 2) && value(bits, e[2], 4)
    };
    let mut best = 0.0f64;
    for idx in 0..64usize {
        let bits: [usize; 6] = std::array::from_fn(|k| (idx >> (5 - k)) & 1);
        let blocked = HARDY_EVENTS
            .iter()
            .zip(enabled)
            .any(|(e, &on)| on && occurs(&bits, e));
        if blocked {
            continue;
        }
        if occurs(&bits, &HARDY_TARGET) {
            best = 1.0;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// KCBS

pub fn a_kcbs() -> f64 {
    0.5 + sqrt5() / 10.0
}

pub fn c_kcbs() -> f64 {
    a_kcbs().sqrt()
}

/// Real components of the five KCBS vectors.
pub fn kcbs_vectors() -> [[f64; 3]; 5] {
    let cos2 = 1.0 / sqrt5();
    let (ct, st) = (cos2.sqrt(), (1.0 - cos2).sqrt());
    std::array::from_fn(|j| {
        let ang = 4.0 * PI * j as f64 / 5.0;
        [ct, st * ang.cos(), st * ang.sin()]
    })
}

pub fn kcbs_projectors() -> Vec<ComplexMatrix> {
    kcbs_vectors()
        .iter()
        .map(|v| Ket::normalized(v.iter().map(|&x| re(x)).collect()).projector())
        .collect()
}

/// B_j = I − 2P_j
pub fn kcbs_observables() -> Vec<ComplexMatrix> {
    let id = ComplexMatrix::identity(3);
    kcbs_projectors()
        .iter()
        .map(|p| &id - &p.scale_real(2.0))
        .collect()
}

/// D = Σ_j B_j B_{j+1}
pub fn kcbs_operator() -> ComplexMatrix {
    let b = kcbs_observables();
    (0..5).fold(ComplexMatrix::zeros(3, 3), |acc, j| {
        &acc + &(&b[j] * &b[(j + 1) % 5])
    })
}

/// Bob's five binary KCBS measurements with adjacent-pair contexts. Outcome 0
/// is B_j = +1 (effect I − P_j), outcome 1 is B_j = −1 (effect P_j).
pub fn kcbs_party(name: &str) -> QuantumParty {
    let p = kcbs_projectors();
    QuantumParty {
        name: name.into(),
        dim: 3,
        measurements: (0..5)
            .map(|j| {
                QuantumMeasurement::new(
                    format!("B{j}"),
                    vec![complement(3, &p[j]), p[j].clone()],
                    vec![1.0, -1.0],
                )
            })
            .collect(),
        contexts: (0..5)
            .map(|j| vec![format!("B{j}"), format!("B{}", (j + 1) % 5)])
            .collect(),
    }
}

/// x_j = ⟨B_j B_{j+1}⟩ on a qutrit state.
pub fn kcbs_correlators(rho: &DensityOperator) -> [f64; 5] {
    let b = kcbs_observables();
    std::array::from_fn(|j| rho.expectation(&(&b[j] * &b[(j + 1) % 5])))
}

#[derive(Clone, Debug)]
pub struct KcbsConstruction {
    pub c0: f64,
    pub c1: f64,
    pub a: f64,
    /// c₀|00⟩ + c₁|11⟩ on qubit ⊗ qutrit.
    pub state: Ket,
    pub d: ComplexMatrix,
    pub quantum: QuantumScenario,
}

pub fn build_kcbs(c0: f64) -> Result<KcbsConstruction> {
    check_unit("c0", c0)?;
    let c1 = (1.0 - c0 * c0).max(0.0).sqrt();
    let mut amps = vec![C64::default(); 6];
    amps[0] = re(c0);
    amps[4] = re(c1);
    let state = Ket::new(amps)?;
    let alice = QuantumParty {
        name: "A".into(),
        dim: 2,
        measurements: vec![QuantumMeasurement::new(
            "A1",
            vec![Ket::basis(2, 0).projector(), Ket::basis(2, 1).projector()],
            vec![1.0, -1.0],
        )],
        contexts: vec![vec!["A1".into()]],
    };
    let tested = (0..5).map(|j| vec![0, j]).collect();
    let quantum = QuantumScenario::new(vec![alice, kcbs_party("B")], tested)?;
    Ok(KcbsConstruction {
        c0,
        c1,
        a: c0 * c0,
        state,
        d: kcbs_operator(),
        quantum,
    })
}

impl KcbsConstruction {
    pub fn density(&self) -> DensityOperator {
        DensityOperator::from_ket(&self.state, vec![2, 3]).expect("normalized ket")
    }

    pub fn model(&self) -> Result<EmpiricalModel> {
        Ok(self.quantum.born_table(&self.density())?)
    }

    pub fn bob_marginal(&self) -> DensityOperator {
        self.density().partial_trace(1).expect("bipartite")
    }
}

#[derive(Debug)]
pub struct KcbsValues {
    pub x: [f64; 5],
    pub d_uncond: f64,
    /// P(A₁ = +1)
    pub branch_probability: f64,
    /// ⟨D⟩ on Bob's state conditioned on A₁ = +1.
    pub d_cond: Result<f64>,
    pub a_kcbs: f64,
    pub c_kcbs: f64,
}

pub fn kcbs_values(c: &KcbsConstruction) -> KcbsValues {
    let rho = c.density();
    let rho_b = c.bob_marginal();
    let up = Ket::basis(2, 0).projector();
    let branch_probability = rho.expectation(&kron(&up, &ComplexMatrix::identity(3)));
    let d_cond = c
        .quantum
        .postselect_state(&rho, "A1", 0)
        .map(|(_, cond)| cond.expectation(&c.d))
        .map_err(|e| match e {
            ScenarioError::ZeroBranch(p) => ConstructionError::ZeroBranch(p),
            other => other.into(),
        });
    KcbsValues {
        x: kcbs_correlators(&rho_b),
        d_uncond: rho_b.expectation(&c.d),
        branch_probability,
        d_cond,
        a_kcbs: a_kcbs(),
        c_kcbs: c_kcbs(),
    }
}

/// Solves ⟨D⟩_uncond(a) = −3 by bisection on operator evaluations.
/// Returns (a, c₀).
pub fn kcbs_threshold_search() -> (f64, f64) {
    let g = |a: f64| {
        let c = build_kcbs(a.sqrt()).expect("a in range");
        c.bob_marginal().expectation(&c.d) + 3.0
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    debug_assert!(g(lo) > 0.0 && g(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    (a, a.sqrt())
}

/// W = 3⟨A₁⟩ + ⟨(1 + A₁) ⊗ D⟩ from the operator expression.
pub fn witness_w(c: &KcbsConstruction) -> f64 {
    let sz = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
    let id2 = ComplexMatrix::identity(2);
    let id3 = ComplexMatrix::identity(3);
    let rho = c.density();
    3.0 * rho.expectation(&kron(&sz, &id3)) + rho.expectation(&kron(&(&id2 + &sz), &c.d))
}

/// Closed forms of the KCBS block as functions of a = c₀².
pub mod kcbs_closed {
    use super::sqrt5;

    pub fn d_uncond(a: f64) -> f64 {
        a * (5.0 - 4.0 * sqrt5()) + (1.0 - a) * (2.0 * sqrt5() - 5.0)
    }

    pub fn d_cond() -> f64 {
        5.0 - 4.0 * sqrt5()
    }

    pub fn witness(a: f64) -> f64 {
        -3.0 - 8.0 * (sqrt5() - 2.0) * a
    }

    pub fn correlators(a: f64) -> [f64; 5] {
        let s = sqrt5();
        let x04 = a * (2.5 - 1.1 * s) - 1.5 + 0.3 * s;
        let x13 = a * (1.5 - 1.1 * s) - 0.5 + 0.3 * s;
        let x2 = a * (2.0 - 1.6 * s) - 1.0 + 0.8 * s;
        [x04, x13, x2, x13, x04]
    }
}

// ---------------------------------------------------------------------------
// auxiliary generalized-Bell witness and CHSH

pub fn aux_witness_closed_form(c0: f64) -> f64 {
    let s = sqrt5();
    let q = 1.0 - c0 * c0;
    (5.0 - 5.0 * s
        - (5.0 - s) * c0 * c0
        - 4.0 * 5f64.powf(0.75) * c0 * ((2.0 * q).sqrt() + ((3.0 - s) * q).sqrt()))
        / 10.0
}

/// Bob's two effective observables (B₂ + B₄B₀, B₂ − B₄B₀); indices mod 5.
fn aux_bob_operators() -> [ComplexMatrix; 2] {
    let b = kcbs_observables();
    let b45 = &b[4] * &b[0];
    [&b[2] + &b45, &b[2] - &b45]
}

/// Reduced 2×2 forms R with ⟨A ⊗ M⟩ = Re Σ A_ij R_ij for c₀|00⟩ + c₁|11⟩.
fn reduced_forms(psi: &[C64], dim_b: usize, ms: &[ComplexMatrix]) -> Vec<[[C64; 2]; 2]> {
    ms.iter()
        .map(|m| {
            let mut r = [[C64::default(); 2]; 2];
            for (i, row) in r.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    for k in 0..dim_b {
                        for l in 0..dim_b {
                            *v += psi[i * dim_b + k].conj() * m[(k, l)] * psi[j * dim_b + l];
                        }
                    }
                }
            }
            r
        })
        .collect()
}

/// Qubit observable n·σ with Bloch angles (θ, φ).
fn bloch_observable(theta: f64, phi: f64) -> [[C64; 2]; 2] {
    let (nx, ny, nz) = (theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
    [[re(nz), c(nx, -ny)], [c(nx, ny), re(-nz)]]
}

fn pair_expectation(a: &[[C64; 2]; 2], r: &[[C64; 2]; 2]) -> f64 {
    let mut s = C64::default();
    for i in 0..2 {
        for j in 0..2 {
            s += a[i][j] * r[i][j];
        }
    }
    s.re
}

/// Quantum value of the auxiliary expression for Alice's Bloch angles
/// (θ₁, φ₁, θ₂, φ₂).
pub fn aux_witness_value(c0: f64, angles: &[f64]) -> f64 {
    let c1 = (1.0 - c0 * c0).max(0.0).sqrt();
    let mut psi = vec![C64::default(); 6];
    psi[0] = re(c0);
    psi[4] = re(c1);
    let forms = reduced_forms(&psi, 3, &aux_bob_operators());
    aux_value_from_forms(&forms, angles)
}

fn aux_value_from_forms(forms: &[[[C64; 2]; 2]], angles: &[f64]) -> f64 {
    let a1 = bloch_observable(angles[0], angles[1]);
    let a2 = bloch_observable(angles[2], angles[3]);
    pair_expectation(&a1, &forms[0]) + pair_expectation(&a2, &forms[1])
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct AuxWitness {
    pub c0: f64,
    pub closed_form: f64,
    pub optimized: f64,
    pub difference: f64,
    /// Whether the two values agree within 1e−6.
    pub agree: bool,
    pub alice_angles: Vec<f64>,
}

pub fn aux_witness_f(c0: f64) -> Result<AuxWitness> {
    check_unit("c0", c0)?;
    let c1 = (1.0 - c0 * c0).max(0.0).sqrt();
    let mut psi = vec![C64::default(); 6];
    psi[0] = re(c0);
    psi[4] = re(c1);
    let forms = reduced_forms(&psi, 3, &aux_bob_operators());
    let best = multistart_minimize(
        |x| aux_value_from_forms(&forms, x),
        4,
        (0.0, 2.0 * PI),
        &SearchOptions::default(),
    );
    let closed_form = aux_witness_closed_form(c0);
    let difference = best.value - closed_form;
    Ok(AuxWitness {
        c0,
        closed_form,
        optimized: best.value,
        difference,
        agree: difference.abs() <= 1e-6,
        alice_angles: best.point,
    })
}

pub fn chsh_closed_form(c0: f64) -> f64 {
    let c1sq = 1.0 - c0 * c0;
    2.0 * (1.0 + 4.0 * c0 * c0 * c1sq).sqrt()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ChshValue {
    pub c0: f64,
    pub closed_form: f64,
    pub optimized: f64,
    pub difference: f64,
}

/// Maximal CHSH value of c₀|00⟩ + c₁|11⟩, closed form and optimized over
/// four qubit observables on the two-dimensional support.
pub fn chsh_smax(c0: f64) -> Result<ChshValue> {
    if !(c0 > 0.0 && c0 < 1.0) {
        return Err(ConstructionError::Parameter {
            name: "c0",
            value: c0,
            range: "(0, 1)",
        });
    }
    let c1 = (1.0 - c0 * c0).sqrt();
    let psi = Ket::new(vec![re(c0), re(0.0), re(0.0), re(c1)])?;
    let rho = DensityOperator::from_ket(&psi, vec![2, 2])?;
    let paulis = [
        ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
        ComplexMatrix::from_fn(2, 2, |r, col| match (r, col) {
            (0, 1) => c(0.0, -1.0),
            (1, 0) => c(0.0, 1.0),
            _ => C64::default(),
        }),
        ComplexMatrix::from_real_diag(&[1.0, -1.0]),
    ];
    let t: [[f64; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| rho.expectation(&kron(&paulis[i], &paulis[j]))));
    let dir = |th: f64, ph: f64| [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
    let corr = |a: [f64; 3], b: [f64; 3]| -> f64 {
        (0..3).map(|i| (0..3).map(|j| a[i] * t[i][j] * b[j]).sum::<f64>()).sum()
    };
    let s = |x: &[f64]| {
        let (a, a2, b, b2) = (dir(x[0], x[1]), dir(x[2], x[3]), dir(x[4], x[5]), dir(x[6], x[7]));
        corr(a, b) + corr(a, b2) + corr(a2, b) - corr(a2, b2)
    };
    let best = multistart_minimize(|x| -s(x), 8, (0.0, 2.0 * PI), &SearchOptions::default());
    let closed_form = chsh_closed_form(c0);
    Ok(ChshValue {
        c0,
        closed_form,
        optimized: -best.value,
        difference: -best.value - closed_form,
    })
}

// ---------------------------------------------------------------------------
// flagged Werner

/// w P₋/3 + (1 − w) I/9 on ℂ³ ⊗ ℂ³.
pub fn werner_block(w: f64) -> Result<DensityOperator> {
    check_unit("w", w)?;
    let m = &antisymmetric_projector(3).scale_real(w / 3.0)
        + &ComplexMatrix::identity(9).scale_real((1.0 - w) / 9.0);
    Ok(DensityOperator::new(m, vec![3, 3])?)
}

#[derive(Clone, Debug)]
pub struct FlaggedWernerConstruction {
    pub eps: f64,
    pub w: f64,
    pub state: DensityOperator,
    /// Alice's flag measurement F (outcome 0 is |0⟩⟨0|) against Bob's KCBS pairs.
    pub quantum: QuantumScenario,
}

pub fn build_flagged_werner(eps: f64, w: f64) -> Result<FlaggedWernerConstruction> {
    check_unit("eps", eps)?;
    check_unit("w", w)?;
    let flag = Ket::basis(9, 0).projector();
    let m = &flag.scale_real(eps) + &werner_block(w)?.matrix().scale_real(1.0 - eps);
    let state = DensityOperator::new(m, vec![3, 3])?;
    let f0 = Ket::basis(3, 0).projector();
    let alice = QuantumParty {
        name: "A".into(),
        dim: 3,
        measurements: vec![QuantumMeasurement::indexed(
            "F",
            vec![f0.clone(), complement(3, &f0)],
        )],
        contexts: vec![vec!["F".into()]],
    };
    let tested = (0..5).map(|j| vec![0, j]).collect();
    let quantum = QuantumScenario::new(vec![alice, kcbs_party("B")], tested)?;
    Ok(FlaggedWernerConstruction {
        eps,
        w,
        state,
        quantum,
    })
}

impl FlaggedWernerConstruction {
    pub fn model(&self) -> Result<EmpiricalModel> {
        Ok(self.quantum.born_table(&self.state)?)
    }

    pub fn pt_min_eigenvalue(&self) -> Result<f64> {
        let pt = self.state.partial_transpose(1)?;
        Ok(hermitian_eigenvalues(&pt)?[0])
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct FlaggedValues {
    pub pt_min_eigenvalue: f64,
    pub marginal_a: Vec<f64>,
    pub marginal_b: Vec<f64>,
    /// Largest off-diagonal modulus of either marginal.
    pub marginal_offdiag: f64,
    pub x_uncond: [f64; 5],
    pub d_uncond: f64,
    pub branch_probability: f64,
    pub conditional_b: Vec<f64>,
    pub x_cond: [f64; 5],
    pub d_cond: f64,
}

pub fn flagged_kcbs_values(c: &FlaggedWernerConstruction) -> Result<FlaggedValues> {
    let d = kcbs_operator();
    let ra = c.state.partial_trace(0)?;
    let rb = c.state.partial_trace(1)?;
    let diag = |r: &DensityOperator| (0..3).map(|i| r.matrix()[(i, i)].re).collect::<Vec<_>>();
    let offdiag = |r: &DensityOperator| {
        let mut m = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    m = m.max(r.matrix()[(i, j)].norm());
                }
            }
        }
        m
    };
    let (p, cond) = c.quantum.postselect_state(&c.state, "F", 0).map_err(|e| match e {
        ScenarioError::ZeroBranch(p) => ConstructionError::ZeroBranch(p),
        other => other.into(),
    })?;
    if p <= EPS_NUM {
        return Err(ConstructionError::ZeroBranch(p));
    }
    Ok(FlaggedValues {
        pt_min_eigenvalue: c.pt_min_eigenvalue()?,
        marginal_a: diag(&ra),
        marginal_b: diag(&rb),
        marginal_offdiag: offdiag(&ra).max(offdiag(&rb)),
        x_uncond: kcbs_correlators(&rb),
        d_uncond: rb.expectation(&d),
        branch_probability: p,
        conditional_b: diag(&cond),
        x_cond: kcbs_correlators(&cond),
        d_cond: cond.expectation(&d),
    })
}

/// Closed forms for the flagged family at general (ε, w).
pub mod flagged_closed {
    use super::sqrt5;

    /// Smallest eigenvalue of the partial transpose. The transposed state is
    /// αI + ε|00⟩⟨00| − β|Φ⟩⟨Φ| with |Φ⟩ maximally entangled.
    pub fn pt_min(eps: f64, w: f64) -> f64 {
        let alpha = (1.0 - eps) * (w / 6.0 + (1.0 - w) / 9.0);
        let beta = (1.0 - eps) * w / 2.0;
        let t = eps - beta;
        alpha + 0.5 * (t - (t * t + 8.0 / 3.0 * eps * beta).sqrt())
    }

    /// Bob's marginal diagonal.
    pub fn marginal(eps: f64) -> [f64; 3] {
        let r = (1.0 - eps) / 3.0;
        [eps + r, r, r]
    }

    pub fn branch_probability(eps: f64) -> f64 {
        eps + (1.0 - eps) / 3.0
    }

    /// Bob's conditional diagonal after the flag outcome.
    pub fn conditional(eps: f64, w: f64) -> [f64; 3] {
        let p = branch_probability(eps);
        let side = (1.0 - eps) * (w / 6.0 + (1.0 - w) / 9.0);
        [(p - 2.0 * side) / p, side / p, side / p]
    }

    /// ⟨D⟩ on a diagonal qutrit state.
    pub fn d_on_diagonal(q: [f64; 3]) -> f64 {
        let s = sqrt5();
        q[0] * (5.0 - 4.0 * s) + (q[1] + q[2]) * (2.0 * s - 5.0)
    }
}
