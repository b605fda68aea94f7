//! Liouvillian superoperators.
//!
//! Density matrices are vectorized row-major, `vec(ρ)[3i + j] = ρij`, so that
//! `vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)`.

use nalgebra::{Matrix3, SMatrix, SVector};

use super::{AtomDetunings, AtomParams, FieldState, Rates, C64};
use crate::error::Result;

pub type CMat9 = SMatrix<C64, 9, 9>;
pub type RMat9 = SMatrix<f64, 9, 9>;

/// Number of real coordinates of a 3-level density matrix.
pub const BLOCH_DIM: usize = 9;

/// Generator of `dρ/dt = L ρ` on the row-major vectorized density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub matrix: CMat9,
}

impl Superoperator {
    pub fn apply(&self, rho: &SVector<C64, 9>) -> SVector<C64, 9> {
        self.matrix * rho
    }

    /// Row vector `vec(I)ᵀ L`; vanishes for a trace-preserving generator.
    pub fn trace_row(&self) -> SVector<C64, 9> {
        let mut out = SVector::<C64, 9>::zeros();
        for col in 0..9 {
            out[col] = self.matrix[(0, col)] + self.matrix[(4, col)] + self.matrix[(8, col)];
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..9)
            .map(|r| (0..9).map(|c| self.matrix[(r, c)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn unit(i: usize, j: usize) -> Matrix3<C64> {
    let mut m = Matrix3::zeros();
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

fn kron(a: &Matrix3<C64>, b: &Matrix3<C64>) -> CMat9 {
    CMat9::from_fn(|r, c| a[(r / 3, c / 3)] * b[(r % 3, c % 3)])
}

/// `H = δμ σ22 + δs σ33 + (Ω σ32 + gs a σ31 + gμ b σ21 + h.c.)`.
pub fn hamiltonian(params: &AtomParams, det: &AtomDetunings, fields: &FieldState) -> Matrix3<C64> {
    let mut h = Matrix3::zeros();
    h[(1, 1)] = C64::new(det.delta_mu(), 0.0);
    h[(2, 2)] = C64::new(det.delta_s(), 0.0);
    let mu = fields.b * params.g_mu;
    let sig = fields.a * params.g_s;
    h[(1, 0)] = mu;
    h[(0, 1)] = mu.conj();
    h[(2, 0)] = sig;
    h[(0, 2)] = sig.conj();
    h[(2, 1)] = fields.omega_o;
    h[(1, 2)] = fields.omega_o.conj();
    h
}

/// `-i [H, ·]`.
fn commutator(h: &Matrix3<C64>) -> CMat9 {
    let id = Matrix3::identity();
    (kron(h, &id) - kron(&id, &h.transpose())) * C64::new(0.0, -1.0)
}

/// `D[J] ρ = J ρ J† − ½ {J†J, ρ}`.
fn dissipator(jump: &Matrix3<C64>) -> CMat9 {
    let id = Matrix3::identity();
    let jdj = jump.adjoint() * jump;
    kron(jump, &jump.map(|z| z.conj()))
        - (kron(&jdj, &id) + kron(&id, &jdj.transpose())) * C64::new(0.5, 0.0)
}

fn dissipators(rates: &Rates) -> CMat9 {
    let channels = [
        (rates.spin_down, unit(0, 1)),
        (rates.spin_up, unit(1, 0)),
        (rates.opt_to_1, unit(0, 2)),
        (rates.opt_to_2, unit(1, 2)),
        (2.0 * rates.dephase_2, unit(1, 1)),
        (2.0 * rates.dephase_3, unit(2, 2)),
    ];
    let mut l = CMat9::zeros();
    for (rate, op) in channels {
        if rate > 0.0 {
            l += dissipator(&(op * C64::new(rate.sqrt(), 0.0)));
        }
    }
    l
}

/// Full Lindblad generator for one ion: coherent evolution under
/// [`hamiltonian`] plus spin relaxation (with thermal re-excitation when
/// enabled), branched optical decay and pure dephasing of `|2⟩` and `|3⟩`.
pub fn build_liouvillian(
    params: &AtomParams,
    det: &AtomDetunings,
    fields: &FieldState,
) -> Result<Superoperator> {
    params.validate()?;
    let rates = params.rates()?;
    let h = hamiltonian(params, det, fields);
    Ok(Superoperator {
        matrix: commutator(&h) + dissipators(&rates),
    })
}

// Real coordinates r = [ρ11, ρ22, ρ33, Re ρ21, Im ρ21, Re ρ31, Im ρ31, Re ρ32, Im ρ32].
const COHERENCES: [(usize, usize); 3] = [(1, 0), (2, 0), (2, 1)];

fn hermitian_basis(k: usize) -> Matrix3<C64> {
    let mut m = Matrix3::zeros();
    match k {
        0..=2 => m[(k, k)] = C64::new(1.0, 0.0),
        _ => {
            let (i, j) = COHERENCES[(k - 3) / 2];
            let z = if (k - 3).is_multiple_of(2) {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 1.0)
            };
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

pub(crate) fn to_real_coords(m: &Matrix3<C64>) -> [f64; 9] {
    let mut r = [0.0; 9];
    for k in 0..3 {
        r[k] = m[(k, k)].re;
    }
    for (n, &(i, j)) in COHERENCES.iter().enumerate() {
        r[3 + 2 * n] = m[(i, j)].re;
        r[4 + 2 * n] = m[(i, j)].im;
    }
    r
}

pub(crate) fn from_real_coords(r: &[f64; 9]) -> Matrix3<C64> {
    let mut m = Matrix3::zeros();
    for (k, &x) in r.iter().enumerate() {
        m += hermitian_basis(k) * C64::new(x, 0.0);
    }
    m
}

fn vec9(m: &Matrix3<C64>) -> SVector<C64, 9> {
    SVector::from_fn(|idx, _| m[(idx / 3, idx % 3)])
}

fn unvec9(v: &SVector<C64, 9>) -> Matrix3<C64> {
    Matrix3::from_fn(|i, j| v[3 * i + j])
}

/// Re-expresses a Hermiticity-preserving superoperator in real coordinates.
fn realify(l: &CMat9) -> RMat9 {
    let mut out = RMat9::zeros();
    for k in 0..BLOCH_DIM {
        let image = unvec9(&(l * vec9(&hermitian_basis(k))));
        let col = to_real_coords(&image);
        for (row, x) in col.iter().enumerate() {
            out[(row, k)] = *x;
        }
    }
    out
}

/// Real-coordinate generators of the Liouvillian, split so that the
/// per-node generator is an affine combination:
///
/// `R = dissipation + δμ·detune_mu + δs·detune_s + Σ_c field_c · drive[c]`.
///
/// `drive` is ordered `[Re b, Im b, Re a, Im a, Re Ω, Im Ω]` and already
/// carries the single-ion couplings for the cavity modes.
#[derive(Debug, Clone)]
pub struct BlochGenerators {
    pub dissipation: RMat9,
    pub detune_mu: RMat9,
    pub detune_s: RMat9,
    pub drive: [RMat9; 6],
}

impl BlochGenerators {
    pub fn new(params: &AtomParams) -> Result<Self> {
        params.validate()?;
        let rates = params.rates()?;
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let real = |h: Matrix3<C64>| realify(&commutator(&h));
        // c σij + c* σji with c = 1 and c = i
        let pair = |row: usize, col: usize, c: C64| {
            let mut h = Matrix3::zeros();
            h[(row, col)] = c;
            h[(col, row)] = c.conj();
            h
        };
        let scaled = |m: RMat9, g: f64| m * g;
        Ok(BlochGenerators {
            dissipation: realify(&dissipators(&rates)),
            detune_mu: real(unit(1, 1)),
            detune_s: real(unit(2, 2)),
            drive: [
                scaled(real(pair(1, 0, one)), params.g_mu),
                scaled(real(pair(1, 0, i)), params.g_mu),
                scaled(real(pair(2, 0, one)), params.g_s),
                scaled(real(pair(2, 0, i)), params.g_s),
                real(pair(2, 1, one)),
                real(pair(2, 1, i)),
            ],
        })
    }

    /// Field coordinates in the order used by `drive`.
    pub fn field_coords(fields: &FieldState) -> [f64; 6] {
        [
            fields.b.re,
            fields.b.im,
            fields.a.re,
            fields.a.im,
            fields.omega_o.re,
            fields.omega_o.im,
        ]
    }

    /// Detuning-independent part of the generator at the given fields.
    pub fn base(&self, fields: &FieldState) -> RMat9 {
        let mut m = self.dissipation;
        for (g, x) in self.drive.iter().zip(Self::field_coords(fields)) {
            if x != 0.0 {
                m += g * x;
            }
        }
        m
    }

    pub fn at(&self, base: &RMat9, det: &AtomDetunings) -> RMat9 {
        base + self.detune_mu * det.delta_mu() + self.detune_s * det.delta_s()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn driven() -> (AtomParams, AtomDetunings, FieldState) {
        let params = AtomParams {
            g_mu: 3.0,
            g_s: 40.0,
            ..AtomParams::default()
        };
        let det = AtomDetunings::new(2.0e6, -7.0e5);
        let fields = FieldState {
            a: C64::new(300.0, -120.0),
            b: C64::new(1.0e4, 2.0e3),
            omega_o: C64::new(2.0e5, 5.0e4),
        };
        (params, det, fields)
    }

    #[test]
    fn trace_preserving() {
        let (params, det, fields) = driven();
        let l = build_liouvillian(&params, &det, &fields).unwrap();
        let scale = l.norm_inf();
        let leak = l.trace_row().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(leak < 1e-10 * scale, "trace leak {leak}");
    }

    #[test]
    fn coherence_decay_matches_t2() {
        let params = AtomParams::default();
        let l =
            build_liouvillian(&params, &AtomDetunings::default(), &FieldState::default()).unwrap();
        // ρ21 sits at vec index 3, ρ31 at 6
        assert!((l.matrix[(3, 3)].re + 1.0 / params.t2_spin).abs() < 1e-6);
        assert!((l.matrix[(6, 6)].re + 1.0 / params.t2_opt).abs() < 1e-6);
    }

    #[test]
    fn real_generators_reproduce_complex_liouvillian() {
        let (params, det, fields) = driven();
        let l = build_liouvillian(&params, &det, &fields).unwrap();
        let gens = BlochGenerators::new(&params).unwrap();
        let r = gens.at(&gens.base(&fields), &det);
        assert!((realify(&l.matrix) - r).abs().max() < 1e-6);
    }

    #[test]
    fn undriven_generator_has_thermal_kernel() {
        let params = AtomParams::default();
        let l = build_liouvillian(
            &params,
            &AtomDetunings::new(1e6, 3e5),
            &FieldState::default(),
        )
        .unwrap();
        let ratio = params.boltzmann_ratio();
        let p1 = 1.0 / (1.0 + ratio);
        let thermal = vec9(&from_real_coords(&[
            p1,
            1.0 - p1,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ]));
        let image = l.apply(&thermal);
        assert!(image.iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn negative_dephasing_rejected() {
        let params = AtomParams {
            t1_spin: 1e-6,
            t2_spin: 3e-6,
            ..AtomParams::default()
        };
        let err = build_liouvillian(&params, &AtomDetunings::default(), &FieldState::default())
            .unwrap_err();
        assert!(err.to_string().contains("T2_spin"), "{err}");
    }
}
