use nalgebra::{Matrix3, SVector};

use super::liouvillian::{from_real_coords, RMat9, Superoperator, BLOCH_DIM};
use super::{DensityMatrix, C64};
use crate::constants::boltzmann_exponent;
use crate::error::{Error, Result};

/// Pivots below this fraction of their (equilibrated) row scale mark the
/// trace-constrained system as rank deficient.
const PIVOT_THRESHOLD: f64 = 1e-13;

/// Undriven Boltzmann state `diag(p1, p2, 0)` with `p2/p1 = exp(−h f_mu / k_B T)`.
pub fn thermal_state(temperature: f64, f_mu: f64) -> DensityMatrix {
    let ratio = (-boltzmann_exponent(f_mu, temperature)).exp();
    let p1 = 1.0 / (1.0 + ratio);
    DensityMatrix::diagonal(p1, 1.0 - p1, 0.0)
}

/// Solves `L ρ = 0`, `tr ρ = 1` by replacing the ρ11 row of the 9×9 complex
/// system with the trace constraint.
pub fn steady_state_atom(l: &Superoperator) -> Result<DensityMatrix> {
    let mut m = l.matrix;
    for col in 0..9 {
        m[(0, col)] = C64::new(0.0, 0.0);
    }
    for idx in [0, 4, 8] {
        m[(0, idx)] = C64::new(1.0, 0.0);
    }
    equilibrate_rows(&mut m);
    let lu = m.lu();
    let u = lu.u();
    let pivot = (0..9)
        .map(|k| u[(k, k)].norm())
        .fold(f64::INFINITY, f64::min);
    if !(pivot > PIVOT_THRESHOLD) {
        return Err(Error::Singular { pivot, node: None });
    }
    let mut rhs = SVector::<C64, 9>::zeros();
    rhs[0] = C64::new(1.0, 0.0);
    let x = lu.solve(&rhs).ok_or(Error::Singular {
        pivot: 0.0,
        node: None,
    })?;
    Ok(DensityMatrix::from_matrix(Matrix3::from_fn(|i, j| {
        x[3 * i + j]
    })))
}

// The trace row is already unit scale, so the right-hand side is unaffected.
fn equilibrate_rows(m: &mut nalgebra::SMatrix<C64, 9, 9>) {
    for row in 1..9 {
        let scale = (0..9).map(|c| m[(row, c)].norm()).fold(0.0, f64::max);
        if scale > 0.0 {
            for c in 0..9 {
                m[(row, c)] /= scale;
            }
        }
    }
}

/// A steady state in real coordinates
/// `[ρ11, ρ22, ρ33, Re ρ21, Im ρ21, Re ρ31, Im ρ31, Re ρ32, Im ρ32]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState(pub [f64; BLOCH_DIM]);

impl BlochState {
    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_matrix(from_real_coords(&self.0))
    }

    pub fn population(&self, level: usize) -> f64 {
        self.0[level - 1]
    }

    pub fn rho21(&self) -> C64 {
        C64::new(self.0[3], self.0[4])
    }

    pub fn rho31(&self) -> C64 {
        C64::new(self.0[5], self.0[6])
    }

    pub fn rho32(&self) -> C64 {
        C64::new(self.0[7], self.0[8])
    }
}

/// LU factorization (partial pivoting, row equilibrated) of a real-coordinate
/// generator whose first row has been replaced by the trace constraint.
///
/// Keeps the factors so that parameter derivatives of the steady state cost one
/// extra back substitution each.
#[derive(Debug, Clone)]
pub struct BlochSolver {
    lu: [[f64; BLOCH_DIM]; BLOCH_DIM],
    perm: [usize; BLOCH_DIM],
    row_scale: [f64; BLOCH_DIM],
}

impl BlochSolver {
    pub fn factor(generator: &RMat9) -> Result<Self> {
        const N: usize = BLOCH_DIM;
        let mut a = [[0.0; N]; N];
        let mut row_scale = [1.0; N];
        for (r, row) in a.iter_mut().enumerate() {
            if r == 0 {
                row[..3].fill(1.0);
                continue;
            }
            let mut scale = 0.0_f64;
            for (c, x) in row.iter_mut().enumerate() {
                *x = generator[(r, c)];
                scale = scale.max(x.abs());
            }
            if scale > 0.0 {
                row_scale[r] = 1.0 / scale;
                row.iter_mut().for_each(|x| *x *= row_scale[r]);
            }
        }
        let mut perm = [0usize; N];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        for k in 0..N {
            let (piv_row, piv) = (k..N)
                .map(|r| (r, a[r][k].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if !(piv > PIVOT_THRESHOLD) {
                return Err(Error::Singular {
                    pivot: piv,
                    node: None,
                });
            }
            if piv_row != k {
                a.swap(k, piv_row);
                perm.swap(k, piv_row);
            }
            let inv = 1.0 / a[k][k];
            for r in (k + 1)..N {
                let f = a[r][k] * inv;
                if f != 0.0 {
                    a[r][k] = f;
                    for c in (k + 1)..N {
                        a[r][c] -= f * a[k][c];
                    }
                } else {
                    a[r][k] = 0.0;
                }
            }
        }
        Ok(BlochSolver {
            lu: a,
            perm,
            row_scale,
        })
    }

    /// Solves `M x = rhs` for the unscaled bordered system `M`.
    fn solve(&self, rhs: &[f64; BLOCH_DIM]) -> [f64; BLOCH_DIM] {
        const N: usize = BLOCH_DIM;
        let mut x = [0.0; N];
        for i in 0..N {
            let src = self.perm[i];
            x[i] = rhs[src] * self.row_scale[src];
        }
        for i in 0..N {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i][j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..N).rev() {
            let mut s = x[i];
            for j in (i + 1)..N {
                s -= self.lu[i][j] * x[j];
            }
            x[i] = s / self.lu[i][i];
        }
        x
    }

    pub fn steady(&self) -> BlochState {
        let mut rhs = [0.0; BLOCH_DIM];
        rhs[0] = 1.0;
        BlochState(self.solve(&rhs))
    }

    /// Derivative of the steady state along a generator direction `dR`
    /// (the trace row is unaffected): `dr = −M⁻¹ P dR r`.
    pub fn derivative(&self, d_generator: &RMat9, state: &BlochState) -> [f64; BLOCH_DIM] {
        let mut rhs = [0.0; BLOCH_DIM];
        for (row, out) in rhs.iter_mut().enumerate().skip(1) {
            let mut s = 0.0;
            for c in 0..BLOCH_DIM {
                s += d_generator[(row, c)] * state.0[c];
            }
            *out = -s;
        }
        self.solve(&rhs)
    }
}
