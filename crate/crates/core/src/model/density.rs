use nalgebra::Matrix3;

use super::C64;

/// 3×3 density matrix over `{|1⟩, |2⟩, |3⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    rho: Matrix3<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(rho: Matrix3<C64>) -> Self {
        DensityMatrix { rho }
    }

    pub fn diagonal(p1: f64, p2: f64, p3: f64) -> Self {
        let mut rho = Matrix3::zeros();
        rho[(0, 0)] = C64::new(p1, 0.0);
        rho[(1, 1)] = C64::new(p2, 0.0);
        rho[(2, 2)] = C64::new(p3, 0.0);
        DensityMatrix { rho }
    }

    pub fn matrix(&self) -> &Matrix3<C64> {
        &self.rho
    }

    /// Element `ρij` with 1-based level labels, i.e. `⟨i|ρ|j⟩`.
    pub fn element(&self, i: usize, j: usize) -> C64 {
        self.rho[(i - 1, j - 1)]
    }

    pub fn population(&self, level: usize) -> f64 {
        self.element(level, level).re
    }

    /// `ρ11 − ρ33`, the population difference of the signal transition.
    pub fn signal_inversion(&self) -> f64 {
        self.population(1) - self.population(3)
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let adj = self.rho.adjoint();
        (self.rho - adj)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let herm = (self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        let ev = herm.symmetric_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2]];
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (self.rho - other.rho)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Checks trace, Hermiticity and positivity; returns a description of the
    /// first violation.
    pub fn check(&self) -> Result<(), String> {
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(format!("trace {tr} differs from 1"));
        }
        let h = self.hermiticity_error();
        if h > 1e-12 {
            return Err(format!("not Hermitian (deviation {h:.3e})"));
        }
        let min = self.eigenvalues()[0];
        if min < -1e-10 {
            return Err(format!("negative eigenvalue {min:.3e}"));
        }
        Ok(())
    }
}
