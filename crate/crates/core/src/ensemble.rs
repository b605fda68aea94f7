//! Inhomogeneous averaging over the optical × spin detuning distribution.
//!
//! Two quadratures are available. [`GridKind::Uniform`] is the plain
//! tensor-product trapezoid rule on an evenly spaced lattice. It is easy to
//! read but the homogeneous lines (≈160 kHz) are far narrower than any
//! affordable lattice spacing, so ensemble integrals do not converge on it.
//! [`GridKind::Resonant`] maps the trapezoid rule through `asinh` coordinates
//! clustered on the three resonance lines of the Δ-system, δμ = 0 (outer
//! axis), and δo = 0 and δs = δo + δμ = 0 (inner axis). Both mappings are
//! analytic, so the composite rule converges spectrally in the node count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::hz_to_rad;
use crate::error::{Error, Result};
use crate::model::{
    AtomDetunings, AtomParams, BlochGenerators, BlochSolver, BlochState, FieldState, C64,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Lineshape {
    #[default]
    Gaussian,
    LorentzianTruncated,
}

impl Lineshape {
    /// Unnormalized density at offset `x` from line center for full width `fwhm`.
    pub fn density(self, x: f64, fwhm: f64) -> f64 {
        let z = 2.0 * x / fwhm;
        match self {
            Lineshape::Gaussian => (-std::f64::consts::LN_2 * z * z).exp(),
            Lineshape::LorentzianTruncated => 1.0 / (1.0 + z * z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Uniform,
    #[default]
    Resonant,
}

/// Inhomogeneous line description. Widths in Hz, spans in units of FWHM.
#[derive(Debug, Clone, PartialEq)]
pub struct InhomogeneousSpec {
    pub fwhm_opt: f64,
    pub fwhm_spin: f64,
    pub shape: Lineshape,
    pub n_opt: usize,
    pub n_spin: usize,
    pub span_opt: f64,
    pub span_spin: f64,
    pub kind: GridKind,
    /// Width (Hz) of the node clusters of the resonant grid, of the order of
    /// the homogeneous linewidth.
    pub cluster_width: f64,
}

impl Default for InhomogeneousSpec {
    fn default() -> Self {
        InhomogeneousSpec {
            fwhm_opt: 340e6,
            fwhm_spin: 50e6,
            shape: Lineshape::Gaussian,
            n_opt: 41,
            n_spin: 41,
            span_opt: 3.0,
            span_spin: 3.0,
            kind: GridKind::Resonant,
            cluster_width: 1e5,
        }
    }
}

impl InhomogeneousSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_opt", self.n_opt), ("n_spin", self.n_spin)] {
            if n < 3 || n % 2 == 0 {
                return Err(Error::config(
                    name,
                    format!("must be an odd count >= 3 (got {n})"),
                ));
            }
        }
        for (name, v, unit) in [
            ("fwhm_opt", self.fwhm_opt, "Hz"),
            ("fwhm_spin", self.fwhm_spin, "Hz"),
            ("span_opt", self.span_opt, "FWHM"),
            ("span_spin", self.span_spin, "FWHM"),
            ("cluster_width", self.cluster_width, "Hz"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(
                    name,
                    format!("must be positive in {unit} (got {v})"),
                ));
            }
        }
        Ok(())
    }

    /// Same spec with both node counts refined to `2n − 1`, which nests the
    /// coarse nodes.
    pub fn refined(&self) -> Self {
        InhomogeneousSpec {
            n_opt: 2 * self.n_opt - 1,
            n_spin: 2 * self.n_spin - 1,
            ..self.clone()
        }
    }
}

/// Quadrature over ion detunings. Nodes are the ions' own detunings
/// `(δo, δμ)` in rad/s; weights are probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningGrid {
    pub nodes: Vec<AtomDetunings>,
    pub weights: Vec<f64>,
    pub n_eff: f64,
    /// `(n_opt, n_spin)` when the nodes form a lattice, stored with δo varying fastest.
    pub lattice: Option<(usize, usize)>,
}

impl DetuningGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weight-normalized copy with a different ion number.
    pub fn with_n_eff(&self, n_eff: f64) -> Self {
        DetuningGrid {
            n_eff,
            ..self.clone()
        }
    }
}

fn uniform_axis(n: usize, half_width: f64) -> Vec<(f64, f64)> {
    let h = 2.0 * half_width / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = -half_width + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            (x, w)
        })
        .collect()
}

/// Trapezoid nodes of `∫ f(x) dx` over `[lo, hi]` through `x = s sinh(u)`.
fn sinh_axis(n: usize, lo: f64, hi: f64, scale: f64) -> Vec<(f64, f64)> {
    let (u0, u1) = ((lo / scale).asinh(), (hi / scale).asinh());
    let du = (u1 - u0) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let u = u0 + du * i as f64;
            let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            (scale * u.sinh(), end * du * scale * u.cosh())
        })
        .collect()
}

/// Trapezoid nodes over `[lo, hi]` through the inverse of
/// `u(x) = asinh(x/s) + asinh((x − c)/s)`, dense around both `0` and `c`.
fn double_sinh_axis(n: usize, lo: f64, hi: f64, c: f64, scale: f64) -> Vec<(f64, f64)> {
    let map = |x: f64| (x / scale).asinh() + ((x - c) / scale).asinh();
    let slope = |x: f64| {
        1.0 / (scale * scale + x * x).sqrt() + 1.0 / (scale * scale + (x - c) * (x - c)).sqrt()
    };
    let (u0, u1) = (map(lo), map(hi));
    let du = (u1 - u0) / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let target = u0 + du * i as f64;
            let x = if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                invert_monotone(map, target, lo, hi)
            };
            let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            (x, end * du / slope(x))
        })
        .collect()
}

// Bisection on a strictly increasing map; 96 halvings exhaust f64 resolution
// for any window in scope.
fn invert_monotone(f: impl Fn(f64) -> f64, target: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..96 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) > target {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

/// Tensor-product grid centered on the line centers (operating detunings zero).
pub fn build_detuning_grid(spec: &InhomogeneousSpec, n_eff: f64) -> Result<DetuningGrid> {
    build_detuning_grid_at(spec, n_eff, 0.0, 0.0)
}

/// Grid for drives detuned by `(delta_o, delta_mu)` rad/s from the line
/// centers: an ion at inhomogeneous offset `ε` sees detuning `δ + ε`.
pub fn build_detuning_grid_at(
    spec: &InhomogeneousSpec,
    n_eff: f64,
    delta_o: f64,
    delta_mu: f64,
) -> Result<DetuningGrid> {
    spec.validate()?;
    if !(n_eff.is_finite() && n_eff >= 0.0) {
        return Err(Error::config(
            "n_eff",
            format!("must be a non-negative ion number (got {n_eff})"),
        ));
    }
    let fwhm_o = hz_to_rad(spec.fwhm_opt);
    let fwhm_mu = hz_to_rad(spec.fwhm_spin);
    let w_o = spec.span_opt * fwhm_o;
    let w_mu = spec.span_spin * fwhm_mu;
    let g_o = |x: f64| spec.shape.density(x - delta_o, fwhm_o);
    let g_mu = |x: f64| spec.shape.density(x - delta_mu, fwhm_mu);

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let lattice = match spec.kind {
        GridKind::Uniform => {
            let axis_o = uniform_axis(spec.n_opt, w_o);
            let axis_mu = uniform_axis(spec.n_spin, w_mu);
            for &(e_mu, h_mu) in &axis_mu {
                for &(e_o, h_o) in &axis_o {
                    let (d_o, d_mu) = (delta_o + e_o, delta_mu + e_mu);
                    nodes.push(AtomDetunings::new(d_o, d_mu));
                    weights.push(h_o * h_mu * g_o(d_o) * g_mu(d_mu));
                }
            }
            Some((spec.n_opt, spec.n_spin))
        }
        GridKind::Resonant => {
            let s = hz_to_rad(spec.cluster_width);
            for (d_mu, h_mu) in sinh_axis(spec.n_spin, delta_mu - w_mu, delta_mu + w_mu, s) {
                let weight_mu = h_mu * g_mu(d_mu);
                for (d_o, h_o) in
                    double_sinh_axis(spec.n_opt, delta_o - w_o, delta_o + w_o, -d_mu, s)
                {
                    nodes.push(AtomDetunings::new(d_o, d_mu));
                    weights.push(weight_mu * h_o * g_o(d_o));
                }
            }
            None
        }
    };
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(DetuningGrid {
        nodes,
        weights,
        n_eff,
        lattice,
    })
}

/// Derivatives of the collective polarizations with respect to
/// `[Re b, Im b, Re a, Im a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationJacobian {
    pub d_pol_mu: [C64; 4],
    pub d_pol_s: [C64; 4],
}

/// Ensemble-integrated atomic response at fixed fields.
///
/// Coherence convention: `pol_mu = N Σ w gμ ⟨σ12⟩` and
/// `pol_s = N Σ w gs ⟨σ13⟩`, where `⟨σ12⟩ = tr(ρ σ12) = ρ21` and
/// `⟨σ13⟩ = ρ31`. These enter the cavity equations as `−i·pol`.
#[derive(Debug, Clone)]
pub struct EnsembleResponse {
    pub pol_mu: C64,
    pub pol_s: C64,
    pub states: Vec<BlochState>,
    /// Per-node `ρ11 − ρ33`.
    pub popdiff: Vec<f64>,
    pub jacobian: Option<PolarizationJacobian>,
}

struct NodeResult {
    state: BlochState,
    d_coh: [[C64; 4]; 2],
}

fn solve_nodes(
    grid: &DetuningGrid,
    params: &AtomParams,
    fields: &FieldState,
    jacobian: bool,
) -> Result<Vec<NodeResult>> {
    let gens = BlochGenerators::new(params)?;
    let base = gens.base(fields);
    grid.nodes
        .par_iter()
        .with_min_len(256)
        .map(|det| {
            let solver = BlochSolver::factor(&gens.at(&base, det))
                .map_err(|e| e.at_node(det.delta_o(), det.delta_mu()))?;
            let state = solver.steady();
            let mut d_coh = [[C64::new(0.0, 0.0); 4]; 2];
            if jacobian {
                for (k, gen) in gens.drive[..4].iter().enumerate() {
                    let d = solver.derivative(gen, &state);
                    d_coh[0][k] = C64::new(d[3], d[4]);
                    d_coh[1][k] = C64::new(d[5], d[6]);
                }
            }
            Ok(NodeResult { state, d_coh })
        })
        .collect()
}

fn respond(
    grid: &DetuningGrid,
    params: &AtomParams,
    fields: &FieldState,
    with_jacobian: bool,
) -> Result<EnsembleResponse> {
    let results = solve_nodes(grid, params, fields, with_jacobian)?;
    let mut sum_mu = C64::new(0.0, 0.0);
    let mut sum_s = C64::new(0.0, 0.0);
    let mut d_mu = [C64::new(0.0, 0.0); 4];
    let mut d_s = [C64::new(0.0, 0.0); 4];
    for (node, w) in results.iter().zip(&grid.weights) {
        sum_mu += node.state.rho21() * *w;
        sum_s += node.state.rho31() * *w;
        if with_jacobian {
            for k in 0..4 {
                d_mu[k] += node.d_coh[0][k] * *w;
                d_s[k] += node.d_coh[1][k] * *w;
            }
        }
    }
    let scale_mu = grid.n_eff * params.g_mu;
    let scale_s = grid.n_eff * params.g_s;
    let jacobian = with_jacobian.then(|| PolarizationJacobian {
        d_pol_mu: d_mu.map(|z| z * scale_mu),
        d_pol_s: d_s.map(|z| z * scale_s),
    });
    let (states, popdiff) = results
        .into_iter()
        .map(|n| (n.state, n.state.population(1) - n.state.population(3)))
        .unzip();
    Ok(EnsembleResponse {
        pol_mu: sum_mu * scale_mu,
        pol_s: sum_s * scale_s,
        states,
        popdiff,
        jacobian,
    })
}

/// Solves every node's steady state and integrates the coherences.
/// Node solves may run in parallel; accumulation is in node order.
pub fn ensemble_response(
    grid: &DetuningGrid,
    params: &AtomParams,
    fields: &FieldState,
) -> Result<EnsembleResponse> {
    respond(grid, params, fields, false)
}

/// As [`ensemble_response`], also returning the polarization Jacobian used
/// by the Newton-accelerated cavity update.
pub fn ensemble_response_with_jacobian(
    grid: &DetuningGrid,
    params: &AtomParams,
    fields: &FieldState,
) -> Result<EnsembleResponse> {
    respond(grid, params, fields, true)
}

/// Lattice of `ρ11 − ρ33` over ion detunings; `values[j * n_o + i]` belongs
/// to `(delta_o[i], delta_mu[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Map2D {
    pub delta_o: Vec<f64>,
    pub delta_mu: Vec<f64>,
    pub values: Vec<f64>,
}

impl Map2D {
    pub fn get(&self, i_o: usize, j_mu: usize) -> f64 {
        self.values[j_mu * self.delta_o.len() + i_o]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Lattice indices of the minimum.
    pub fn argmin(&self) -> (usize, usize) {
        let n_o = self.delta_o.len();
        let k = self
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        (k % n_o, k / n_o)
    }
}

/// Reshapes the per-node population difference into its lattice. Only
/// lattice-shaped (uniform) grids can be reshaped.
pub fn population_difference_map(resp: &EnsembleResponse, grid: &DetuningGrid) -> Result<Map2D> {
    let (n_o, n_mu) = grid
        .lattice
        .ok_or_else(|| Error::config("grid", "population maps need a uniform lattice grid"))?;
    let delta_o = grid.nodes[..n_o].iter().map(|d| d.delta_o()).collect();
    let delta_mu = (0..n_mu).map(|j| grid.nodes[j * n_o].delta_mu()).collect();
    Ok(Map2D {
        delta_o,
        delta_mu,
        values: resp.popdiff.clone(),
    })
}

/// Effective signal-mode energy loss rate of the ensemble,
/// `κ_abs = 2 N Σ w gs² (ρ11 − ρ33) γ31 / (γ31² + δs²)` with `γ31 = 1/T2_opt`.
/// Negative values mean gain.
pub fn signal_absorption_rate(
    resp: &EnsembleResponse,
    params: &AtomParams,
    grid: &DetuningGrid,
) -> f64 {
    let gamma = 1.0 / params.t2_opt;
    let sum: f64 = grid
        .nodes
        .iter()
        .zip(&grid.weights)
        .zip(&resp.popdiff)
        .map(|((det, w), dp)| {
            let ds = det.delta_s();
            w * dp * gamma / (gamma * gamma + ds * ds)
        })
        .sum();
    2.0 * grid.n_eff * params.g_s * params.g_s * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n_opt: usize, n_spin: usize) -> InhomogeneousSpec {
        InhomogeneousSpec {
            n_opt,
            n_spin,
            kind: GridKind::Uniform,
            ..InhomogeneousSpec::default()
        }
    }

    #[test]
    fn three_by_three_grid_is_symmetric() {
        let grid = build_detuning_grid(&uniform(3, 3), 1.0).unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid.nodes[4], AtomDetunings::new(0.0, 0.0));
        let w = &grid.weights;
        // flip δo: i -> 2 - i, flip δμ: j -> 2 - j
        for j in 0..3 {
            for i in 0..3 {
                assert!((w[3 * j + i] - w[3 * j + 2 - i]).abs() < 1e-15);
                assert!((w[3 * j + i] - w[3 * (2 - j) + i]).abs() < 1e-15);
            }
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_weight_at_half_maximum() {
        let spec = InhomogeneousSpec {
            fwhm_opt: 340e6,
            ..uniform(201, 3)
        };
        let grid = build_detuning_grid(&spec, 1.0).unwrap();
        // δo row at δμ = 0; 6 FWHM over 200 intervals puts ±FWHM/2 at ±100/6 nodes
        let row = &grid.weights[201..402];
        let peak = row[100];
        let half = hz_to_rad(170e6);
        let i = grid.nodes[201..402]
            .iter()
            .position(|d| d.delta_o() >= half - 1.0)
            .unwrap();
        let (x0, x1) = (
            grid.nodes[201 + i - 1].delta_o(),
            grid.nodes[201 + i].delta_o(),
        );
        let t = (half - x0) / (x1 - x0);
        let interp = row[i - 1] + t * (row[i] - row[i - 1]);
        assert!((interp / peak - 0.5).abs() < 1e-3, "{}", interp / peak);
    }

    #[test]
    fn even_counts_rejected() {
        assert!(build_detuning_grid(&uniform(4, 3), 1.0).is_err());
        assert!(build_detuning_grid(&uniform(3, 1), 1.0).is_err());
    }

    // Fine uniform quadrature of the Voigt-type integral over δs alone.
    fn voigt_oracle(gamma: f64) -> f64 {
        let sigma = |fwhm: f64| hz_to_rad(fwhm) / (8.0 * std::f64::consts::LN_2).sqrt();
        let sigma_s = (sigma(340e6).powi(2) + sigma(50e6).powi(2)).sqrt();
        let h = gamma / 50.0;
        let n = (9.0 * sigma_s / h) as i64;
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma_s);
        (-n..=n)
            .map(|k| {
                let x = k as f64 * h;
                h * norm * (-0.5 * (x / sigma_s).powi(2)).exp() * gamma / (gamma * gamma + x * x)
            })
            .sum()
    }

    #[test]
    fn resonant_grid_integrates_lorentzian() {
        let gamma = 1e6;
        let expected = voigt_oracle(gamma);
        for n in [41, 81, 161] {
            let spec = InhomogeneousSpec {
                n_opt: n,
                n_spin: n,
                ..InhomogeneousSpec::default()
            };
            let grid = build_detuning_grid(&spec, 1.0).unwrap();
            let integral: f64 = grid
                .nodes
                .iter()
                .zip(&grid.weights)
                .map(|(d, w)| w * gamma / (gamma * gamma + d.delta_s() * d.delta_s()))
                .sum();
            assert!(
                (integral / expected - 1.0).abs() < 1e-3,
                "n={n}: {}",
                integral / expected
            );
        }
    }

    #[test]
    fn weights_normalized() {
        for kind in [GridKind::Uniform, GridKind::Resonant] {
            for shape in [Lineshape::Gaussian, Lineshape::LorentzianTruncated] {
                let spec = InhomogeneousSpec {
                    kind,
                    shape,
                    n_opt: 21,
                    n_spin: 11,
                    ..InhomogeneousSpec::default()
                };
                let grid = build_detuning_grid_at(&spec, 3.0, 1e8, -2e7).unwrap();
                assert!(grid.weights.iter().all(|&w| w >= 0.0));
                assert!((grid.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn undriven_ensemble_is_thermal_and_silent() {
        let params = AtomParams::default();
        let grid = build_detuning_grid(&uniform(7, 5), 1e12).unwrap();
        let resp = ensemble_response(&grid, &params, &FieldState::default()).unwrap();
        assert_eq!(resp.pol_mu, C64::new(0.0, 0.0));
        assert_eq!(resp.pol_s, C64::new(0.0, 0.0));
        let p1 = 1.0 / (1.0 + params.boltzmann_ratio());
        assert!(resp.popdiff.iter().all(|&d| (d - p1).abs() < 1e-12));
    }

    #[test]
    fn ground_state_map_is_flat() {
        let params = AtomParams {
            temperature: 0.0,
            ..AtomParams::default()
        };
        let grid = build_detuning_grid(&uniform(5, 5), 1.0).unwrap();
        let resp = ensemble_response(&grid, &params, &FieldState::default()).unwrap();
        let map = population_difference_map(&resp, &grid).unwrap();
        assert_eq!(map.delta_o.len(), 5);
        assert!(map.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn absorption_signs() {
        let params = AtomParams {
            g_s: 100.0,
            ..AtomParams::default()
        };
        let grid = DetuningGrid {
            nodes: vec![AtomDetunings::new(0.0, 0.0)],
            weights: vec![1.0],
            n_eff: 1e10,
            lattice: Some((1, 1)),
        };
        let mut resp = EnsembleResponse {
            pol_mu: C64::new(0.0, 0.0),
            pol_s: C64::new(0.0, 0.0),
            states: vec![],
            popdiff: vec![0.0],
            jacobian: None,
        };
        assert_eq!(signal_absorption_rate(&resp, &params, &grid), 0.0);
        resp.popdiff[0] = -1.0;
        let k = signal_absorption_rate(&resp, &params, &grid);
        let expected = -2.0 * 1e10 * 100.0 * 100.0 * params.t2_opt;
        assert!((k / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_node_reproduces_bare_coherence() {
        let params = AtomParams {
            g_mu: 2.0,
            g_s: 50.0,
            ..AtomParams::default()
        };
        let det = AtomDetunings::new(1e5, -3e5);
        let grid = DetuningGrid {
            nodes: vec![det],
            weights: vec![1.0],
            n_eff: 7.0,
            lattice: Some((1, 1)),
        };
        let fields = FieldState {
            a: C64::new(10.0, 0.0),
            b: C64::new(1e4, 0.0),
            omega_o: C64::new(1e5, 0.0),
        };
        let resp = ensemble_response(&grid, &params, &fields).unwrap();
        let rho = crate::model::steady_state_atom(
            &crate::model::build_liouvillian(&params, &det, &fields).unwrap(),
        )
        .unwrap();
        assert!((resp.pol_mu - rho.element(2, 1) * 14.0).norm() < 1e-10 * resp.pol_mu.norm());
        assert!((resp.pol_s - rho.element(3, 1) * 350.0).norm() < 1e-10 * resp.pol_s.norm());
    }
}
