//! Parameter sweeps and the impedance-matching prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::{
    dbm_to_watts, fixed_point_solve, reflection_coefficient, Numerics, SteadyStateSolution, System,
};
use crate::constants::{hz_to_rad, CONSTANTS_VERSION};
use crate::ensemble::{
    build_detuning_grid_at, ensemble_response, population_difference_map, signal_absorption_rate,
    GridKind, Map2D,
};
use crate::error::{Error, Result};
use crate::model::thermal_state;

/// Quantity varied along a sweep axis, in configuration units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Pump detuning from the optical line center, Hz.
    DeltaO,
    /// Microwave detuning from the spin line center, Hz.
    DeltaMu,
    /// Microwave input power, dBm.
    PMwDbm,
    /// Pump input power, W.
    POpt,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::DeltaO => "delta_o",
            SweepParam::DeltaMu => "delta_mu",
            SweepParam::PMwDbm => "p_mw_dbm",
            SweepParam::POpt => "p_opt",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SweepParam::DeltaO | SweepParam::DeltaMu => "Hz",
            SweepParam::PMwDbm => "dBm",
            SweepParam::POpt => "W",
        }
    }

    fn apply(self, system: &mut System, value: f64) {
        match self {
            SweepParam::DeltaO => system.drive.delta_o = hz_to_rad(value),
            SweepParam::DeltaMu => system.drive.delta_mu = hz_to_rad(value),
            SweepParam::PMwDbm => system.drive.p_mw_dbm = value,
            SweepParam::POpt => system.drive.p_opt = value,
        }
    }
}

/// Spacing of axis points. `Dbm` takes `start`/`stop` in dBm and spaces
/// points evenly in dBm; on `p_opt` the values are converted to W.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AxisScale {
    #[default]
    Linear,
    Log,
    Dbm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: SweepParam,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: AxisScale,
}

impl Axis {
    pub fn new(name: SweepParam, start: f64, stop: f64, count: usize, scale: AxisScale) -> Self {
        Axis {
            name,
            start,
            stop,
            count,
            scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = format!("axis {}", self.name.name());
        if self.count < 2 {
            return Err(Error::config(
                field,
                format!("count must be >= 2 (got {})", self.count),
            ));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::config(field, "start and stop must be finite"));
        }
        match self.scale {
            AxisScale::Log if !(self.start > 0.0 && self.stop > 0.0) => Err(Error::config(
                field,
                "log scale needs positive start and stop",
            )),
            AxisScale::Dbm if !matches!(self.name, SweepParam::PMwDbm | SweepParam::POpt) => {
                Err(Error::config(field, "dbm scale applies only to power axes"))
            }
            _ => Ok(()),
        }
    }

    /// Axis values in the unit reported by [`SweepParam::unit`].
    pub fn values(&self) -> Vec<f64> {
        let n = self.count;
        let t = |k: usize| k as f64 / (n - 1) as f64;
        let lerp = |k: usize| {
            if k == n - 1 {
                self.stop
            } else {
                self.start + (self.stop - self.start) * t(k)
            }
        };
        (0..n)
            .map(|k| match self.scale {
                AxisScale::Linear => lerp(k),
                AxisScale::Log => {
                    (self.start.ln() + (self.stop.ln() - self.start.ln()) * t(k)).exp()
                }
                AxisScale::Dbm => match self.name {
                    SweepParam::POpt => dbm_to_watts(lerp(k)),
                    _ => lerp(k),
                },
            })
            .collect()
    }
}

/// Per-cell observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    /// Photon-number conversion efficiency.
    Eta,
    /// Ensemble mean of `ρ11 − ρ33`.
    Popdiff,
    /// Signal-mode absorption rate of the ensemble, Hz (same convention as
    /// the cavity κ's).
    KappaAbs,
    /// Microwave power reflection `|b_out/b_in|²` with the ions present.
    Reflection,
}

impl Output {
    pub fn name(self) -> &'static str {
        match self {
            Output::Eta => "eta",
            Output::Popdiff => "popdiff",
            Output::KappaAbs => "kappa_abs",
            Output::Reflection => "reflection",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Output::KappaAbs => "Hz",
            _ => "1",
        }
    }

    fn evaluate(self, system: &System, sol: &SteadyStateSolution) -> f64 {
        match self {
            Output::Eta => sol.eta,
            Output::Popdiff => sol
                .response
                .popdiff
                .iter()
                .zip(&sol.grid.weights)
                .map(|(p, w)| p * w)
                .sum(),
            Output::KappaAbs => {
                signal_absorption_rate(&sol.response, &system.atom, &sol.grid)
                    / (2.0 * std::f64::consts::PI)
            }
            Output::Reflection => {
                let b_in = system.drive.microwave_flux().sqrt();
                if b_in > 0.0 {
                    (1.0 - system.microwave.kappa1.sqrt() * sol.fields.b / b_in).norm_sqr()
                } else {
                    reflection_coefficient(&system.microwave, system.microwave.delta_c).norm_sqr()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub outputs: Vec<Output>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::config(
                "axes",
                format!("a sweep has 1 or 2 axes (got {})", self.axes.len()),
            ));
        }
        if self.axes.len() == 2 && self.axes[0].name == self.axes[1].name {
            return Err(Error::config(
                "axes",
                "the two axes must vary different parameters",
            ));
        }
        if self.outputs.is_empty() {
            return Err(Error::config("outputs", "at least one output is required"));
        }
        self.axes.iter().try_for_each(Axis::validate)
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }
}

/// Identifies the configuration that produced a result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub constants_version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Provenance {
            config_hash: config_hash.into(),
            constants_version: CONSTANTS_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisValues {
    pub name: SweepParam,
    pub values: Vec<f64>,
}

/// Lattice of sweep outputs. Cell `k` has index `k = i0 * n1 + i1`, the
/// first axis varying slowest. Failed cells hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axes: Vec<AxisValues>,
    pub outputs: Vec<Output>,
    /// `values[o][k]` is output `o` at cell `k`.
    pub values: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
    /// Failure message per non-converged cell.
    pub failures: Vec<(usize, String)>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn cell_count(&self) -> usize {
        self.converged.len()
    }

    /// Axis coordinates of cell `k`.
    pub fn coords(&self, k: usize) -> Vec<f64> {
        let mut rest = k;
        let mut out = vec![0.0; self.axes.len()];
        for (i, axis) in self.axes.iter().enumerate().rev() {
            out[i] = axis.values[rest % axis.values.len()];
            rest /= axis.values.len();
        }
        out
    }

    pub fn output(&self, which: Output) -> Option<&[f64]> {
        self.outputs
            .iter()
            .position(|&o| o == which)
            .map(|i| self.values[i].as_slice())
    }

    /// Largest converged value of an output and its cell index.
    pub fn peak(&self, which: Output) -> Option<(f64, usize)> {
        let values = self.output(which)?;
        values
            .iter()
            .enumerate()
            .filter(|(k, v)| self.converged[*k] && v.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, &v)| (v, k))
    }

    pub fn converged_fraction(&self) -> f64 {
        self.converged.iter().filter(|&&c| c).count() as f64 / self.cell_count().max(1) as f64
    }
}

/// Solves every cell of the sweep from the same initial conditions. Cells
/// run on the current rayon pool and are gathered by index.
///
/// Configuration errors abort the sweep; solver failures (no convergence,
/// divergence, singular steady state) mark the cell as not converged.
pub fn run_sweep(
    base: &System,
    numerics: &Numerics,
    spec: &SweepSpec,
    provenance: Provenance,
) -> Result<SweepResult> {
    spec.validate()?;
    base.validate()?;
    numerics.validate()?;
    let axes: Vec<AxisValues> = spec
        .axes
        .iter()
        .map(|a| AxisValues {
            name: a.name,
            values: a.values(),
        })
        .collect();
    let n = spec.cell_count();
    let cells: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rest = k;
            let mut params = vec![(SweepParam::DeltaO, 0.0); axes.len()];
            for (i, axis) in axes.iter().enumerate().rev() {
                params[i] = (axis.name, axis.values[rest % axis.values.len()]);
                rest /= axis.values.len();
            }
            let mut system = base.clone();
            for &(p, v) in &params {
                p.apply(&mut system, v);
            }
            let sol = fixed_point_solve(&system, numerics)?;
            Ok(spec
                .outputs
                .iter()
                .map(|o| o.evaluate(&system, &sol))
                .collect())
        })
        .collect();

    let mut values = vec![Vec::with_capacity(n); spec.outputs.len()];
    let mut converged = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (k, cell) in cells.into_iter().enumerate() {
        match cell {
            Ok(v) => {
                for (o, x) in v.into_iter().enumerate() {
                    values[o].push(x);
                }
                converged.push(true);
            }
            Err(
                e @ (Error::NonConvergence { .. }
                | Error::Divergence { .. }
                | Error::Singular { .. }),
            ) => {
                values.iter_mut().for_each(|col| col.push(f64::NAN));
                converged.push(false);
                failures.push((k, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SweepResult {
        axes,
        outputs: spec.outputs.clone(),
        values,
        converged,
        failures,
        provenance,
    })
}

fn require_axes(spec: &SweepSpec, scenario: &str, names: &[SweepParam]) -> Result<()> {
    let got: Vec<SweepParam> = spec.axes.iter().map(|a| a.name).collect();
    if got != names {
        let want: Vec<&str> = names.iter().map(|n| n.name()).collect();
        return Err(Error::config(
            "axes",
            format!("{scenario} varies {}", want.join(" x ")),
        ));
    }
    Ok(())
}

fn with_outputs(spec: &SweepSpec, required: &[Output]) -> SweepSpec {
    let mut spec = spec.clone();
    for &o in required {
        if !spec.outputs.contains(&o) {
            spec.outputs.push(o);
        }
    }
    spec
}

/// η over the plane of operating detunings `(δo, δμ)`.
pub fn sweep_2d(
    base: &System,
    numerics: &Numerics,
    spec: &SweepSpec,
    provenance: Provenance,
) -> Result<SweepResult> {
    require_axes(spec, "sweep2d", &[SweepParam::DeltaO, SweepParam::DeltaMu])?;
    run_sweep(
        base,
        numerics,
        &with_outputs(spec, &[Output::Eta]),
        provenance,
    )
}

/// η and κ_abs against microwave input power.
pub fn microwave_power_sweep(
    base: &System,
    numerics: &Numerics,
    spec: &SweepSpec,
    provenance: Provenance,
) -> Result<SweepResult> {
    require_axes(spec, "mw-sweep", &[SweepParam::PMwDbm])?;
    run_sweep(
        base,
        numerics,
        &with_outputs(spec, &[Output::Eta, Output::KappaAbs]),
        provenance,
    )
}

/// η against pump power at fixed microwave drive.
pub fn optical_power_sweep(
    base: &System,
    numerics: &Numerics,
    spec: &SweepSpec,
    provenance: Provenance,
) -> Result<SweepResult> {
    require_axes(spec, "opt-sweep", &[SweepParam::POpt])?;
    run_sweep(
        base,
        numerics,
        &with_outputs(spec, &[Output::Eta]),
        provenance,
    )
}

/// Full width at half maximum of η along `δo` at the peak's `δμ`, Hz.
/// Returns `None` when the half-maximum crossing on either side falls
/// outside the sweep.
pub fn ridge_width_delta_o(result: &SweepResult) -> Option<f64> {
    let i_o = result
        .axes
        .iter()
        .position(|a| a.name == SweepParam::DeltaO)?;
    let i_mu = result
        .axes
        .iter()
        .position(|a| a.name == SweepParam::DeltaMu)?;
    let eta = result.output(Output::Eta)?;
    let (peak, k) = result.peak(Output::Eta)?;
    let n_mu = result.axes[i_mu].values.len();
    let n_o = result.axes[i_o].values.len();
    let (o0, mu0) = if i_o == 0 {
        (k / n_mu, k % n_mu)
    } else {
        (k % n_o, k / n_o)
    };
    let at = |o: usize| {
        if i_o == 0 {
            eta[o * n_mu + mu0]
        } else {
            eta[mu0 * n_o + o]
        }
    };
    let xs = &result.axes[i_o].values;
    let half = 0.5 * peak;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = o0;
        for o in range {
            let v = at(o);
            if !v.is_finite() {
                return None;
            }
            if v < half {
                let (x0, x1, v0) = (xs[prev], xs[o], at(prev));
                return Some(x0 + (x1 - x0) * (v0 - half) / (v0 - v));
            }
            prev = o;
        }
        None
    };
    let right = crossing(&mut (o0 + 1..n_o))?;
    let left = crossing(&mut (0..o0).rev())?;
    Some((right - left).abs())
}

/// Population-difference map on a uniform display lattice of ion
/// detunings, evaluated with the self-consistent fields of `system`.
/// The lattice is square, `count` nodes over `±half_width` (Hz) on both
/// axes around the operating point, so `δo + δμ = 0` falls on nodes.
pub fn population_map(
    system: &System,
    numerics: &Numerics,
    count: usize,
    half_width: f64,
) -> Result<(Map2D, SteadyStateSolution)> {
    let sol = fixed_point_solve(system, numerics)?;
    let mut spec = system.inhomogeneous.clone();
    spec.kind = GridKind::Uniform;
    spec.n_opt = count;
    spec.n_spin = count;
    spec.span_opt = half_width / spec.fwhm_opt;
    spec.span_spin = half_width / spec.fwhm_spin;
    let grid = build_detuning_grid_at(
        &spec,
        system.n_eff,
        system.drive.delta_o,
        system.drive.delta_mu,
    )?;
    let resp = ensemble_response(&grid, &system.atom, &sol.fields)?;
    Ok((population_difference_map(&resp, &grid)?, sol))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCase {
    pub temperature: f64,
    pub matched: bool,
    pub eta: f64,
    /// Bare microwave reflection `|r|²` on resonance.
    pub reflection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub p_mw_dbm: f64,
    /// Current/matched at the configured temperature, then current/matched
    /// at the cold temperature.
    pub cases: [PredictionCase; 4],
    /// Matched over current η at the configured temperature.
    pub boost: f64,
    /// Matched η at the cold temperature.
    pub cold_matched_eta: f64,
    /// Thermal `ρ11` at the cold temperature.
    pub cold_ground_fraction: f64,
    /// `|η(p) − η(p − 10 dB)| / η(p)` at the configured temperature, current
    /// cavity; small values confirm the low-power limit.
    pub low_power_drift: f64,
}

/// Efficiencies with the current and the impedance-matched microwave
/// cavity (`κ1 ← κ2 + κi`), at the configured temperature and at
/// `cold_temperature`, at microwave input `p_mw_dbm`.
pub fn impedance_match_prediction(
    base: &System,
    numerics: &Numerics,
    p_mw_dbm: f64,
    cold_temperature: f64,
) -> Result<PredictionReport> {
    let variants = [
        (base.atom.temperature, false),
        (base.atom.temperature, true),
        (cold_temperature, false),
        (cold_temperature, true),
    ];
    let mut jobs: Vec<(f64, bool, f64)> = variants.iter().map(|&(t, m)| (t, m, p_mw_dbm)).collect();
    jobs.push((base.atom.temperature, false, p_mw_dbm - 10.0));
    let etas: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(t, matched, p)| {
            let mut system = base.clone();
            system.atom.temperature = t;
            system.drive.p_mw_dbm = p;
            if matched {
                system.microwave = system.microwave.impedance_matched();
            }
            fixed_point_solve(&system, numerics).map(|s| s.eta)
        })
        .collect();
    let etas = etas.into_iter().collect::<Result<Vec<f64>>>()?;
    let case = |i: usize| {
        let (temperature, matched) = variants[i];
        let cav = if matched {
            base.microwave.impedance_matched()
        } else {
            base.microwave
        };
        PredictionCase {
            temperature,
            matched,
            eta: etas[i],
            reflection: reflection_coefficient(&cav, cav.delta_c).norm_sqr(),
        }
    };
    let cold = thermal_state(cold_temperature, base.atom.f_mu);
    Ok(PredictionReport {
        p_mw_dbm,
        cases: [case(0), case(1), case(2), case(3)],
        boost: etas[1] / etas[0],
        cold_matched_eta: etas[3],
        cold_ground_fraction: cold.population(1),
        low_power_drift: (etas[0] - etas[4]).abs() / etas[0],
    })
}
