mod common;

use common::{reference_system, rel_diff, TAU};
use delta_sim::constants::hz_to_rad;
use delta_sim::ensemble::{
    build_detuning_grid_at, ensemble_response, ensemble_response_with_jacobian,
    signal_absorption_rate, DetuningGrid, EnsembleResponse, GridKind, InhomogeneousSpec,
};
use delta_sim::model::{AtomParams, FieldState, C64};
use proptest::prelude::*;

fn fields(b: (f64, f64), a: (f64, f64), omega: f64) -> FieldState {
    FieldState {
        b: C64::from_polar(b.0, b.1),
        a: C64::from_polar(a.0, a.1),
        omega_o: C64::new(omega, 0.0),
    }
}

fn strategy() -> impl Strategy<Value = FieldState> {
    (1e2..1e6f64, 0.0..TAU, 1e0..1e4f64, 0.0..TAU, 1e5..3e6f64)
        .prop_map(|(b, pb, a, pa, w)| fields((b, pb), (a, pa), w))
}

/// Σ over nodes of |N w g ρ| for both polarizations: the rounding scale of
/// the sums, which can cancel by orders of magnitude.
fn term_scale(resp: &EnsembleResponse, grid: &DetuningGrid, params: &AtomParams) -> (f64, f64) {
    let mut mu = 0.0;
    let mut s = 0.0;
    for (state, w) in resp.states.iter().zip(&grid.weights) {
        let rho = state.to_density();
        mu += w * rho.element(2, 1).norm();
        s += w * rho.element(3, 1).norm();
    }
    (grid.n_eff * params.g_mu * mu, grid.n_eff * params.g_s * s)
}

fn small_spec(kind: GridKind) -> InhomogeneousSpec {
    InhomogeneousSpec {
        n_opt: 15,
        n_spin: 15,
        kind,
        ..InhomogeneousSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn polarizations_are_linear_in_ion_number(f in strategy(), scale in 1.5..4.0f64) {
        let (system, _) = reference_system();
        let grid = build_detuning_grid_at(&small_spec(GridKind::Resonant), system.n_eff, 0.0, 0.0).unwrap();
        let more = grid.with_n_eff(scale * grid.n_eff);
        let r1 = ensemble_response(&grid, &system.atom, &f).unwrap();
        let r2 = ensemble_response(&more, &system.atom, &f).unwrap();
        prop_assert!((r2.pol_mu - r1.pol_mu * scale).norm() <= 1e-12 * r2.pol_mu.norm());
        prop_assert!((r2.pol_s - r1.pol_s * scale).norm() <= 1e-12 * r2.pol_s.norm());
        let k1 = signal_absorption_rate(&r1, &system.atom, &grid);
        let k2 = signal_absorption_rate(&r2, &system.atom, &more);
        prop_assert!(rel_diff(k2, scale * k1) <= 1e-12);
    }

    #[test]
    fn common_phase_of_b_and_a_is_a_symmetry(f in strategy(), phi in 0.0..TAU) {
        let (system, _) = reference_system();
        let grid = build_detuning_grid_at(&small_spec(GridKind::Uniform), system.n_eff, 0.0, 0.0).unwrap();
        let turn = C64::from_polar(1.0, phi);
        let rotated = FieldState { b: f.b * turn, a: f.a * turn, ..f };
        let r1 = ensemble_response(&grid, &system.atom, &f).unwrap();
        let r2 = ensemble_response(&grid, &system.atom, &rotated).unwrap();
        for (x, y) in r1.popdiff.iter().zip(&r2.popdiff) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        let (mu, s) = term_scale(&r1, &grid, &system.atom);
        prop_assert!((r2.pol_mu - r1.pol_mu * turn).norm() <= 1e-11 * mu);
        prop_assert!((r2.pol_s - r1.pol_s * turn).norm() <= 1e-11 * s);
    }

    /// Mirroring every detuning while conjugating the fields, with the sign
    /// of the signal field flipped, maps ρ to `U ρ* U` with `U = diag(1, −1, 1)`.
    #[test]
    fn detuning_mirror_conjugates_polarizations(f in strategy(), d_o in -5e7..5e7f64, d_mu in -1e7..1e7f64) {
        let (system, _) = reference_system();
        let spec = small_spec(GridKind::Resonant);
        let (d_o, d_mu) = (hz_to_rad(d_o), hz_to_rad(d_mu));
        let grid = build_detuning_grid_at(&spec, system.n_eff, d_o, d_mu).unwrap();
        let mirror = build_detuning_grid_at(&spec, system.n_eff, -d_o, -d_mu).unwrap();
        let mirrored = FieldState { b: f.b.conj(), a: -f.a.conj(), ..f };
        let r1 = ensemble_response(&grid, &system.atom, &f).unwrap();
        let r2 = ensemble_response(&mirror, &system.atom, &mirrored).unwrap();
        let (mu, s) = term_scale(&r1, &grid, &system.atom);
        prop_assert!((r2.pol_mu + r1.pol_mu.conj()).norm() <= 1e-11 * mu);
        prop_assert!((r2.pol_s - r1.pol_s.conj()).norm() <= 1e-11 * s);
    }

    #[test]
    fn popdiff_is_bounded(f in strategy()) {
        let (system, _) = reference_system();
        let grid = build_detuning_grid_at(&small_spec(GridKind::Resonant), system.n_eff, 0.0, 0.0).unwrap();
        let r = ensemble_response(&grid, &system.atom, &f).unwrap();
        prop_assert!(r.popdiff.iter().all(|p| (-1.0..=1.0).contains(p)));
        for s in &r.states {
            prop_assert!(s.to_density().check().is_ok());
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let (system, _) = reference_system();
    let grid = build_detuning_grid_at(
        &small_spec(GridKind::Resonant),
        system.n_eff,
        hz_to_rad(3e6),
        hz_to_rad(-1e6),
    )
    .unwrap();
    let base = fields((4e5, 0.3), (2e3, -1.1), 1.8e6);
    let jac = ensemble_response_with_jacobian(&grid, &system.atom, &base)
        .unwrap()
        .jacobian
        .unwrap();
    let coords = |f: &FieldState| [f.b.re, f.b.im, f.a.re, f.a.im];
    for k in 0..4 {
        let h = 1e-5 * if k < 2 { base.b.norm() } else { base.a.norm() };
        let shifted = |s: f64| {
            let mut c = coords(&base);
            c[k] += s;
            FieldState {
                b: C64::new(c[0], c[1]),
                a: C64::new(c[2], c[3]),
                ..base
            }
        };
        let plus = ensemble_response(&grid, &system.atom, &shifted(h)).unwrap();
        let minus = ensemble_response(&grid, &system.atom, &shifted(-h)).unwrap();
        let fd_mu = (plus.pol_mu - minus.pol_mu) / (2.0 * h);
        let fd_s = (plus.pol_s - minus.pol_s) / (2.0 * h);
        let scale_mu = jac.d_pol_mu.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let scale_s = jac.d_pol_s.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(
            (fd_mu - jac.d_pol_mu[k]).norm() < 1e-5 * scale_mu,
            "d pol_mu / d x{k}"
        );
        assert!(
            (fd_s - jac.d_pol_s[k]).norm() < 1e-5 * scale_s,
            "d pol_s / d x{k}"
        );
    }
}

#[test]
fn resonant_and_uniform_grids_agree_when_refined() {
    let (system, _) = reference_system();
    let f = fields((1.4e6, 0.0), (2e3, 1.0), 1.8e6);
    let resonant =
        build_detuning_grid_at(&InhomogeneousSpec::default(), system.n_eff, 0.0, 0.0).unwrap();
    let uniform = build_detuning_grid_at(
        &InhomogeneousSpec {
            n_opt: 1201,
            n_spin: 301,
            kind: GridKind::Uniform,
            ..InhomogeneousSpec::default()
        },
        system.n_eff,
        0.0,
        0.0,
    )
    .unwrap();
    let r = ensemble_response(&resonant, &system.atom, &f).unwrap();
    let u = ensemble_response(&uniform, &system.atom, &f).unwrap();
    assert!(
        (r.pol_mu - u.pol_mu).norm() < 2e-2 * u.pol_mu.norm(),
        "{} vs {}",
        r.pol_mu,
        u.pol_mu
    );
    assert!(
        (r.pol_s - u.pol_s).norm() < 2e-2 * u.pol_s.norm(),
        "{} vs {}",
        r.pol_s,
        u.pol_s
    );
}
