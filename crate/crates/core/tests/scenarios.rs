mod common;

use common::reference_system;
use delta_sim::cavity::Numerics;
use delta_sim::output::{read_result_from, write_result_to};
use delta_sim::scenarios::{
    optical_power_sweep, population_map, run_sweep, sweep_2d, Axis, AxisScale, Output, Provenance,
    SweepParam, SweepSpec,
};

fn plane(reverse: bool) -> SweepSpec {
    let o = Axis::new(SweepParam::DeltaO, -4e6, 4e6, 3, AxisScale::Linear);
    let mu = Axis::new(SweepParam::DeltaMu, -1e6, 1e6, 3, AxisScale::Linear);
    SweepSpec {
        axes: if reverse { vec![mu, o] } else { vec![o, mu] },
        outputs: vec![Output::Eta, Output::KappaAbs],
    }
}

#[test]
fn axis_order_does_not_change_cells() {
    let (system, numerics) = reference_system();
    let forward = run_sweep(&system, &numerics, &plane(false), Provenance::new("t")).unwrap();
    let reversed = run_sweep(&system, &numerics, &plane(true), Provenance::new("t")).unwrap();
    assert_eq!(forward.cell_count(), 9);
    let eta_f = forward.output(Output::Eta).unwrap();
    let eta_r = reversed.output(Output::Eta).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = (eta_f[3 * i + j], eta_r[3 * j + i]);
            assert!((a - b).abs() <= 1e-12 * a.abs(), "({i},{j}) {a} vs {b}");
        }
    }
    assert_eq!(forward.coords(5), vec![0.0, 1e6]);
}

#[test]
fn unconverged_cells_are_flagged_not_fatal() {
    let (system, numerics) = reference_system();
    let tight = Numerics {
        max_iter: 2,
        ..numerics
    };
    let r = sweep_2d(&system, &tight, &plane(false), Provenance::new("t")).unwrap();
    assert!(!r.failures.is_empty());
    for (k, _) in &r.failures {
        assert!(!r.converged[*k]);
        assert!(r.values.iter().all(|col| col[*k].is_nan()));
    }
    let mut buf = Vec::new();
    write_result_to(&r, &mut buf).unwrap();
    let back = read_result_from(buf.as_slice()).unwrap();
    assert_eq!(back.converged, r.converged);
}

#[test]
fn wrong_axes_are_rejected() {
    let (system, numerics) = reference_system();
    assert!(sweep_2d(&system, &numerics, &plane(true), Provenance::new("t")).is_err());
}

#[test]
fn no_pump_no_signal() {
    let (system, numerics) = reference_system();
    let spec = SweepSpec {
        axes: vec![Axis::new(SweepParam::POpt, 0.0, 4e-3, 3, AxisScale::Linear)],
        outputs: vec![],
    };
    let r = optical_power_sweep(&system, &numerics, &spec, Provenance::new("t")).unwrap();
    let eta = r.output(Output::Eta).unwrap();
    assert_eq!(eta[0], 0.0);
    assert!(eta[1] > 0.0 && eta[2] > eta[1]);
}

#[test]
fn csv_is_deterministic() {
    let (system, numerics) = reference_system();
    let render = || {
        let r = sweep_2d(&system, &numerics, &plane(false), Provenance::new("t")).unwrap();
        let mut buf = Vec::new();
        write_result_to(&r, &mut buf).unwrap();
        buf
    };
    assert_eq!(render(), render());
}

#[test]
fn population_map_lattice() {
    let (system, numerics) = reference_system();
    let (map, _) = population_map(&system, &numerics, 9, 40e6).unwrap();
    assert_eq!((map.delta_o.len(), map.delta_mu.len()), (9, 9));
    let span = |v: &[f64]| (v[v.len() - 1] - v[0]) / std::f64::consts::TAU;
    assert!((span(&map.delta_o) - 80e6).abs() < 1.0);
    assert!((span(&map.delta_mu) - 80e6).abs() < 1.0);
    for i in 0..9 {
        for j in 0..9 {
            assert!((-1.0..=1.0).contains(&map.get(i, j)));
        }
    }
}
