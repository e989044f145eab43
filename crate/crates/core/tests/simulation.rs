use gfc_core::benchmark::{scenario, BenchmarkEvent};
use gfc_core::controllers::{ControllerSpec, ControllerVariant};
use gfc_core::simulator::{run_matrix, run_scenario, Event, ScenarioSpec, TimeSeries};
use gfc_core::GfcError;

fn short(variant: ControllerVariant, event: BenchmarkEvent, duration: f64) -> ScenarioSpec {
    let mut s = scenario(variant, event);
    s.duration = duration;
    s.event_time = 0.2;
    s
}

fn tail_mean(x: &[f64], n: usize) -> f64 {
    x[x.len() - n..].iter().sum::<f64>() / n as f64
}

#[test]
fn undisturbed_runs_stay_at_equilibrium() {
    for v in ControllerVariant::ALL {
        let run = run_scenario(&short(v, BenchmarkEvent::None, 0.5)).unwrap();
        for name in TimeSeries::CHANNELS.iter().skip(1) {
            let x = run.series.channel(name).unwrap();
            let spread = x.iter().map(|a| (a - x[0]).abs()).fold(0.0, f64::max);
            assert!(spread < 1e-6, "{v} {name} drifts by {spread}");
        }
        assert!((run.series.p[0] - 1.0).abs() < 1e-9);
        assert!((run.series.v_mag[0] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let spec = short(ControllerVariant::ProportionalResonant, BenchmarkEvent::PhaseJump, 0.4);
    let a = run_scenario(&spec).unwrap();
    let b = run_scenario(&spec).unwrap();
    assert_eq!(a.series, b.series);
    let parallel = run_matrix(&[spec, spec]);
    for r in parallel {
        assert_eq!(r.unwrap().series, a.series);
    }
}

#[test]
fn grid_angle_is_a_gauge_freedom() {
    for v in ControllerVariant::ALL {
        let spec = short(v, BenchmarkEvent::LoadStep, 0.5);
        let mut rotated = spec;
        rotated.system.network.grid.phase = 1.1;
        let a = run_scenario(&spec).unwrap().series;
        let b = run_scenario(&rotated).unwrap().series;
        for (x, y) in [(&a.p, &b.p), (&a.q, &b.q), (&a.v_mag, &b.v_mag), (&a.i_mag, &b.i_mag), (&a.f_ctrl, &b.f_ctrl)] {
            let d = x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(d < 1e-9, "{v}: traces differ by {d}");
        }
    }
}

#[test]
fn nothing_moves_before_the_event() {
    for event in [BenchmarkEvent::LoadStep, BenchmarkEvent::PhaseJump] {
        for v in ControllerVariant::ALL {
            let mut spec = short(v, event, 0.4);
            spec.event_time = 0.2 + 0.3 * spec.dt;
            let run = run_scenario(&spec).unwrap();
            // snapped to the nearest step boundary
            assert!((run.event_time - 0.2).abs() < 1e-12);
            let ts = &run.series;
            let first = (0..ts.len())
                .find(|&k| {
                    TimeSeries::CHANNELS[1..].iter().any(|name| {
                        let x = ts.channel(name).unwrap();
                        (x[k] - x[0]).abs() > 1e-6
                    })
                })
                .expect("the event moves the system");
            assert!(ts.t[first] >= run.event_time - 1e-12, "{v} {event}: moved at {}", ts.t[first]);
        }
    }
}

#[test]
fn power_balance_holds_along_trajectories() {
    for v in ControllerVariant::ALL {
        let run = run_scenario(&short(v, BenchmarkEvent::LoadStep, 0.5)).unwrap();
        assert!(run.max_power_balance_residual < 1e-9, "{v}: {}", run.max_power_balance_residual);
    }
}

#[test]
fn null_load_step_changes_nothing() {
    let base = short(ControllerVariant::VsmInner, BenchmarkEvent::None, 0.4);
    let mut null = base;
    null.event = Event::LoadStep { p_load: 0.0 };
    assert_eq!(run_scenario(&base).unwrap().series, run_scenario(&null).unwrap().series);
}

#[test]
fn droop_is_the_low_inertia_limit_of_the_vsm() {
    let droop = scenario(ControllerVariant::Droop, BenchmarkEvent::LoadStep);
    let mut vsm = scenario(ControllerVariant::VsmInner, BenchmarkEvent::LoadStep);
    let (k_p, k_q) = match droop.controller {
        ControllerSpec::Droop { droop, .. } => (droop.k_p, droop.k_q),
        _ => unreachable!(),
    };
    if let ControllerSpec::VsmInner { vsm, .. } = &mut vsm.controller {
        vsm.j_inertia = 1e-4;
        vsm.d_p = 1.0 / k_p;
        vsm.k_q = k_q;
    }
    vsm.duration = 1.6;
    let mut droop = droop;
    droop.duration = 1.6;
    let a = run_scenario(&droop).unwrap().series;
    let b = run_scenario(&vsm).unwrap().series;
    let gap = a.p.iter().zip(&b.p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap < 0.005, "max power gap {gap}");

    // and the gap shrinks with the inertia
    if let ControllerSpec::VsmInner { vsm: g, .. } = &mut vsm.controller {
        g.j_inertia = 1e-3;
    }
    let c = run_scenario(&vsm).unwrap().series;
    let wider = a.p.iter().zip(&c.p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(wider > gap);
}

#[test]
fn phase_jump_returns_to_the_original_operating_point() {
    for v in ControllerVariant::ALL {
        let run = run_scenario(&scenario(v, BenchmarkEvent::PhaseJump)).unwrap();
        let ts = &run.series;
        let n = 200;
        for (name, x) in [("p", &ts.p), ("q", &ts.q), ("v", &ts.v_mag)] {
            let drift = (tail_mean(x, n) - x[0]).abs();
            assert!(drift < 1e-3, "{v} {name}: {drift}");
        }
    }
}

#[test]
fn outer_and_inner_vsm_share_equilibria() {
    let outer = run_scenario(&scenario(ControllerVariant::VsmOuter, BenchmarkEvent::PhaseJump)).unwrap();
    let inner = run_scenario(&scenario(ControllerVariant::VsmInner, BenchmarkEvent::PhaseJump)).unwrap();
    let n = 200;
    for (a, b) in [
        (&outer.series.p, &inner.series.p),
        (&outer.series.q, &inner.series.q),
        (&outer.series.v_mag, &inner.series.v_mag),
    ] {
        assert!((a[0] - b[0]).abs() < 1e-9);
        assert!((tail_mean(a, n) - tail_mean(b, n)).abs() < 1e-4);
    }
    // after the load step both hold the active power reference
    for v in [ControllerVariant::VsmOuter, ControllerVariant::VsmInner] {
        let run = run_scenario(&scenario(v, BenchmarkEvent::LoadStep)).unwrap();
        assert!((tail_mean(&run.series.p, n) - 1.0).abs() < 1e-4);
    }
}

#[test]
fn unstable_gains_are_reported_as_divergence() {
    // a current loop far beyond what the integration step can resolve
    let mut spec = scenario(ControllerVariant::Droop, BenchmarkEvent::LoadStep);
    if let ControllerSpec::Droop { inner, .. } = &mut spec.controller {
        inner.k_pc = 40.0;
    }
    match run_scenario(&spec) {
        Err(GfcError::Diverged { time, value, .. }) => {
            assert!(time >= spec.event_time && time <= spec.duration);
            assert!(!(value.abs() <= 1e6));
        }
        other => panic!("expected divergence, got {:?}", other.map(|r| r.final_state.t)),
    }
}

#[test]
fn decimation_keeps_every_nth_sample() {
    let mut spec = short(ControllerVariant::Droop, BenchmarkEvent::LoadStep, 0.4);
    let full = run_scenario(&spec).unwrap().series;
    spec.decimation = 4;
    let coarse = run_scenario(&spec).unwrap().series;
    assert_eq!(coarse, full.decimate(4));
}
