//! Depth-3 Lagrangian machinery: gridded inverse maps of the level-2 field.

use eddylab::field::TWO_PI;
use eddylab::hierarchy::{ConstructionMode, StreamHierarchy};
use eddylab::params::{build_cascade, preset_config};
use eddylab::pde::{solve_level, SolveConfig};
use eddylab::ScalarField;

fn m3_hierarchy() -> StreamHierarchy {
    let c = build_cascade(&preset_config("desk-m3").unwrap()).unwrap();
    StreamHierarchy::new(c, 1024, ConstructionMode::Lagrangian).unwrap()
}

#[test]
fn level_three_increment_is_sane() {
    let mut h = m3_hierarchy();
    let c = h.cascade().clone();
    // the first nonzero (odd) shear window of level 3 sits around t = tau_3;
    // march into its plateau in solver-sized steps
    let tau3 = c.tau(3);
    let t_target = tau3;
    let dt = 5e-5;
    let steps = (t_target / dt).ceil() as usize;
    for i in 1..=steps {
        h.advance_to(i as f64 * dt).unwrap();
    }
    let t = steps as f64 * dt;
    let inc = h.lagrangian_stream_increment(3, t).unwrap();
    // quadrature mean of the composed wave is alias-small
    assert!(inc.mean().abs() < 1e-8, "mean {}", inc.mean());
    let amp = c.stream_amplitude(3);
    assert!(inc.max_abs() <= amp * 1.0001);
    assert!(inc.max_abs() > 0.5 * amp, "window should be active: {}", inc.max_abs());
}

#[test]
fn velocity_sup_bound_holds_at_depth_three() {
    let mut h = m3_hierarchy();
    let c = h.cascade().clone();
    let t = c.tau(3);
    let dt = 5e-5;
    let steps = (t / dt).ceil() as usize;
    for i in 1..=steps {
        h.advance_to((i as f64 * dt).min(t)).unwrap();
    }
    let v3 = h.velocity(3, t).unwrap();
    let v2 = h.velocity(2, t).unwrap();
    let mut diff = 0.0f64;
    for i in 0..v3.x.len() {
        let dx = v3.x[i] - v2.x[i];
        let dy = v3.y[i] - v2.y[i];
        diff = diff.max(dx.hypot(dy));
    }
    let bound = TWO_PI * c.eps(3).powf(c.alpha) * 1.25;
    assert!(diff <= bound, "increment sup {diff} above {bound}");
    assert!(diff > 0.0);
}

#[test]
fn short_depth_three_solve_keeps_energy_books() {
    let mut h = m3_hierarchy();
    let kappa3 = h.cascade().kappa_center(3);
    let theta = ScalarField::from_fn(1024, |x, _| 2.0f64.sqrt() * (TWO_PI * x).sin());
    let cfg = SolveConfig { cfl_number: 0.85, ..Default::default() };
    let (out, trace) = solve_level(&mut h, 3, kappa3, &theta, 0.005, &cfg).unwrap();
    assert!(trace.balance_residual() <= 1e-12, "residual {}", trace.balance_residual());
    assert!(out.mean().abs() < 1e-12);
    assert!(trace.total_dissipation() > 0.0);
}
