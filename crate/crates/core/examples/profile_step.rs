use eddylab::hierarchy::{ConstructionMode, StreamHierarchy};
use eddylab::params::{build_cascade, preset_config};
use eddylab::pde::{solve_level, SolveConfig};
use eddylab::ScalarField;
use std::time::Instant;

fn main() {
    for n in [256usize, 1024] {
        let cfg = preset_config("desk-m2").unwrap();
        let cascade = build_cascade(&cfg).unwrap();
        let mut h = StreamHierarchy::new(cascade.clone(), n.max(1024.min(8*122)), ConstructionMode::Lagrangian);
        // desk-m2 needs n >= 976; for n=256 use desk-m1
        let (mut h, name, m) = if n >= 976 {
            (StreamHierarchy::new(cascade, n, ConstructionMode::Lagrangian).unwrap(), "desk-m2", 2)
        } else {
            let c1 = build_cascade(&preset_config("desk-m1").unwrap()).unwrap();
            (StreamHierarchy::new(c1, n, ConstructionMode::Lagrangian).unwrap(), "desk-m1", 1)
        };
        let _ = &mut h;
        let kappa = h.cascade().kappa_center(m);
        let theta = ScalarField::from_fn(n, |x, _| 2.0f64.sqrt() * (2.0 * std::f64::consts::PI * x).sin());
        let scfg = SolveConfig { cfl_number: 0.85, dt_max: 1e-3, ..Default::default() };
        // short horizon: measure steady-state per-step cost
        let horizon = 0.02;
        let t0 = Instant::now();
        let (_, tr) = solve_level(&mut h, m, kappa, &theta, horizon, &scfg).unwrap();
        let el = t0.elapsed().as_secs_f64();
        println!("{name} n={n}: {} steps in {el:.2}s -> {:.1} ms/step", tr.steps, 1e3 * el / tr.steps as f64);
    }
}
