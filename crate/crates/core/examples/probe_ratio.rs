// quick probe: one-step coarse-graining ratio at the desk-m1 preset
use eddylab::hierarchy::{ConstructionMode, StreamHierarchy};
use eddylab::params::{build_cascade, preset_config, renormalized_diffusivities};
use eddylab::pde::{solve_level, SolveConfig};
use eddylab::ScalarField;
use std::time::Instant;

fn main() {
    let cfg = preset_config("desk-m1").unwrap();
    let cascade = build_cascade(&cfg).unwrap();
    let n = 256;
    let mut h = StreamHierarchy::new(cascade.clone(), n, ConstructionMode::Lagrangian).unwrap();
    let c_star = h.effective_c_star();
    println!("effective c* = {c_star:.6}");
    let kappa_m = cascade.kappa_center(1);
    let mut cas2 = cascade.clone();
    cas2.c_star = c_star;
    let kappas = renormalized_diffusivities(&cas2, kappa_m).unwrap();
    println!("kappa_1 = {:.6e}, kappa_0 = {:.6e}", kappas[1], kappas[0]);
    let theta = ScalarField::from_fn(n, |x, _| 2.0f64.sqrt() * (2.0 * std::f64::consts::PI * x).sin());
    let scfg = SolveConfig { cfl_number: 0.85, ..Default::default() };
    let t0 = Instant::now();
    let (_, tr1) = solve_level(&mut h, 1, kappas[1], &theta, 1.0, &scfg).unwrap();
    println!("theta_1 solve: {} steps in {:.1}s, D1 = {:.6}, residual {:.2e}",
        tr1.steps, t0.elapsed().as_secs_f64(), tr1.total_dissipation(), tr1.balance_residual());
    let (_, tr0) = solve_level(&mut h, 0, kappas[0], &theta, 1.0, &scfg).unwrap();
    println!("D0 = {:.6}", tr0.total_dissipation());
    let r = tr1.total_dissipation() / tr0.total_dissipation();
    println!("R1 = D1/D0 = {:.4}  |R-1| = {:.4}", r, (r - 1.0).abs());
}
