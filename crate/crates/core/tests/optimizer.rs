use quantum_otto::cycle::{cycle_power, EngineParams, Integrator, Schedule};
use quantum_otto::optimize::{optimize_allocations, OptimizeOptions};

fn brute_force(params: &EngineParams, tau: f64, steps: usize) -> (Schedule, f64) {
    let mut best = (Schedule::reference(), f64::NEG_INFINITY);
    for a in 0..=steps {
        for b in 0..=steps - a {
            for c in 0..=steps - a - b {
                let d = steps - a - b - c;
                let s = Schedule::from_array([a, b, c, d].map(|k| tau * k as f64 / steps as f64));
                if s.tau_h == 0.0 || s.tau_c == 0.0 {
                    continue;
                }
                if let Ok(p) = cycle_power(params, &s, &Integrator::default()) {
                    if p > best.1 {
                        best = (s, p);
                    }
                }
            }
        }
    }
    best
}

#[test]
fn optimum_beats_the_simplex_grid() {
    let params = EngineParams::reference();
    for tau in [1.2, 2.10998] {
        let (grid_schedule, grid_power) = brute_force(&params, tau, 20);
        let opt = optimize_allocations(&params, tau, &OptimizeOptions::default()).unwrap();
        assert!(
            opt.power >= grid_power - 1e-9,
            "τ={tau}: optimizer {} < grid {} at {:?}",
            opt.power,
            grid_power,
            grid_schedule
        );
        assert!((opt.schedule.total() - tau).abs() < 1e-12);
    }
}

#[test]
fn optimum_is_a_local_maximum() {
    let params = EngineParams::reference();
    let opts = OptimizeOptions::default();
    let tau = 2.10998;
    let opt = optimize_allocations(&params, tau, &opts).unwrap();
    let base = opt.schedule.as_array();
    let at_floor = |x: f64| x <= 2.0 * opts.floor * tau;
    for delta in [1e-3, 1e-4] {
        for from in 0..4 {
            for to in 0..4 {
                if from == to || at_floor(base[from]) {
                    continue;
                }
                let mut moved = base;
                let step = (delta * tau).min(base[from] - opts.floor * tau);
                moved[from] -= step;
                moved[to] += step;
                let p =
                    cycle_power(&params, &Schedule::from_array(moved), &opts.integrator).unwrap();
                assert!(
                    p <= opt.power + 1e-9,
                    "moving {step} from {from} to {to} gains {}",
                    p - opt.power
                );
            }
        }
    }
}

#[test]
fn same_seed_same_optimum() {
    let params = EngineParams::reference();
    let opts = OptimizeOptions {
        seed: 3,
        ..OptimizeOptions::default()
    };
    let a = optimize_allocations(&params, 1.5, &opts).unwrap();
    let b = optimize_allocations(&params, 1.5, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn isochores_take_almost_all_the_time() {
    let opt = optimize_allocations(
        &EngineParams::reference(),
        2.10998,
        &OptimizeOptions::default(),
    )
    .unwrap();
    let s = opt.schedule;
    assert!((s.tau_h - 1.0795).abs() / 1.0795 < 0.15);
    assert!((s.tau_c - 1.0088).abs() / 1.0088 < 0.15);
    assert!(s.tau_ab + s.tau_ba < 0.01);
}
