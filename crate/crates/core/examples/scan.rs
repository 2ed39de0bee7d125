use fluxlab::evolution::{decompose_big_loop, IntegratorSettings};
use fluxlab::models::twist_dimer_toy;
use fluxlab::quasiadiabatic::FilterParams;

fn main() {
    let preset = twist_dimer_toy().unwrap();
    let sector = preset.sector().unwrap();
    for alpha in [1.2f64, 3.0, 6.0] {
        let params = FilterParams::new(alpha, 1, preset.spec.j_bound());
        for steps in [32usize, 64, 128, 256, 1024] {
            let d = decompose_big_loop(&preset.spec, &sector, 3, &params,
                &IntegratorSettings::default().with_steps(steps)).unwrap();
            println!("alpha={alpha} steps={steps:5}: N=3 residual {:.3e}", d.residual);
        }
    }
}
