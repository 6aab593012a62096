//! Fits the Euler mean-bias constant `C` in `|mean_euler - mean| <= C * max_step`
//! on the Brownian bridge (x = 0, y = 1) over geometric grids to `1 - 1e-4`,
//! by least squares through the origin.
//!
//! Usage: `calibrate_euler_bias [paths] [seed]` (defaults: 1000000, 2024).

use pinbridge::sim::DEFAULT_T_END;
use pinbridge::{make_grid, monte_carlo, CalculusCache, FamilySpec, GridMode, Method, PinnedLaw};

fn main() -> pinbridge::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_paths: usize = args.next().map_or(1_000_000, |a| a.parse().expect("paths"));
    let seed: u64 = args.next().map_or(2024, |a| a.parse().expect("seed"));
    let family = FamilySpec::new("brownian_bridge").build()?;
    let cache = CalculusCache::new(&family);
    let law = PinnedLaw::new(&cache, 0.0, 1.0);
    let (mut num, mut den) = (0.0, 0.0);
    println!("n,max_step,sup_error,se_at_sup");
    for n in [64, 128, 256, 512] {
        let grid = make_grid(n, GridMode::Geometric, DEFAULT_T_END)?;
        let r = monte_carlo(&family, 0.0, 1.0, &grid, n_paths, seed, Method::Euler)?;
        let (mut err, mut se) = (0.0, 0.0);
        for (k, &t) in grid.nodes().iter().enumerate() {
            let e = (r.mean[k] - law.mean(t)?).abs();
            if e > err {
                err = e;
                se = r.se_mean[k];
            }
        }
        let step = grid.max_step();
        println!("{n},{step:.6e},{err:.6e},{se:.6e}");
        num += err * step;
        den += step * step;
    }
    println!("C = {:.6e}", num / den);
    Ok(())
}
