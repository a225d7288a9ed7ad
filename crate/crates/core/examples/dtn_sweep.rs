//! Exterior measurements over a frequency grid, persisted as JSON and CSV.

use fracholtz::commands;
use fracholtz::config::{DEFAULT_CONFIG, RunConfig};
use fracholtz::forward::{self, Scenario};
use fracholtz::asymptotics::FreqSource;
use fracholtz::io::DtnDataset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn symmetry_gap(scenario: &Scenario, seed: u64) -> fracholtz::Result<f64> {
    let grid = scenario.grid();
    let sourceless = scenario.with_source(FreqSource::zero(grid))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = forward::random_smooth(grid, &mut rng).restricted(grid.exterior_mask());
    let h = forward::random_smooth(grid, &mut rng).restricted(grid.exterior_mask());
    Ok(sourceless.dtn_symmetry_check(0.5, &psi, &h)?.gap)
}

fn main() -> fracholtz::Result<()> {
    let cfg = RunConfig::from_toml(DEFAULT_CONFIG)?;
    let scenario = cfg.build_scenario()?;
    let dataset = commands::generate_sweep(&cfg, &scenario)?;
    println!(
        "{} records, {} excitations, {} measurement nodes",
        dataset.records.len(),
        dataset.excitation_ids().len(),
        dataset.o2_nodes.len()
    );
    for r in dataset.excitation(1) {
        println!("excitation 1, omega {:.4e}: |Lambda psi| = {:.6e}", r.omega, r.measurement.norm());
    }

    let dir = std::env::temp_dir().join("fracholtz-dtn-sweep");
    std::fs::create_dir_all(&dir).expect("temporary directory");
    let path = dir.join("sweep.json");
    std::fs::write(&path, dataset.to_json()?).expect("write dataset");
    let back = DtnDataset::read(&path)?;
    println!("wrote {}; reread identical: {}", path.display(), back == dataset);
    println!("DtN pairing symmetry gap: {:.2e}", symmetry_gap(&scenario, cfg.seed)?);
    Ok(())
}
