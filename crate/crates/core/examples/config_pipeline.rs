//! Drive the command layer from a configuration file: sweep, then invert
//! the persisted dataset.

use fracholtz::commands::{self, Command, Overrides};
use fracholtz::config::RunConfig;
use std::path::Path;

fn main() -> fracholtz::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml");
    let out = std::env::temp_dir().join("fracholtz-pipeline");
    let cfg = Overrides {
        out: Some(out),
        ..Overrides::default()
    }
    .apply(&RunConfig::load(&path)?)?;
    println!("configuration fingerprint {}", cfg.fingerprint()?);
    for command in [Command::Sweep, Command::InvertSource, Command::Asym, Command::Runge] {
        let outcome = commands::run_command(&cfg, command)?;
        println!("{command}: {} (exit {})", outcome.summary, outcome.exit_code);
        for f in outcome.files {
            println!("  {}", f.display());
        }
    }
    Ok(())
}
