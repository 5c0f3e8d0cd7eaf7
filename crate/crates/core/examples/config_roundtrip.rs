// Prints the default run configuration as TOML, parses it back and echoes the
// derived quantities (noise variance, wavelength, change-test dof).
//
// `cargo run --example config_roundtrip > my.toml` gives an editable starting point.

use nlos_track::config::{effective_config, parse_config, to_toml};
use nlos_track::pipeline::RunConfig;

fn main() -> nlos_track::Result<()> {
    let text = to_toml(&RunConfig::default())?;
    let parsed = parse_config(&text)?;
    assert_eq!(parsed, RunConfig::default());
    if std::env::args().any(|a| a == "--echo") {
        print!("{}", effective_config(&parsed)?);
    } else {
        print!("{text}");
    }
    Ok(())
}
