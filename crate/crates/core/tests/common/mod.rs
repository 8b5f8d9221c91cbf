#![allow(dead_code)]

use std::path::PathBuf;

use corridors::cli;
use corridors::config::RunConfig;
use corridors::mollify::{TileField, TiledField};

/// Default config writing under the cargo scratch directory, so the
/// res-1024 grids are built once and reused by later test runs.
pub fn cached_config() -> RunConfig {
    RunConfig {
        output_dir: scratch("fields"),
        ..RunConfig::default()
    }
}

pub fn scratch(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

pub fn cached_tile(cfg: &RunConfig) -> TileField {
    cli::build_field(cfg, false).expect("field build");
    cli::load_tile(cfg).expect("field load")
}

pub fn run_schedule_psi(cfg: &RunConfig) -> TiledField {
    TiledField::new(cfg.arrows.build().unwrap(), cached_tile(cfg))
}
