//! Maps and start/goal rosters shipped with the crate.
//!
//! Training maps are 12, 20 and 40 m square; test maps are two 40 m layouts
//! and one 60 m layout. Each map has a committed 15-pair roster. All were
//! produced by [`crate::worldmap::generate_map`] at fixed seeds.

use crate::worldmap::{load_map, GridMap, MapError, ScenarioRoster};

macro_rules! bundle {
    ($($id:literal),* $(,)?) => {
        &[$(($id, include_str!(concat!("../assets/", $id, ".gridmap")), include_str!(concat!("../assets/", $id, ".roster")))),*]
    };
}

static BUNDLED: &[(&str, &str, &str)] =
    bundle!("train-12", "train-20", "train-40", "test-40a", "test-40b", "test-60");

pub const TRAINING_MAPS: [&str; 3] = ["train-12", "train-20", "train-40"];
pub const TEST_MAPS: [&str; 3] = ["test-40a", "test-40b", "test-60"];

pub fn ids() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(id, _, _)| *id)
}

pub fn map_text(id: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(i, _, _)| *i == id)
        .map(|(_, m, _)| *m)
}

pub fn roster_text(id: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(i, _, _)| *i == id)
        .map(|(_, _, r)| *r)
}

pub fn map(id: &str) -> Option<Result<GridMap, MapError>> {
    map_text(id).map(load_map)
}

pub fn roster(id: &str) -> Option<Result<ScenarioRoster, MapError>> {
    roster_text(id).map(|t| ScenarioRoster::parse(id, t))
}
