//! Benchmarks only; see `benches/`.

/// The shipped three-track plane scenario.
pub const SCENARIO: &str = include_str!("../../../configs/plane_three_tracks.json");
