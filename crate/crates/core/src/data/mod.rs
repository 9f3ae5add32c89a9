//! Dataset synthesis, CSV ingestion and grouping.

mod csv_io;
mod four_mode;
mod group;
mod lorenz;
mod manifest;
mod trajectory;

pub use csv_io::{
    load_csv, read_csv, read_groups, write_dataset, write_forecasts, write_groups, write_latents,
};
pub use four_mode::{
    four_mode_sequence, four_mode_splits, generate_four_mode, quadrant, FourModeConfig, HEADINGS,
};
pub use group::{group_by_prefix, Grouping};
pub use lorenz::{
    rk4_step, simulate_lorenz, simulate_sequence, LorenzConfig, LorenzCounts, LorenzData,
};
pub use manifest::Manifest;
pub use trajectory::{Dataset, Normalizer, Trajectory};
