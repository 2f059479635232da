//! Series container, CSV I/O, synthetic generators and benchmark loaders.

pub mod benchmark;
pub mod csv;
pub mod npy;
mod series;
pub mod synth;

pub use benchmark::{load_benchmark_layout, BenchmarkSeries, DatasetLayout};
pub use csv::{load_csv, save_csv, SeriesReader};
pub use series::{default_names, LabeledSeries, TimeAxis};
