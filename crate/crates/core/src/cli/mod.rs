//! Configuration, data files, result serialization and the mode runner
//! behind the `mtar` binary.

pub mod config;
pub mod run;
pub mod table;

pub use config::{Mode, RunConfig};
pub use run::{exit_code, read_comparison, run, ComparisonRow, ResultBundle};
pub use table::{
    parse_data_csv, parse_future_csv, read_json, round_sig, series_table, write_json, Table,
};
