//! Files, run directories and the `solopo` command line around `solopo-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod run;
