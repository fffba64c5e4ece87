//! File formats, run directories and the command-line front end of the
//! `iipmix_core` forecaster.

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod run;
