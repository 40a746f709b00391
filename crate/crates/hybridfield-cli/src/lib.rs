//! Configuration, output, and file-format plumbing behind the
//! `hybridfield` benchmark binary, exposed as a library so integration
//! tests can parse configs and decode exports without shelling out twice.

pub mod config;
pub mod dictbin;
pub mod output;
