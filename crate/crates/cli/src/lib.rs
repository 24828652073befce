//! IO, file formats and command implementations for the part segmentation
//! pipeline. The algorithms live in `partcut-core`; this crate handles
//! datasets on disk, the CLI surface, fixtures and reports.

pub mod commands;
pub mod formats;
pub mod manifest;
pub mod synth;
