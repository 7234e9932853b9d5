//! IO and front-end layer over `plansteer-core`: file formats, embedding
//! providers, and report rendering, shared by the `plansteer` binary and
//! the integration tests.

pub mod formats;
pub mod provider;
pub mod report;
