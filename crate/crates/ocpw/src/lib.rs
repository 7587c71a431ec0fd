//! Overlapped compression and parallel write (OCPW).
//!
//! A multi-rank writer compresses scientific fields with an error-bounded
//! lossy codec and writes them to a single shared container file at offsets
//! planned *before* compression from sampled ratio estimates. Compression and
//! positional writes overlap per rank, reserved regions absorb estimate
//! error, the rare overflow is appended at the file tail, and the order of
//! compression tasks is optimized to maximize the overlap.
//!
//! The crate splits into:
//! - [`codec`] — prediction-based error-bounded lossy compressor,
//! - [`models`] — compression/write throughput models and the sampling ratio
//!   estimator feeding the planner,
//! - [`planner`] — deterministic offset pre-computation and offset metadata,
//! - [`scheduler`] — compression-order optimization plus optimality oracles,
//! - [`engine`] — the multi-rank overlapped write pipeline and read path,
//! - [`simsys`] — discrete-event simulator of the four write methods,
//! - [`datagen`] — synthetic smooth fields, domain partitioning, raw ingest.

pub mod codec;
pub mod datagen;
// pub mod dataset;
// pub mod engine;
pub mod error;
pub mod models;
pub mod planner;
pub mod scheduler;
pub mod simsys;

pub use error::{Error, Result};

/// The four write strategies compared throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// (1) collective write of raw, uncompressed data.
    RawCollective,
    /// (2) compress everything, exchange exact sizes, then write.
    CompressCollective,
    /// (3) independent writes overlapped with compression, input order.
    Overlap,
    /// (4) method (3) with per-rank compression-order optimization.
    OverlapReorder,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::RawCollective,
        Method::CompressCollective,
        Method::Overlap,
        Method::OverlapReorder,
    ];

    pub fn index(self) -> u8 {
        match self {
            Method::RawCollective => 1,
            Method::CompressCollective => 2,
            Method::Overlap => 3,
            Method::OverlapReorder => 4,
        }
    }

    pub fn from_index(i: u8) -> Result<Method> {
        match i {
            1 => Ok(Method::RawCollective),
            2 => Ok(Method::CompressCollective),
            3 => Ok(Method::Overlap),
            4 => Ok(Method::OverlapReorder),
            other => Err(Error::invalid(format!("unknown method {other}, expected 1..=4"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Method::RawCollective => "raw-collective",
            Method::CompressCollective => "compress-collective",
            Method::Overlap => "overlap",
            Method::OverlapReorder => "overlap-reorder",
        };
        write!(f, "{name}")
    }
}
