//! Car-following analysis for vehicle trajectory data.
//!
//! The pipeline reads 10 Hz trajectories ([`ingest`]), labels vehicles by
//! length ([`classify`]), extracts sustained same-lane following episodes
//! ([`episode`]), scores each episode against a library of GHR parameter
//! clusters ([`ghr`], [`fit`]) and aggregates the results ([`stats`],
//! [`report`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod episode;
pub mod fit;
pub mod ghr;
pub mod ingest;
pub mod report;
pub mod stats;
pub mod synthetic;
pub mod units;

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ingest.md")]
    mod ingest {}
    #[doc = include_str!("../../../book/src/classes.md")]
    mod classes {}
    #[doc = include_str!("../../../book/src/episodes.md")]
    mod episodes {}
    #[doc = include_str!("../../../book/src/ghr.md")]
    mod ghr {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}
