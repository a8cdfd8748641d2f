//! Command-line pipeline around the `carfollow` library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod selftest;
