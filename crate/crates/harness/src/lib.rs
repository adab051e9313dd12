//! Experiment harness: configuration, per-h pipelines, bound suites and
//! schema-checked report files behind the `reslab` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod suites;
pub mod commands;
