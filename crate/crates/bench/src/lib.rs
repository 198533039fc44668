//! Benchmark harness for the kernel ridge regression solver: run
//! configuration, CSV ingestion, JSONL convergence logs and bound reports.

pub mod bench;
pub mod config;
pub mod ingest;
