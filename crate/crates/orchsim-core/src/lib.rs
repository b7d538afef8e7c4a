//! Deterministic simulation of QoS-buffered IoT gateway aggregators behind a
//! pub/sub subscription model, a reactive bandwidth orchestrator, and a
//! bandwidth-allocation-model admission broker over a capacity-constrained
//! backbone.
//!
//! The crate is organized around the moving parts of that pipeline:
//!
//! - [`model`]: shared vocabulary (QoS/traffic classes, topics, topology).
//! - [`bam`]: per-link admission control under MAM, RDM, or AllocTC-Sharing,
//!   with LSP lifecycle and preemption.
//! - [`aggregator`]: the gateway state machine with per-class buffers and
//!   token-bucket paced transmission.
//! - [`orchestrator`]: rate computation, reactive reallocation, and channel
//!   management through the BAM broker.
//! - [`netsim`]: the fixed-tick discrete-event kernel producing a totally
//!   ordered event log and per-tick metrics.
//! - [`scenario`]: the declarative experiment description, its validation,
//!   and the built-in proof-of-concept scenario.

pub mod aggregator;
pub mod bam;
pub mod model;
pub mod netsim;
pub mod orchestrator;
pub mod scenario;
