//! Hardware-reliability workbench for neural-network inference.
//!
//! * [`quantnum`]: int8 / bfloat16 formats and bit surgery.
//! * [`netcore`]: training and (quantized, hookable) inference.
//! * [`dramfault`]: bit flips in weights stored in DRAM.
//! * [`macfault`]: stuck-at faults in systolic-array MACs.
//! * [`neurorel`]: aging and endurance of neuromorphic crossbars.

pub mod dramfault;
pub mod exec;
pub mod macfault;
pub mod netcore;
pub mod neurorel;
pub mod quantnum;
