// SPDX-License-Identifier: Apache-2.0

//! Bootstrapping an ICN deployment over SDN switches with Bloom-filter
//! source routing, and a deterministic simulator to measure it.

pub mod cli;
pub mod fabric;
pub mod fid;
pub mod protocol;
pub mod simnet;
pub mod topology;
