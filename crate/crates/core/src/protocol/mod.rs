// SPDX-License-Identifier: Apache-2.0

//! Bootstrap protocol: wire codec, the new-node state machine, the
//! neighbor-side handlers and the TM engine.

pub mod fsm;
pub mod tm;
pub mod wire;

pub use fsm::{
    neighbor_on_update, responder_on_discovery, Action, FsmError, FsmState, Interface, NodeBootstrapFsm,
    NodeConfig, TimerId, TimerKind, Timers,
};
pub use tm::{Origin, TmEngine, TmOutput, TmReply};
pub use wire::{Message, WireError};
