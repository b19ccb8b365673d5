//! Switch and link models.
//!
//! Switches are store-and-forward: a frame is matched once it has fully
//! arrived and its copies join the egress FIFOs after the hardware forwarding
//! delay. Links serialize one frame at a time per direction.

mod flow;
mod frame;
mod link;
mod switch;

pub use flow::{Action, FlowMatch, FlowModOp, FlowRule, FlowTable, FlowTableError, RuleId};
pub use frame::{Frame, MacAddr, FRAME_OVERHEAD_BYTES, MIN_FRAME_BYTES};
pub use link::{serialization_delay, EgressPort, Transmission};
pub use switch::{Forwarding, MacTable, SwitchModel, SwitchOutput};
