//! Region-based SmartPacket routing: topology and region algebra, the
//! packet header, switch forwarding logic, mobility and attack mitigation,
//! and a discrete-event simulator that runs them together.

pub mod defense;
pub mod dynamics;
pub mod header;
pub mod regions;
pub mod routing;
pub mod sim;
pub mod topology;
