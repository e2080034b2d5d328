//! Core of the skill-based arm control stack: kinematics, the simulated arm,
//! skills, virtual walls, the 1 kHz control loop and the wire protocol.

pub mod config;
pub mod control;
pub mod kinematics;
pub mod protocol;
pub mod safety;
pub mod sim;
pub mod skill;
