//! Framed little-endian binary protocol used between clients and the server.

mod codec;
pub mod frame;
pub mod messages;
pub mod skill;
pub mod state;

pub use codec::{DecodeError, EncodeError};
pub use frame::{
    decode_frame, encode_frame, Frame, FrameDecoder, FrameError, MessageType, MAX_PAYLOAD,
};
pub use messages::{ErrorCode, Message, MessageError, SubscribeMode};
pub use skill::{decode_skill_spec, encode_skill_spec};
pub use state::{decode_robot_state, encode_robot_state, STATE_BYTES};
