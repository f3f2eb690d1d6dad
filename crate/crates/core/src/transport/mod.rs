//! Wire format and the two interchangeable channel implementations.

mod channel;
mod message;

pub use channel::{in_process_pair, Channel, InProcessChannel, TcpChannel, TcpServer};
pub use message::{
    decode_body, decode_frame, decode_message, encode_message, frame_len, Message, LEN_PREFIX, MAX_FRAME_LEN,
    PROTOCOL_VERSION,
};
