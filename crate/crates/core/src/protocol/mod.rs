//! M1–M4 messages, their canonical line encoding, and transport bindings.

mod codec;
mod message;
mod transport;

pub use codec::{decode, encode, encode_string, to_value, DecodeError};
pub use message::{Ack, Message, MessageKind, Payload, Revision};
pub use transport::{Delivery, FifoLinks, FrameError, InProcessTransport, LineReader, LineWriter};
