//! Messaging interface for the simulator: request/reply services, topics
//! with snapshot-first subscriptions, and a revisioned code store, carried as
//! JSON envelopes over TCP.

pub mod channels;
pub mod envelope;
pub mod hub;
pub mod server;
pub mod store;

pub use envelope::{Envelope, ErrorCode, Kind};
pub use hub::{ConnId, Delivery, Hub, Stepping};
pub use server::{serve, ServerConfig, DEFAULT_PORT, PORT_ENV};
pub use store::{CodeStore, CodeStoreEntry};
