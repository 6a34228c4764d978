//! Serving side of the conversational agent: model directories, chat
//! sessions with A/B ranking, vote collection, and the HTTP/JSON API.

pub mod agent;
pub mod api;
pub mod bundle;
pub mod error;
pub mod settings;

pub use agent::{Agent, AppState, ChatReply, LineView, Report, SessionView};
pub use bundle::ModelBundle;
pub use error::{Result, ServiceError};

/// Environment variable holding the `host:port` the server listens on.
pub const LISTEN_ENV: &str = "GCA_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
