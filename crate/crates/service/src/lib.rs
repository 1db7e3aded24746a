//! Live cases over HTTP, an append-only event log with bit-exact replay, and
//! the `qabd` command line.
//!
//! ```
//! use qabd_service::store::SessionStore;
//!
//! let store = SessionStore::in_memory();
//! let id = store.create(qabd::fixture("drift").unwrap().case).unwrap();
//! let view = store.read_case(&id, |s| s.view()).unwrap();
//! assert_eq!(view.revision, 5);
//! ```

pub mod cli;
pub mod http;
pub mod log;
pub mod replay;
pub mod session;
pub mod store;

pub use log::{LogEvent, LogRecord};
pub use session::{ForkRequest, Session, SessionError, StateView};
pub use store::{PushEvent, SessionStore};
