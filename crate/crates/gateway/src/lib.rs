//! HTTP gateway and command-line client for the component hub.
//!
//! [`server::serve`] opens storage from a [`config::ServiceConfig`] and
//! exposes the registry over HTTP; [`cli`] is a thin client of that API.

pub mod cli;
pub mod config;
pub mod http;
pub mod remote;
pub mod server;
pub mod service;

pub use config::ServiceConfig;
pub use server::{serve, serve_service, ServiceHandle};
pub use service::{Service, StartError};
