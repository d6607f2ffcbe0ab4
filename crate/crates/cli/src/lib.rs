//! Library surface of the batch front-end.
//!
//! The binary in `main.rs` is a thin argument-parsing shell over
//! [`commands`]; integration tests call the command functions directly
//! with a [`config::RunConfig`].

pub mod commands;
pub mod config;
