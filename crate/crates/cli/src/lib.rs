//! Command line and HTTP front ends for the npcbench toolkit.

pub mod commands;
pub mod server;
