pub mod api;
pub mod config;
pub mod demo;
pub mod openapi;
pub mod store;
