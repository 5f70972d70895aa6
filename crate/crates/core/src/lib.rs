pub mod engine;
pub mod geometry;
pub mod intent;
pub mod session;
pub mod translator;
