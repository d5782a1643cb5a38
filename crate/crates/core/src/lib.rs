//! Engine for a double-sided transparent teaching board.
//!
//! The board is the plane `z = 0` of a shared classroom frame; students sit on
//! the front (`z > 0`) and the teacher stands behind it (`z < 0`). Everything
//! drawn is composed once per tick into one display list per side.

pub mod analytics;
pub mod api;
pub mod config;
pub mod geometry;
pub mod protocol;
pub mod scene;
pub mod techniques;
pub mod tracking;
pub mod session;
pub mod scenario;
