//! Semi-discrete partial optimal transport on ball-restricted Laguerre
//! diagrams, and a free-surface fluid simulator built on it.

pub mod fluid;
pub mod geom;
pub mod io;
pub mod laguerre;
pub mod oracle;
pub mod ot;
pub mod par;
pub mod render;
pub mod restricted;

pub use geom::Vec3;
pub use par::Exec;
