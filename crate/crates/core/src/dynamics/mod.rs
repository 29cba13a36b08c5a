mod cache;
mod model;
mod presets;
mod stt;

pub use cache::*;
pub use model::*;
pub use presets::*;
pub use stt::*;
