mod binio;
pub mod dataset;
pub mod eval;
pub mod index;
pub mod model;
pub mod numerics;

#[cfg(feature = "testing")]
pub mod testing;
