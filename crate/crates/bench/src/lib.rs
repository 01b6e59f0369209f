pub use dfq_core;
