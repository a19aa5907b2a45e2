//! Acceptance gate for `lattice-magic`, kept in its own package so that
//! `cargo test --workspace` runs every other suite before it.
