#![allow(dead_code)]

pub use ed4_testkit::*;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ed4")
}
