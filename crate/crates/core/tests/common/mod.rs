#![allow(dead_code)]

pub mod dense;

use qnc_core::Prime;

pub fn prime(p: u64) -> Prime {
    Prime::new(p).unwrap()
}
