#![allow(dead_code)]

pub mod dd;
pub mod grad;
pub mod qmvit_dd;
