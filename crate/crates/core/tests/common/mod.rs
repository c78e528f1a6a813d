#![allow(dead_code)]

pub mod astgen;
pub mod execgen;
pub mod fixtures;
pub mod oracle;
