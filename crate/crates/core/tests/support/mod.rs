#![allow(dead_code)]

pub mod flow_oracle;
pub mod random_window;
