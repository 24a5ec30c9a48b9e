pub mod assurance;
pub mod beta;
pub mod comparators;
pub mod config;
pub mod error;
pub mod interval;
pub mod par;
pub mod rng;
pub mod robustness;
pub mod run;
pub mod schema;
