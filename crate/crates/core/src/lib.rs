pub mod annotations;
pub mod cli;
pub mod evalclient;
pub mod metrics;
pub mod panodpo;
pub mod perturb;
pub mod prefdata;
pub mod rng;
