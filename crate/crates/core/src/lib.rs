//! Cost models, functional two-party protocol executors and a discrete-event simulator for
//! private-inference serving.

pub mod costmodel;
pub mod desim;
pub mod exec;
pub mod netarch;
pub mod protocol;
