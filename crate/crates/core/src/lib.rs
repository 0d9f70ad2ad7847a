//! Quality control for CT organ segmentation labels.
//!
//! A label is rendered as a frontal projection overlaid on the CT, cheap
//! Dice gating decides which label pairs need a closer look, and a
//! vision-language model critiques the survivors through a short scripted
//! conversation. Anything the model cannot settle goes to a human review
//! queue.

pub mod class;
pub mod cli;
pub mod critic;
pub mod dsc;
pub mod gateway;
pub mod projection;
pub mod prompt;
pub mod report;
pub mod review;
pub mod synthetic;
pub mod verdict;
pub mod volume;

pub use class::{Candidate, OrganClass};
