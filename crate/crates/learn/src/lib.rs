//! Learners for the lane-merge tasks: classic classifiers over the extracted
//! feature vectors and a dueling DQN that drives the merging vehicle.

pub mod classify;
pub mod dqn;
