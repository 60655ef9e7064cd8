//! Planning and emulation for chunk-based aerial 3D printing.
//!
//! The pipeline decomposes a watertight mesh into printable chunks with a
//! beam search over planar cuts kept in a BSP tree, orders and allocates the
//! chunks to UAVs, slices them into toolpaths and flies those paths with a
//! nonlinear MPC over a quadrotor model while virtually depositing material.

pub mod bsp;
pub mod geometry;
pub mod search;
pub mod toolpath;
pub mod allocation;
pub mod control;
pub mod mission;
