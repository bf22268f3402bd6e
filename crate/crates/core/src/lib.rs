//! Submap-based RGB-D SLAM.
//!
//! Dense frame-to-model odometry tracks the camera against rigid TSDF
//! sub-maps; a sparse feature map ties sub-maps together through a bundle
//! adjustment backend; point-cloud descriptors drive loop detection and
//! relocalisation; fused sub-maps export a single global reconstruction.

pub mod backend;
pub mod cloud;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod manager;
pub mod odometry;
pub mod pipeline;
pub mod placerec;
pub mod sparse;
pub mod synthetic;
pub mod tsdf;
