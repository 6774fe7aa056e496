//! Experiment drivers: bias-prefactor regression on the circle, committor
//! RMSE sweeps in 2-D, and the hexagon KDE study.

pub mod bias;
pub mod config;
pub mod fit;
pub mod hexagon;
pub mod rmse;
pub mod run;
pub mod scaling;
pub mod svg;
