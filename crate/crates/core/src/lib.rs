//! Counterfactual survival curves for a treated unit in a two-period panel
//! of right-censored data.
//!
//! The main estimator ([`ssc`]) combines control units' Kaplan–Meier curves
//! with weights learned by principal component regression on the
//! pre-period. [`cox`] provides the covariate-adjusted alternative for when
//! confounders are observed, and [`simgen`] plus [`bench`] reproduce the
//! simulation study used to validate both.
//!
//! ```no_run
//! use ssc_core::panel::{CsvSchema, DonorPool, PanelDataset};
//! use ssc_core::ssc::{estimate, make_grid, EstimateOptions};
//!
//! let data = PanelDataset::load_csv("panel.csv", &CsvSchema::default())?;
//! let pool = DonorPool::from_dataset(&data, "US")?;
//! let grid = make_grid(&data, 0.90, 100)?;
//! let result = estimate(&data, &pool, &grid, &EstimateOptions::default())?;
//! println!("{:?}", result.counterfactual);
//! # Ok::<(), ssc_core::Error>(())
//! ```

pub mod bench;
pub mod cox;
pub mod error;
pub mod format;
pub mod isotonic;
pub mod km;
pub mod lowrank;
pub mod metrics;
pub mod optim;
pub mod panel;
pub mod simgen;
pub mod special;
pub mod ssc;

pub use error::{Error, Result};
