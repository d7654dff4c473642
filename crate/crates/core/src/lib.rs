//! Option pricing with heterogeneous autoregressive gamma models of realized
//! variance and multi-component leverage.
//!
//! The crate covers the full pipeline: model specification ([`model`]),
//! closed-form MGF recursions under the physical and risk-neutral measures
//! ([`mgf`]), Monte Carlo simulation ([`sim`]), maximum-likelihood
//! estimation and risk-premium calibration ([`estimation`]), COS pricing and
//! implied volatilities ([`pricing`]), and data ingestion ([`io`]).
//!
//! ```
//! use lharg::model::{MarketState, ModelParams, RiskPremia, Variant};
//! use lharg::mgf::mgf_q_direct;
//! use num_complex::Complex64;
//!
//! let params = ModelParams::reference(Variant::ZmLharg).with_rate(0.02 / 252.0);
//! let state = MarketState::stationary(&params).unwrap();
//! let premia = RiskPremia::arbitrage_free(params.lambda, -3375.0);
//! let m = mgf_q_direct(&params, &state, &premia, Complex64::new(1.0, 0.0), 63).unwrap();
//! assert!((m.re - (params.r * 63.0).exp()).abs() < 1e-12);
//! ```

pub mod error;
pub mod estimation;
pub mod io;
pub mod mgf;
pub mod model;
pub mod optim;
pub mod pricing;
pub mod sim;

#[cfg(doctest)]
pub mod guide;

pub use error::{Error, Result};
