//! Symmetric equilibrium bidding in kth-price sealed-bid auctions.
//!
//! The equilibrium bid at quantile `u` is a finite sum over derivatives of
//! the valuation quantile function `Q`:
//!
//! ```text
//! β(Q(u)) = Σ_{i=0}^{k−2} C(k−2, i) · (n−k)!/(n−k+i)! · uⁱ · Q⁽ⁱ⁾(u)
//! ```
//!
//! [`equilibrium`] evaluates it with truncated Taylor arithmetic from
//! [`jets`]; [`verify`] checks the result against the integral
//! characterization of equilibrium and an iterated-integral construction;
//! [`simulate`] runs Monte Carlo auctions to test best-response optimality
//! and revenue equivalence; [`cli`] exposes all of it on the command line.

pub mod cli;
pub mod dists;
pub mod equilibrium;
pub mod error;
pub mod jets;
pub mod quadrature;
pub mod simulate;
pub mod verify;

pub use dists::{Distribution, Support};
pub use equilibrium::{AuctionSpec, BidCurve, BidPoint};
pub use error::{Error, Result};
pub use jets::Jet;

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeDoctests;
