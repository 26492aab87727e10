//! Market clearing and equilibrium analysis for nonconvex quasi-linear
//! exchange economies.
//!
//! The crate models day-ahead style auctions with divisible hourly bid curves
//! and indivisible block bids, and provides:
//!
//! * the convexified welfare program and its dual prices ([`convex`]),
//! * exact welfare maximisation by branch-and-bound plus an enumeration
//!   oracle ([`exact`]),
//! * demand sets, their convex hulls and the price-specific nonconvexity
//!   measure ([`demand`]),
//! * equilibrium detection, approximate equilibria, convex hull pricing,
//!   lost opportunity costs and a rule-based clearing with paradoxical
//!   rejections ([`equilibrium`]),
//! * synthetic market families and Monte Carlo studies ([`random`]),
//! * a CSV/JSON file format for markets and outcome reports ([`io`]).

pub mod convex;
pub mod demand;
pub mod equilibrium;
pub mod error;
pub mod exact;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod lp;
pub mod model;
pub mod random;
pub mod settings;

pub use error::{Error, Result};
pub use model::{
    Agent, Allocation, Bid, BidKind, BlockBid, CurveMode, CurvePoint, HourlyCurveBid, Market,
    PriceVector,
};
pub use settings::Settings;
