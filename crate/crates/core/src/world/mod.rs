//! Procedural city: street grid, building boxes, billboard placement and routes.

mod city;
mod route;

pub use city::{
    generate_city, Axis, Billboard, BillboardConfig, Building, CityConfig, CityModel, GroundKind,
    Heading, Intersection, IntersectionId, Street, PATCH_CELLS,
};
pub use route::{make_route, Route};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid city configuration: {0}")]
    Config(String),
    #[error("route error: {0}")]
    Route(String),
    #[error("city json: {0}")]
    Json(#[from] serde_json::Error),
}
