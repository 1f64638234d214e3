//! Descriptors of the benchmark sensors this toolkit is sized against.
//!
//! These are realism targets for the synthetic generator and sanity anchors
//! for ingestion, not shipped data.

use super::ValueKind;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneProfile {
    pub name: &'static str,
    pub bands: usize,
    pub classes: usize,
    /// True when the class count is inferred from a classifier head width
    /// rather than stated outright for the scene.
    pub classes_inferred: bool,
    pub wavelength_range_nm: (f64, f64),
    pub kind: ValueKind,
}

/// University of Pavia: 9 urban land-cover classes, 103 channels spanning
/// the visible through near-infrared region.
pub const PAVIA_UNIVERSITY: SceneProfile = SceneProfile {
    name: "pavia-university",
    bands: 103,
    classes: 9,
    classes_inferred: false,
    wavelength_range_nm: (430.0, 860.0),
    kind: ValueKind::Reflectance,
};

/// 2013 University of Houston campus: 15 urban land-cover classes over 144
/// visible-through-NIR channels.
pub const HOUSTON_2013: SceneProfile = SceneProfile {
    name: "houston-2013",
    bands: 144,
    classes: 15,
    classes_inferred: false,
    wavelength_range_nm: (380.0, 1050.0),
    kind: ValueKind::Reflectance,
};

/// Aerial-view wetland scene: 360 bands at 5 nm from 400 nm, calibrated
/// reflectance. The class count of 12 is inferred from the width of the
/// published classifier head.
pub const WETLAND_AERIAL: SceneProfile = SceneProfile {
    name: "wetland-aerial",
    bands: 360,
    classes: 12,
    classes_inferred: true,
    wavelength_range_nm: (400.0, 2450.0),
    kind: ValueKind::Reflectance,
};

/// Street-view wetland scene: 274 bands at 3 nm between 400 and 1000 nm,
/// at-sensor radiance. Class count inferred as for the aerial view.
pub const WETLAND_STREET: SceneProfile = SceneProfile {
    name: "wetland-street",
    bands: 274,
    classes: 12,
    classes_inferred: true,
    wavelength_range_nm: (400.0, 1000.0),
    kind: ValueKind::Radiance,
};

pub const ALL_PROFILES: [&SceneProfile; 4] = [
    &PAVIA_UNIVERSITY,
    &HOUSTON_2013,
    &WETLAND_AERIAL,
    &WETLAND_STREET,
];
