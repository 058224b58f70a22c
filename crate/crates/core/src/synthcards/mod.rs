//! Ground-truthed fixtures: rendered assessment cards with known cell
//! contents and geometry, and parcel datasets whose labels come from a
//! cost-table valuation function.

mod card;
mod parcels;

pub use card::{
    card_layout, content_key, render_card, render_template, CardSpec, CardTruth, NoiseParams, SynthCardConfig, TruthCell,
    WarpParams, CARD_HEIGHT, CARD_WIDTH, DATA_ROWS, HEADER_SCALE, VALUE_COLUMNS,
};
pub use parcels::{generate_parcels, CountyStyle, MissingMechanism, SynthParcelSpec, SynthParcels, ValuationParams};
