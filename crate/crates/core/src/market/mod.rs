//! Panel data: loading, validation, alignment, splitting and synthesis.

mod io;
mod panel;
pub mod synth;

pub use io::{
    load_panel, read_panel, save_panel, write_panel, LoadError, LoadedPanel, PanelSchema, PanelWarning,
    FUNDAMENTAL_FIELDS,
};
pub use panel::{is_missing, MarketPanel, PanelError, PanelSlice, BASE_FIELDS, MISSING, PRICE_FIELDS};
pub use synth::{synthesize_panel, SignalSpec, SynthError, SynthSpec};
