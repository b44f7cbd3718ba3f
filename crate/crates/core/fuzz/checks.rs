// Shared by the fuzz targets and the corpus replay test. Each check must not
// panic on any input; accepted inputs must survive a write/read round trip.

pub fn parse_expr(data: &[u8]) {
    let Ok(src) = std::str::from_utf8(data) else { return };
    if let Ok(expr) = alphaforge::dsl::parse(src) {
        let text = alphaforge::dsl::print(&expr);
        let back = alphaforge::dsl::parse(&text).expect("printed expression parses");
        assert_eq!(back, expr, "round trip of {text}");
        let _ = alphaforge::dsl::analyze(&expr);
    }
}

pub fn panel_csv(data: &[u8]) {
    use alphaforge::market::{read_panel, write_panel, PanelSchema};
    if let Ok(loaded) = read_panel(data, &PanelSchema::default()) {
        let mut out = Vec::new();
        write_panel(&loaded.panel, &mut out).expect("accepted panel writes");
        let again = read_panel(&out[..], &PanelSchema::default()).expect("written panel reads");
        assert_eq!(again.panel.dates(), loaded.panel.dates());
        assert_eq!(again.panel.tickers(), loaded.panel.tickers());
    }
}

pub fn catalog_manifest(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(catalog) = alphaforge::catalog::parse_manifest(text) {
        let back = alphaforge::catalog::parse_manifest(&catalog.to_manifest()).expect("written manifest parses");
        assert_eq!(back, catalog);
    }
}

pub fn llm_envelope(data: &[u8]) {
    use alphaforge::llm::{parse_response, Task};
    let Some((&sel, rest)) = data.split_first() else { return };
    let Ok(raw) = std::str::from_utf8(rest) else { return };
    let task = if sel % 2 == 0 { Task::ScoreAlphas } else { Task::ProposeAlphas };
    let _ = parse_response(raw, task);
}

pub fn run_config(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = alphaforge::pipeline::RunConfig::from_toml(text);
}

pub fn mlp_checkpoint(data: &[u8]) {
    use alphaforge::mlp::MlpModel;
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = MlpModel::from_checkpoint(text) {
        let back = MlpModel::from_checkpoint(&model.to_checkpoint()).expect("written checkpoint reads");
        assert_eq!(back.to_checkpoint(), model.to_checkpoint());
    }
}

pub fn alpha_series_csv(data: &[u8]) {
    use alphaforge::eval::AlphaSeries;
    if let Ok(series) = AlphaSeries::read_csv("fuzz", data) {
        let mut out = Vec::new();
        series.write_csv(&mut out).expect("accepted series writes");
        let again = AlphaSeries::read_csv("fuzz", &out[..]).expect("written series reads");
        let mut out2 = Vec::new();
        again.write_csv(&mut out2).expect("series writes");
        assert_eq!(out, out2);
    }
}

pub fn weights_csv(data: &[u8]) {
    use alphaforge::mlp::CombinedAlphaWeights;
    if let Ok(w) = CombinedAlphaWeights::read_csv(data) {
        let mut out = Vec::new();
        w.write_csv(&mut out).expect("accepted weights write");
        let again = CombinedAlphaWeights::read_csv(&out[..]).expect("written weights read");
        let mut out2 = Vec::new();
        again.write_csv(&mut out2).expect("weights write");
        assert_eq!(out, out2);
    }
}
