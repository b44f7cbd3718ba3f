//! Category-based alpha selection.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::scoring::AgentScore;
use crate::catalog::{AlphaCatalog, AlphaKey};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub w_c: f64,
    pub w_r: f64,
    /// Alphas need a final score strictly above this.
    pub threshold: f64,
    /// Entries per category kept after ranking by θ.
    pub per_category_shortlist: usize,
    /// Weight of LLM advisory scores in the final score, in `[0, 1]`.
    pub llm_blend: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { w_c: 0.6, w_r: 0.4, threshold: 0.2, per_category_shortlist: 5, llm_blend: 0.0 }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if !(self.w_c >= 0.0 && self.w_r >= 0.0) || (self.w_c + self.w_r - 1.0).abs() > 1e-9 {
            return Err(SelectionError::Weights { w_c: self.w_c, w_r: self.w_r });
        }
        if !(0.0..=1.0).contains(&self.llm_blend) {
            return Err(SelectionError::Blend(self.llm_blend));
        }
        if self.per_category_shortlist == 0 {
            return Err(SelectionError::Shortlist);
        }
        if !self.threshold.is_finite() {
            return Err(SelectionError::Threshold(self.threshold));
        }
        Ok(())
    }

    /// `w_c θ + w_r ρ`, blended with the LLM's scores when both are present.
    pub fn final_score(&self, s: &AgentScore) -> f64 {
        let base = self.w_c * s.theta + self.w_r * s.rho;
        match s.llm {
            Some(l) if self.llm_blend > 0.0 => {
                (1.0 - self.llm_blend) * base + self.llm_blend * (self.w_c * l.confidence + self.w_r * l.risk)
            }
            _ => base,
        }
    }
}

/// Scoring result for one catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreOutcome {
    Scored(AgentScore),
    Skipped(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("agent weights must be non-negative and sum to 1, got w_c={w_c}, w_r={w_r}")]
    Weights { w_c: f64, w_r: f64 },
    #[error("llm blend must lie in [0, 1], got {0}")]
    Blend(f64),
    #[error("shortlist size must be positive")]
    Shortlist,
    #[error("threshold must be finite, got {0}")]
    Threshold(f64),
    #[error("catalog entry {0} was neither scored nor skipped")]
    Unscored(AlphaKey),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStatus {
    Selected,
    NothingPassed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedAlpha {
    pub key: AlphaKey,
    pub theta: f64,
    pub rho: f64,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Above-threshold shortlisted alphas, ordered by (final desc, category order, name asc).
    pub selected: Vec<SelectedAlpha>,
    /// Best final score per category among its shortlist, regardless of the threshold.
    pub argmax: Vec<SelectedAlpha>,
    pub shortlisted: BTreeSet<AlphaKey>,
    pub skipped: Vec<(AlphaKey, String)>,
    pub status: SelectionStatus,
}

impl Selection {
    pub fn is_selected(&self, key: &AlphaKey) -> bool {
        self.selected.iter().any(|s| &s.key == key)
    }
}

/// Shortlists each category by θ, then keeps shortlisted alphas whose final score
/// exceeds the threshold.
pub fn select_alphas(
    catalog: &AlphaCatalog,
    scores: &BTreeMap<AlphaKey, ScoreOutcome>,
    config: &SelectionConfig,
) -> Result<Selection, SelectionError> {
    config.validate()?;
    if catalog.is_empty() {
        return Err(SelectionError::EmptyCatalog);
    }
    let mut skipped = Vec::new();
    let mut by_category: BTreeMap<usize, Vec<&AgentScore>> = BTreeMap::new();
    for e in catalog.entries() {
        let key = e.key();
        match scores.get(&key) {
            None => return Err(SelectionError::Unscored(key)),
            Some(ScoreOutcome::Skipped(why)) => skipped.push((key, why.clone())),
            Some(ScoreOutcome::Scored(s)) => {
                let rank = catalog.category_rank(&e.category).expect("entry category is registered");
                by_category.entry(rank).or_default().push(s);
            }
        }
    }

    let pick = |s: &AgentScore| SelectedAlpha {
        key: s.key.clone(),
        theta: s.theta,
        rho: s.rho,
        final_score: config.final_score(s),
    };
    let mut selected = Vec::new();
    let mut argmax = Vec::new();
    let mut shortlisted = BTreeSet::new();
    for (_, mut group) in by_category {
        group.sort_by(|a, b| b.theta.total_cmp(&a.theta).then_with(|| a.key.name.cmp(&b.key.name)));
        group.truncate(config.per_category_shortlist);
        let mut best: Option<SelectedAlpha> = None;
        for s in group {
            shortlisted.insert(s.key.clone());
            let cand = pick(s);
            if cand.final_score > config.threshold {
                selected.push(cand.clone());
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    cand.final_score > b.final_score
                        || (cand.final_score == b.final_score && cand.key.name < b.key.name)
                }
            };
            if better {
                best = Some(cand);
            }
        }
        argmax.extend(best);
    }
    let order = |a: &SelectedAlpha, b: &SelectedAlpha| -> Ordering {
        b.final_score
            .total_cmp(&a.final_score)
            .then_with(|| catalog.category_rank(&a.key.category).cmp(&catalog.category_rank(&b.key.category)))
            .then_with(|| a.key.name.cmp(&b.key.name))
    };
    selected.sort_by(order);
    let status = if selected.is_empty() { SelectionStatus::NothingPassed } else { SelectionStatus::Selected };
    Ok(Selection { selected, argmax, shortlisted, skipped, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{parse_manifest, CatalogEntry, Provenance};

    fn book(catalog: &AlphaCatalog, theta_rho: &[(f64, f64)]) -> BTreeMap<AlphaKey, ScoreOutcome> {
        catalog
            .entries()
            .iter()
            .zip(theta_rho)
            .map(|(e, &(t, r))| (e.key(), ScoreOutcome::Scored(AgentScore::new(e.key(), t, r, 0.6, 0.4))))
            .collect()
    }

    #[test]
    fn single_alpha_above_threshold() {
        let c = parse_manifest("A | x | CLOSE\n").unwrap();
        let cfg = SelectionConfig { threshold: 0.5, ..Default::default() };
        let sel = select_alphas(&c, &book(&c, &[(0.9, 0.9)]), &cfg).unwrap();
        assert_eq!(sel.status, SelectionStatus::Selected);
        assert_eq!(sel.selected.len(), 1);
        assert!((sel.selected[0].final_score - 0.9).abs() < 1e-15);
    }

    #[test]
    fn nothing_passed_keeps_argmax() {
        let c = parse_manifest("A | x | CLOSE\nA | y | OPEN\n").unwrap();
        let sel = select_alphas(&c, &book(&c, &[(0.0, 0.1), (0.05, 0.2)]), &SelectionConfig::default()).unwrap();
        assert_eq!(sel.status, SelectionStatus::NothingPassed);
        assert!(sel.selected.is_empty());
        assert_eq!(sel.argmax[0].key.name, "y");
    }

    #[test]
    fn validates_inputs() {
        let c = parse_manifest("A | x | CLOSE\n").unwrap();
        let b = book(&c, &[(0.5, 0.5)]);
        let bad = SelectionConfig { w_c: 0.7, ..Default::default() };
        assert!(matches!(select_alphas(&c, &b, &bad), Err(SelectionError::Weights { .. })));
        assert!(matches!(
            select_alphas(&c, &BTreeMap::new(), &SelectionConfig::default()),
            Err(SelectionError::Unscored(_))
        ));
        let extra = c.add_entries(vec![CatalogEntry::new("A", "z", "HIGH", Provenance::User).unwrap()]).unwrap();
        let mut b2 = book(&extra, &[(0.5, 0.5)]);
        b2.insert(AlphaKey::new("A", "z"), ScoreOutcome::Skipped("no data".into()));
        let sel = select_alphas(&extra, &b2, &SelectionConfig::default()).unwrap();
        assert_eq!(sel.skipped.len(), 1);
    }

    #[test]
    fn llm_blend_moves_final() {
        let c = parse_manifest("A | x | CLOSE\n").unwrap();
        let mut s = AgentScore::new(AlphaKey::new("A", "x"), 0.1, 0.1, 0.6, 0.4);
        s.llm = Some(crate::agents::LlmScore { confidence: 1.0, risk: 1.0 });
        let cfg = SelectionConfig { llm_blend: 0.5, ..Default::default() };
        assert!((cfg.final_score(&s) - 0.55).abs() < 1e-15);
        let b = BTreeMap::from([(s.key.clone(), ScoreOutcome::Scored(s))]);
        assert_eq!(select_alphas(&c, &b, &cfg).unwrap().selected.len(), 1);
    }
}
