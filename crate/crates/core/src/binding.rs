//! Marker → content bindings.
//!
//! A marker keeps its document for the whole session. Presence on the table
//! never touches content: only [`BindingStore::apply_update`] does, and each
//! update bumps the revision by exactly one.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{adjust_view, GeoPoint, MapInput, MapViewState};
use crate::mortgage::{
    affordability, derive_case, edit_mix, monthly_cost, rebalance, simulate_rate_path, Affordability,
    AffordabilityParams, CaseFigures, Chf, CostSchedule, FinancialCase, MixEdit, MixError, MortgageMix,
    RateScenario, RateTable,
};
use crate::notes::{Fact, RecognizedLine};
use crate::tracker::{MarkerId, Millis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BindingError {
    #[error("marker {0} is already bound")]
    AlreadyBound(MarkerId),
    #[error("marker {0} is not bound")]
    NotBound(MarkerId),
    #[error("{update} update does not apply to a {doc} document")]
    VariantMismatch { doc: DocKind, update: DocKind },
    #[error("mix edit rejected: {0}")]
    Mix(#[from] MixError),
    #[error("invalid update: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub u64);

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "doc-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Affordability,
    MortgageMix,
    Map,
    Note,
}

impl fmt::Display for DocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocKind::Affordability => "affordability",
            DocKind::MortgageMix => "mortgage-mix",
            DocKind::Map => "map",
            DocKind::Note => "note",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffordabilityView {
    pub case: FinancialCase,
    pub params: AffordabilityParams,
    pub figures: Option<CaseFigures>,
    /// `None` while the case is incomplete (no price or no income).
    pub result: Option<Affordability>,
}

impl AffordabilityView {
    pub fn new(case: FinancialCase, params: AffordabilityParams) -> Self {
        let mut view = Self {
            case,
            params,
            figures: None,
            result: None,
        };
        view.recompute();
        view
    }

    fn recompute(&mut self) {
        self.figures = derive_case(&self.case).ok();
        self.result = affordability(&self.case, &self.params).ok();
    }
}

pub const DEFAULT_HORIZON_YEARS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MortgageMixView {
    pub mix: MortgageMix,
    pub scenario: RateScenario,
    pub mortgage_amount: Chf,
    pub required_amortization: Decimal,
    pub include_amortization: bool,
    pub horizon_years: u32,
    pub rates: RateTable,
    pub monthly_cost: Option<Decimal>,
    pub schedule: CostSchedule,
}

impl MortgageMixView {
    pub fn new(
        mortgage_amount: Chf,
        required_amortization: Decimal,
        scenario: RateScenario,
        rates: RateTable,
    ) -> Self {
        let mut view = Self {
            mix: MortgageMix::default(),
            scenario,
            mortgage_amount,
            required_amortization,
            include_amortization: false,
            horizon_years: DEFAULT_HORIZON_YEARS,
            rates,
            monthly_cost: None,
            schedule: CostSchedule::default(),
        };
        view.recompute();
        view
    }

    pub fn amortization_per_year(&self) -> Decimal {
        if self.include_amortization {
            self.required_amortization
        } else {
            Decimal::ZERO
        }
    }

    fn recompute(&mut self) {
        let amortization = self.amortization_per_year();
        self.monthly_cost = monthly_cost(&self.mix, amortization).ok();
        self.schedule = if self.mix.is_empty() {
            CostSchedule::default()
        } else {
            simulate_rate_path(&self.mix, &self.scenario, amortization, self.horizon_years)
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapView {
    pub state: MapViewState,
    pub address: String,
    /// False while the property has not been geocoded; the map then shows
    /// its default center.
    pub located: bool,
}

impl Default for MapView {
    fn default() -> Self {
        Self {
            state: MapViewState::default(),
            address: String::new(),
            located: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoteSheet {
    pub lines: Vec<RecognizedLine>,
    pub facts: Vec<Fact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "view", rename_all = "snake_case")]
pub enum DocBody {
    Affordability(AffordabilityView),
    MortgageMix(MortgageMixView),
    Map(MapView),
    Note(NoteSheet),
}

impl DocBody {
    pub fn kind(&self) -> DocKind {
        match self {
            DocBody::Affordability(_) => DocKind::Affordability,
            DocBody::MortgageMix(_) => DocKind::MortgageMix,
            DocBody::Map(_) => DocKind::Map,
            DocBody::Note(_) => DocKind::Note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentDoc {
    pub doc_id: DocId,
    pub body: DocBody,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub marker_id: MarkerId,
    pub doc_id: DocId,
    pub created_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum AffordabilityUpdate {
    Case { case: FinancialCase },
    Income { index: usize, value: Chf },
    Params { params: AffordabilityParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum MixUpdate {
    Edit { edit: MixEdit },
    /// Follows a changed case: rebalances the mix onto the new amount.
    Mortgage { amount: Chf, required_amortization: Decimal },
    Scenario { scenario: RateScenario },
    IncludeAmortization { include: bool },
    Replace { mix: MortgageMix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum MapUpdate {
    Adjust { input: MapInput },
    Locate { address: String, point: Option<GeoPoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum NoteUpdate {
    Append { lines: Vec<RecognizedLine>, facts: Vec<Fact> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "doc", rename_all = "snake_case")]
pub enum DocUpdate {
    Affordability(AffordabilityUpdate),
    MortgageMix(MixUpdate),
    Map(MapUpdate),
    Note(NoteUpdate),
}

impl DocUpdate {
    pub fn kind(&self) -> DocKind {
        match self {
            DocUpdate::Affordability(_) => DocKind::Affordability,
            DocUpdate::MortgageMix(_) => DocKind::MortgageMix,
            DocUpdate::Map(_) => DocKind::Map,
            DocUpdate::Note(_) => DocKind::Note,
        }
    }
}

/// Computes the body that results from applying `update` to `body`.
pub fn updated_body(body: &DocBody, update: &DocUpdate) -> Result<DocBody, BindingError> {
    let mismatch = || BindingError::VariantMismatch {
        doc: body.kind(),
        update: update.kind(),
    };
    Ok(match (body, update) {
        (DocBody::Affordability(view), DocUpdate::Affordability(u)) => {
            let mut view = view.clone();
            match u {
                AffordabilityUpdate::Case { case } => view.case = case.clone(),
                AffordabilityUpdate::Income { index, value } => {
                    if *value < 0 {
                        return Err(BindingError::Invalid("income must be non-negative".into()));
                    }
                    let incomes = &mut view.case.annual_incomes;
                    if *index >= incomes.len() {
                        incomes.resize(index + 1, 0);
                    }
                    incomes[*index] = *value;
                }
                AffordabilityUpdate::Params { params } => {
                    params
                        .validate()
                        .map_err(|e| BindingError::Invalid(e.to_string()))?;
                    view.params = params.clone();
                }
            }
            view.recompute();
            DocBody::Affordability(view)
        }
        (DocBody::MortgageMix(view), DocUpdate::MortgageMix(u)) => {
            let mut view = view.clone();
            match u {
                MixUpdate::Edit { edit } => {
                    view.mix = edit_mix(&view.mix, edit, view.mortgage_amount, &view.rates)?;
                }
                MixUpdate::Mortgage {
                    amount,
                    required_amortization,
                } => {
                    view.mix = rebalance(&view.mix, *amount, &view.rates);
                    view.mortgage_amount = *amount;
                    view.required_amortization = *required_amortization;
                }
                MixUpdate::Scenario { scenario } => {
                    if scenario.annual_increase.is_sign_negative() {
                        return Err(BindingError::Invalid("rate increase must be non-negative".into()));
                    }
                    view.scenario = scenario.clone();
                }
                MixUpdate::IncludeAmortization { include } => view.include_amortization = *include,
                MixUpdate::Replace { mix } => {
                    let actual = mix.total_principal();
                    if actual != view.mortgage_amount {
                        return Err(MixError::Unbalanced {
                            expected: view.mortgage_amount,
                            actual,
                        }
                        .into());
                    }
                    if mix.tranches.iter().any(|t| t.principal <= 0 || t.annual_rate.is_sign_negative()) {
                        return Err(BindingError::Invalid("tranches need positive principal and non-negative rate".into()));
                    }
                    view.mix = mix.clone();
                }
            }
            view.recompute();
            DocBody::MortgageMix(view)
        }
        (DocBody::Map(view), DocUpdate::Map(u)) => {
            let mut view = view.clone();
            match u {
                MapUpdate::Adjust { input } => view.state = adjust_view(&view.state, input),
                MapUpdate::Locate { address, point } => {
                    view.address = address.clone();
                    view.located = point.is_some();
                    if let Some(p) = point {
                        view.state.center = *p;
                    }
                }
            }
            DocBody::Map(view)
        }
        (DocBody::Note(sheet), DocUpdate::Note(NoteUpdate::Append { lines, facts })) => {
            let mut sheet = sheet.clone();
            sheet.lines.extend(lines.iter().cloned());
            sheet.facts.extend(facts.iter().cloned());
            DocBody::Note(sheet)
        }
        _ => return Err(mismatch()),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BindingStore {
    bindings: BTreeMap<MarkerId, Binding>,
    docs: BTreeMap<DocId, Arc<ContentDoc>>,
    next_doc: u64,
}

impl BindingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, marker: &MarkerId, initial: DocBody, created_at: Millis) -> Result<Binding, BindingError> {
        if self.bindings.contains_key(marker) {
            return Err(BindingError::AlreadyBound(marker.clone()));
        }
        let doc_id = DocId(self.next_doc);
        self.next_doc += 1;
        let binding = Binding {
            marker_id: marker.clone(),
            doc_id,
            created_at,
        };
        self.docs.insert(
            doc_id,
            Arc::new(ContentDoc {
                doc_id,
                body: initial,
                revision: 0,
            }),
        );
        self.bindings.insert(marker.clone(), binding.clone());
        Ok(binding)
    }

    pub fn is_bound(&self, marker: &MarkerId) -> bool {
        self.bindings.contains_key(marker)
    }

    pub fn binding(&self, marker: &MarkerId) -> Option<&Binding> {
        self.bindings.get(marker)
    }

    /// Latest revision of the marker's document, as an immutable snapshot.
    pub fn resolve(&self, marker: &MarkerId) -> Option<Arc<ContentDoc>> {
        let binding = self.bindings.get(marker)?;
        self.docs.get(&binding.doc_id).cloned()
    }

    pub fn apply_update(&mut self, marker: &MarkerId, update: &DocUpdate) -> Result<Arc<ContentDoc>, BindingError> {
        let doc_id = self
            .bindings
            .get(marker)
            .ok_or_else(|| BindingError::NotBound(marker.clone()))?
            .doc_id;
        let current = self
            .docs
            .get(&doc_id)
            .ok_or_else(|| BindingError::NotBound(marker.clone()))?;
        let body = updated_body(&current.body, update)?;
        let next = Arc::new(ContentDoc {
            doc_id,
            body,
            revision: current.revision + 1,
        });
        self.docs.insert(doc_id, next.clone());
        Ok(next)
    }

    pub fn bindings(&self) -> impl Iterator<Item = &Binding> {
        self.bindings.values()
    }

    /// Bound markers whose document has the given kind, in marker order.
    pub fn markers_of_kind(&self, kind: DocKind) -> Vec<MarkerId> {
        self.bindings
            .values()
            .filter(|b| self.docs.get(&b.doc_id).is_some_and(|d| d.body.kind() == kind))
            .map(|b| b.marker_id.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mortgage::TrancheType;

    fn mix_body() -> DocBody {
        DocBody::MortgageMix(MortgageMixView::new(
            568_000,
            Decimal::new(4500, 0),
            RateScenario::flat(),
            RateTable::default(),
        ))
    }

    #[test]
    fn bind_and_resolve() {
        let mut store = BindingStore::new();
        let p1 = MarkerId::new("P1");
        assert!(store.resolve(&p1).is_none());
        store.bind(&p1, mix_body(), 0).unwrap();
        let doc = store.resolve(&p1).unwrap();
        assert_eq!(doc.revision, 0);
        assert!(matches!(&doc.body, DocBody::MortgageMix(v) if v.mix.is_empty()));
        assert_eq!(store.bind(&p1, mix_body(), 1), Err(BindingError::AlreadyBound(p1)));
    }

    #[test]
    fn bindings_are_independent() {
        let mut store = BindingStore::new();
        let (p1, p2) = (MarkerId::new("P1"), MarkerId::new("P2"));
        store.bind(&p1, mix_body(), 0).unwrap();
        store.bind(&p2, DocBody::Map(MapView::default()), 0).unwrap();
        store
            .apply_update(&p1, &DocUpdate::MortgageMix(MixUpdate::Edit { edit: MixEdit::AddTranche { kind: TrancheType::Fixed } }))
            .unwrap();
        assert_eq!(store.resolve(&p2).unwrap().revision, 0);
        assert_ne!(store.resolve(&p1).unwrap().doc_id, store.resolve(&p2).unwrap().doc_id);
    }

    #[test]
    fn income_update_recomputes() {
        let mut store = BindingStore::new();
        let p = MarkerId::new("A");
        let case = FinancialCase::new(770_000, 202_000, vec![120_000]);
        store
            .bind(&p, DocBody::Affordability(AffordabilityView::new(case, AffordabilityParams::default())), 0)
            .unwrap();
        let before = store.resolve(&p).unwrap();
        let DocBody::Affordability(v) = &before.body else { panic!() };
        assert!(!v.result.as_ref().unwrap().affordable);
        let after = store
            .apply_update(&p, &DocUpdate::Affordability(AffordabilityUpdate::Income { index: 1, value: 30_000 }))
            .unwrap();
        assert_eq!(after.revision, 1);
        let DocBody::Affordability(v) = &after.body else { panic!() };
        assert!(v.result.as_ref().unwrap().affordable);
        assert_eq!(v.case.annual_incomes, vec![120_000, 30_000]);
    }

    #[test]
    fn variant_mismatch_and_not_bound() {
        let mut store = BindingStore::new();
        let p = MarkerId::new("P1");
        store.bind(&p, mix_body(), 0).unwrap();
        let map_delta = DocUpdate::Map(MapUpdate::Adjust { input: MapInput::ToggleMode });
        assert_eq!(
            store.apply_update(&p, &map_delta),
            Err(BindingError::VariantMismatch {
                doc: DocKind::MortgageMix,
                update: DocKind::Map
            })
        );
        assert_eq!(store.resolve(&p).unwrap().revision, 0);
        assert_eq!(
            store.apply_update(&MarkerId::new("nope"), &map_delta),
            Err(BindingError::NotBound(MarkerId::new("nope")))
        );
    }

    #[test]
    fn failed_edit_leaves_doc_untouched() {
        let mut store = BindingStore::new();
        let p = MarkerId::new("P1");
        store.bind(&p, mix_body(), 0).unwrap();
        let err = store.apply_update(
            &p,
            &DocUpdate::MortgageMix(MixUpdate::Edit { edit: MixEdit::ResizeTranche { index: 0, delta: 5 } }),
        );
        assert!(matches!(err, Err(BindingError::Mix(MixError::Unbalanced { .. }))));
        assert_eq!(store.resolve(&p).unwrap().revision, 0);
    }
}
