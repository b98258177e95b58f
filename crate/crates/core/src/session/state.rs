use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::binding::{BindingStore, DocBody};
use crate::geometry::Pose2;
use crate::mortgage::{
    derive_case, required_amortization, AffordabilityParams, Chf, FinancialCase, RateScenario, RateTable,
};
use crate::notes::CodeWordCatalog;
use crate::tracker::{MarkerId, Millis, ObjectKind, Presence};

use super::event::DialFocus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub kind: ObjectKind,
    pub pose: Pose2,
    pub presence: Presence,
}

/// Everything the session knows. Produced only by folding events through
/// [`super::reduce`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub objects: BTreeMap<MarkerId, ObjectRecord>,
    pub bindings: BindingStore,
    pub case: FinancialCase,
    pub params: AffordabilityParams,
    pub scenario: RateScenario,
    pub rates: RateTable,
    pub catalog: CodeWordCatalog,
    pub dial_focus: Option<DialFocus>,
    /// Mix paper the advisor last worked on.
    pub active_mix: Option<MarkerId>,
    pub last_seq: Option<u64>,
    pub last_ts: Millis,
}

impl Default for SessionState {
    fn default() -> Self {
        Self {
            objects: BTreeMap::new(),
            bindings: BindingStore::new(),
            case: FinancialCase::default(),
            params: AffordabilityParams::default(),
            scenario: RateScenario::flat(),
            rates: RateTable::default(),
            catalog: CodeWordCatalog::default(),
            dial_focus: None,
            active_mix: None,
            last_seq: None,
            last_ts: 0,
        }
    }
}

impl SessionState {
    pub fn next_seq(&self) -> u64 {
        self.last_seq.map_or(0, |s| s + 1)
    }

    pub fn is_present(&self, marker: &MarkerId) -> bool {
        self.objects
            .get(marker)
            .is_some_and(|o| o.presence == Presence::In)
    }

    pub fn body(&self, marker: &MarkerId) -> Option<DocBody> {
        self.bindings.resolve(marker).map(|d| d.body.clone())
    }

    /// Mortgage amount and yearly amortization implied by the case, or zero
    /// while the case is incomplete.
    pub fn mortgage_terms(&self) -> Option<(Chf, Decimal)> {
        let figures = derive_case(&self.case).ok()?;
        let amortization = required_amortization(&self.case, &self.params).unwrap_or(Decimal::ZERO);
        Some((figures.mortgage_amount, amortization))
    }
}

/// Financial case for a named preset, as loaded by `LoadScenario`.
pub fn preset_case(name: &str) -> Option<FinancialCase> {
    match name {
        "transcript_4_2" | "lenzburg" => Some(FinancialCase {
            purchase_price: 770_000,
            own_funds: 202_000,
            annual_incomes: vec![120_000],
            address: "Florastreet 6, Lenzburg".into(),
        }),
        "empty" => Some(FinancialCase::default()),
        _ => None,
    }
}
