use rust_decimal::Decimal;
use thiserror::Error;

use crate::binding::{
    AffordabilityUpdate, AffordabilityView, BindingError, DocBody, DocKind, DocUpdate, MapUpdate, MapView,
    MixUpdate, MortgageMixView, NoteSheet, NoteUpdate,
};
use crate::map::{MapInput, MapMode};
use crate::mortgage::{Chf, FinancialCase, MixEdit, MixError, MortgageMix, RateScenario, TrancheType};
use crate::notes::{extract_facts, Fact, FactField, FactValue, RecognizedLine, Stroke};
use crate::tracker::{MarkerId, Millis, ObjectEvent, ObjectKind, Presence};

use super::event::{DialField, DialFocus, Followup, Payload, SessionEvent, UiAction};
use super::state::{preset_case, ObjectRecord, SessionState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error("sequence gap: expected {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("conservation violated on {marker}: tranches sum to {actual} CHF but the mortgage is {expected} CHF")]
    Conservation { marker: MarkerId, expected: Chf, actual: Chf },
    #[error(transparent)]
    Binding(#[from] BindingError),
}

pub const INCOME_STEP: Chf = 1_000;
pub const PRICE_STEP: Chf = 10_000;
pub const TRANCHE_STEP: Chf = 10_000;
/// A chip placed this close to a mix paper adds a tranche to it.
pub const CHIP_REACH_MM: f64 = 150.0;

/// Yearly rate increase per dial tick (0.05 percentage points).
pub fn scenario_step() -> Decimal {
    Decimal::new(5, 4)
}

/// Applies one event. Pure: the input state is left untouched and the
/// returned followups describe work for the driver.
pub fn reduce(state: &SessionState, event: &SessionEvent) -> Result<(SessionState, Vec<Followup>), ReduceError> {
    let expected = state.next_seq();
    if event.seq != expected {
        return Err(ReduceError::SequenceGap {
            expected,
            got: event.seq,
        });
    }
    let mut next = state.clone();
    let mut out = Vec::new();
    apply(&mut next, event.ts, &event.payload, &mut out)?;
    next.last_seq = Some(event.seq);
    next.last_ts = next.last_ts.max(event.ts);
    Ok((next, out))
}

fn invalid(msg: impl Into<String>) -> ReduceError {
    ReduceError::InvalidAction(msg.into())
}

fn apply(s: &mut SessionState, ts: Millis, payload: &Payload, out: &mut Vec<Followup>) -> Result<(), ReduceError> {
    match payload {
        Payload::Configure { params, rates, catalog } => {
            params.validate().map_err(|e| invalid(e.to_string()))?;
            if rates.entries.is_empty() {
                return Err(invalid("rate table is empty"));
            }
            s.params = params.clone();
            s.rates = rates.clone();
            s.catalog = catalog.clone();
            propagate_case(s)
        }
        Payload::Object { event } => object_event(s, ts, event, out),
        Payload::Ui { action } => ui_action(s, ts, action, out),
        Payload::NoteRecognized { sheet, lines } => note_recognized(s, ts, sheet, lines, out),
        Payload::FactExtracted { fact, .. } => apply_fact(s, fact, out),
        Payload::GeocodeResolved {
            marker, address, point, ..
        } => {
            expect_kind(s, marker, DocKind::Map)?;
            s.bindings.apply_update(
                marker,
                &DocUpdate::Map(MapUpdate::Locate {
                    address: address.clone(),
                    point: *point,
                }),
            )?;
            Ok(())
        }
    }
}

fn object_event(s: &mut SessionState, ts: Millis, event: &ObjectEvent, out: &mut Vec<Followup>) -> Result<(), ReduceError> {
    match event {
        ObjectEvent::Entered { id, kind, pose } => {
            s.objects.insert(
                id.clone(),
                ObjectRecord {
                    kind: *kind,
                    pose: *pose,
                    presence: Presence::In,
                },
            );
            match kind {
                ObjectKind::HouseToken => ensure_map(s, id, ts, out)?,
                ObjectKind::TrancheChipFixed | ObjectKind::TrancheChipLibor => {
                    let tranche = if *kind == ObjectKind::TrancheChipFixed {
                        TrancheType::Fixed
                    } else {
                        TrancheType::Libor
                    };
                    if let Some(paper) = nearest_mix_paper(s, id) {
                        out.push(Followup::Event(Payload::Ui {
                            action: UiAction::EditMix {
                                marker: paper,
                                edit: MixEdit::AddTranche { kind: tranche },
                            },
                        }));
                    }
                }
                _ => {}
            }
            Ok(())
        }
        ObjectEvent::Moved { id, pose } => {
            let record = present_record(s, id)?;
            record.pose = *pose;
            Ok(())
        }
        ObjectEvent::Left { id } => {
            let record = present_record(s, id)?;
            record.presence = Presence::Out;
            Ok(())
        }
        ObjectEvent::DialTicked { id, ticks } => {
            present_record(s, id)?;
            // Turning the dial at a limit or without a target changes nothing.
            if let Err(e) = apply_dial(s, *ticks, out) {
                log::debug!("dial ticks ignored: {e}");
            }
            Ok(())
        }
    }
}

fn present_record<'a>(s: &'a mut SessionState, id: &MarkerId) -> Result<&'a mut ObjectRecord, ReduceError> {
    match s.objects.get_mut(id) {
        Some(r) if r.presence == Presence::In => Ok(r),
        _ => Err(invalid(format!("{id} is not on the table"))),
    }
}

fn nearest_mix_paper(s: &SessionState, chip: &MarkerId) -> Option<MarkerId> {
    let at = s.objects.get(chip)?.pose.position;
    s.bindings
        .markers_of_kind(DocKind::MortgageMix)
        .into_iter()
        .filter_map(|m| {
            let r = s.objects.get(&m)?;
            (r.presence == Presence::In).then(|| (r.pose.position.distance(&at), m))
        })
        .filter(|(d, _)| *d <= CHIP_REACH_MM)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, m)| m)
}

fn doc_kind(s: &SessionState, marker: &MarkerId) -> Option<DocKind> {
    s.bindings.resolve(marker).map(|d| d.body.kind())
}

fn expect_kind(s: &SessionState, marker: &MarkerId, kind: DocKind) -> Result<(), ReduceError> {
    match doc_kind(s, marker) {
        Some(k) if k == kind => Ok(()),
        Some(k) => Err(invalid(format!("{marker} shows a {k} document, not {kind}"))),
        None => Err(invalid(format!("{marker} has no {kind} document"))),
    }
}

fn ensure_map(s: &mut SessionState, marker: &MarkerId, ts: Millis, out: &mut Vec<Followup>) -> Result<(), ReduceError> {
    if !s.bindings.is_bound(marker) {
        s.bindings.bind(marker, DocBody::Map(MapView::default()), ts)?;
    }
    let Some(DocBody::Map(view)) = s.body(marker) else {
        return Ok(());
    };
    let address = s.case.address.clone();
    if !address.is_empty() && (!view.located || view.address != address) {
        out.push(Followup::Geocode {
            marker: marker.clone(),
            address,
        });
    }
    Ok(())
}

fn set_income(case: &mut FinancialCase, index: usize, value: Chf) {
    if index >= case.annual_incomes.len() {
        case.annual_incomes.resize(index + 1, 0);
    }
    case.annual_incomes[index] = value;
}

fn apply_fact(s: &mut SessionState, fact: &Fact, out: &mut Vec<Followup>) -> Result<(), ReduceError> {
    let mut case = s.case.clone();
    match (fact.field, &fact.value) {
        (FactField::OwnFunds, FactValue::Money(v)) => case.own_funds = *v,
        (FactField::PurchasePrice, FactValue::Money(v)) => case.purchase_price = *v,
        (FactField::AnnualIncome, FactValue::Money(v)) => set_income(&mut case, 0, *v),
        (FactField::PartnerIncome, FactValue::Money(v)) => set_income(&mut case, 1, *v),
        (FactField::PropertyAddress, FactValue::Text(t)) => case.address = t.trim().to_string(),
        (field, value) => return Err(invalid(format!("{} cannot take {value:?}", field.as_str()))),
    }
    set_case(s, case, out)
}

/// Replaces the session case and pushes it into every dependent document.
fn set_case(s: &mut SessionState, case: FinancialCase, out: &mut Vec<Followup>) -> Result<(), ReduceError> {
    let address_changed = case.address != s.case.address;
    s.case = case;
    propagate_case(s)?;
    if address_changed && !s.case.address.is_empty() {
        for marker in s.bindings.markers_of_kind(DocKind::Map) {
            out.push(Followup::Geocode {
                marker,
                address: s.case.address.clone(),
            });
        }
    }
    Ok(())
}

fn propagate_case(s: &mut SessionState) -> Result<(), ReduceError> {
    for marker in s.bindings.markers_of_kind(DocKind::Affordability) {
        let Some(DocBody::Affordability(view)) = s.body(&marker) else {
            continue;
        };
        if view.case != s.case {
            let update = AffordabilityUpdate::Case { case: s.case.clone() };
            s.bindings.apply_update(&marker, &DocUpdate::Affordability(update))?;
        }
        if view.params != s.params {
            let update = AffordabilityUpdate::Params {
                params: s.params.clone(),
            };
            s.bindings.apply_update(&marker, &DocUpdate::Affordability(update))?;
        }
    }
    // An incomplete case leaves the mixes at their last consistent amount.
    let Some((amount, amortization)) = s.mortgage_terms() else {
        return Ok(());
    };
    for marker in s.bindings.markers_of_kind(DocKind::MortgageMix) {
        let Some(DocBody::MortgageMix(view)) = s.body(&marker) else {
            continue;
        };
        if view.mortgage_amount != amount || view.required_amortization != amortization {
            let update = MixUpdate::Mortgage {
                amount,
                required_amortization: amortization,
            };
            s.bindings.apply_update(&marker, &DocUpdate::MortgageMix(update))?;
        }
    }
    Ok(())
}

fn apply_dial(s: &mut SessionState, ticks: i64, out: &mut Vec<Followup>) -> Result<(), ReduceError> {
    let Some(focus) = s.dial_focus.clone() else {
        return Ok(());
    };
    let marker = &focus.marker;
    match focus.field {
        DialField::Income { index } => {
            let mut case = s.case.clone();
            let current = case.annual_incomes.get(index).copied().unwrap_or(0);
            set_income(&mut case, index, current.saturating_add(ticks.saturating_mul(INCOME_STEP)).max(0));
            set_case(s, case, out)
        }
        DialField::PurchasePrice => {
            let mut case = s.case.clone();
            let price = case.purchase_price.saturating_add(ticks.saturating_mul(PRICE_STEP));
            case.purchase_price = price.max(case.own_funds).max(0);
            set_case(s, case, out)
        }
        DialField::OwnFunds => {
            let mut case = s.case.clone();
            let own = case.own_funds.saturating_add(ticks.saturating_mul(PRICE_STEP));
            case.own_funds = own.clamp(0, case.purchase_price.max(0));
            set_case(s, case, out)
        }
        DialField::TrancheSize { index } => mix_update(
            s,
            marker,
            MixUpdate::Edit {
                edit: MixEdit::ResizeTranche {
                    index,
                    delta: ticks.saturating_mul(TRANCHE_STEP),
                },
            },
        ),
        DialField::TrancheTerm { index } => mix_update(
            s,
            marker,
            MixUpdate::Edit {
                edit: MixEdit::Reterm {
                    index,
                    delta_years: ticks.clamp(-100, 100) as i32,
                },
            },
        ),
        DialField::RateScenario => {
            let increase = (s.scenario.annual_increase + Decimal::from(ticks) * scenario_step()).max(Decimal::ZERO);
            s.scenario = RateScenario::rising(increase);
            for m in s.bindings.markers_of_kind(DocKind::MortgageMix) {
                let update = MixUpdate::Scenario {
                    scenario: s.scenario.clone(),
                };
                s.bindings.apply_update(&m, &DocUpdate::MortgageMix(update))?;
            }
            Ok(())
        }
        DialField::MapZoom => {
            s.bindings.apply_update(
                marker,
                &DocUpdate::Map(MapUpdate::Adjust {
                    input: MapInput::DialTicks { n: ticks },
                }),
            )?;
            Ok(())
        }
    }
}

fn mix_update(s: &mut SessionState, marker: &MarkerId, update: MixUpdate) -> Result<(), ReduceError> {
    expect_kind(s, marker, DocKind::MortgageMix)?;
    s.bindings.apply_update(marker, &DocUpdate::MortgageMix(update))?;
    s.active_mix = Some(marker.clone());
    Ok(())
}

fn require_present(s: &SessionState, marker: &MarkerId) -> Result<ObjectKind, ReduceError> {
    match s.objects.get(marker) {
        Some(r) if r.presence == Presence::In => Ok(r.kind),
        _ => Err(invalid(format!("{marker} is not on the table"))),
    }
}

fn set_focus(s: &mut SessionState, marker: &MarkerId, field: &str) -> Result<(), ReduceError> {
    if field.trim().eq_ignore_ascii_case("none") {
        s.dial_focus = None;
        return Ok(());
    }
    require_present(s, marker)?;
    let field: DialField = field.parse().map_err(invalid)?;
    let kind = doc_kind(s, marker);
    match (field, kind) {
        (
            DialField::Income { .. } | DialField::PurchasePrice | DialField::OwnFunds,
            Some(DocKind::Affordability | DocKind::MortgageMix),
        ) => {}
        (DialField::TrancheSize { index } | DialField::TrancheTerm { index }, Some(DocKind::MortgageMix)) => {
            if let Some(DocBody::MortgageMix(view)) = s.body(marker) {
                if index >= view.mix.tranches.len() {
                    return Err(invalid(format!("{marker} has no tranche {index}")));
                }
            }
        }
        (DialField::RateScenario, Some(DocKind::MortgageMix)) => {}
        (DialField::MapZoom, Some(DocKind::Map)) => {}
        (field, kind) => {
            let shown = kind.map_or_else(|| "nothing".to_string(), |k| format!("a {k} document"));
            return Err(invalid(format!("{field} cannot be adjusted on {marker}, which shows {shown}")));
        }
    }
    if kind == Some(DocKind::MortgageMix) {
        s.active_mix = Some(marker.clone());
    }
    s.dial_focus = Some(DialFocus {
        marker: marker.clone(),
        field,
    });
    Ok(())
}

fn bind_paper(s: &mut SessionState, marker: &MarkerId, body: DocBody, ts: Millis) -> Result<(), ReduceError> {
    if require_present(s, marker)? != ObjectKind::MarkedPaper {
        return Err(invalid(format!("{marker} is not a paper")));
    }
    let wanted = body.kind();
    match doc_kind(s, marker) {
        None => {
            s.bindings.bind(marker, body, ts)?;
            Ok(())
        }
        Some(k) if k == wanted => Ok(()),
        Some(k) => Err(invalid(format!("{marker} already shows a {k} document"))),
    }
}

fn click_label(s: &mut SessionState, ts: Millis, marker: &MarkerId, label: &str) -> Result<(), ReduceError> {
    require_present(s, marker)?;
    let label = label.trim().to_lowercase();
    match label.as_str() {
        "affordability" => {
            let view = AffordabilityView::new(s.case.clone(), s.params.clone());
            bind_paper(s, marker, DocBody::Affordability(view), ts)
        }
        // The printed label carries the typo.
        "mortgage mix" | "motgage mix" | "mix" => {
            let (amount, amortization) = s.mortgage_terms().unwrap_or((0, Decimal::ZERO));
            let view = MortgageMixView::new(amount, amortization, s.scenario.clone(), s.rates.clone());
            bind_paper(s, marker, DocBody::MortgageMix(view), ts)?;
            s.active_mix = Some(marker.clone());
            Ok(())
        }
        "+" | "add" | "add tranche" => mix_update(
            s,
            marker,
            MixUpdate::Edit {
                edit: MixEdit::AddTranche {
                    kind: TrancheType::Fixed,
                },
            },
        ),
        "amortization" => {
            let Some(DocBody::MortgageMix(view)) = s.body(marker) else {
                return Err(invalid(format!("{marker} has no mortgage-mix document")));
            };
            mix_update(
                s,
                marker,
                MixUpdate::IncludeAmortization {
                    include: !view.include_amortization,
                },
            )
        }
        "satellite" | "street" | "mode" => {
            let Some(DocBody::Map(view)) = s.body(marker) else {
                return Err(invalid(format!("{marker} has no map document")));
            };
            let wanted = match label.as_str() {
                "satellite" => MapMode::Satellite,
                "street" => MapMode::Street,
                _ => view.state.mode.toggled(),
            };
            if wanted != view.state.mode {
                s.bindings.apply_update(
                    marker,
                    &DocUpdate::Map(MapUpdate::Adjust {
                        input: MapInput::ToggleMode,
                    }),
                )?;
            }
            Ok(())
        }
        other => match other.parse::<DialField>() {
            Ok(_) => set_focus(s, marker, other),
            Err(e) if e.contains("text field") => Err(invalid(e)),
            Err(_) => Err(invalid(format!("unknown label `{other}`"))),
        },
    }
}

fn pen_strokes(s: &SessionState, sheet: &MarkerId, strokes: &[Stroke], out: &mut Vec<Followup>) -> Result<(), ReduceError> {
    require_present(s, sheet)?;
    match doc_kind(s, sheet) {
        None | Some(DocKind::Note) => {}
        Some(k) => return Err(invalid(format!("{sheet} shows a {k} document, not a note sheet"))),
    }
    if strokes.is_empty() {
        return Err(invalid("empty stroke batch"));
    }
    if !strokes.iter().all(Stroke::is_valid) {
        return Err(invalid("stroke batch contains an invalid stroke"));
    }
    out.push(Followup::Recognize {
        sheet: sheet.clone(),
        strokes: strokes.to_vec(),
    });
    Ok(())
}

fn note_recognized(
    s: &mut SessionState,
    ts: Millis,
    sheet: &MarkerId,
    lines: &[RecognizedLine],
    out: &mut Vec<Followup>,
) -> Result<(), ReduceError> {
    match doc_kind(s, sheet) {
        None => {
            s.bindings.bind(sheet, DocBody::Note(NoteSheet::default()), ts)?;
        }
        Some(DocKind::Note) => {}
        Some(k) => return Err(invalid(format!("{sheet} shows a {k} document, not a note sheet"))),
    }
    let text: Vec<&str> = lines.iter().map(|l| l.text.as_str()).collect();
    let facts = extract_facts(&s.catalog, &text.join("\n"));
    s.bindings.apply_update(
        sheet,
        &DocUpdate::Note(NoteUpdate::Append {
            lines: lines.to_vec(),
            facts: facts.clone(),
        }),
    )?;
    out.extend(facts.into_iter().map(|fact| {
        Followup::Event(Payload::FactExtracted {
            sheet: sheet.clone(),
            fact,
        })
    }));
    Ok(())
}

fn set_mix(s: &mut SessionState, marker: &MarkerId, mix: &MortgageMix) -> Result<(), ReduceError> {
    match mix_update(s, marker, MixUpdate::Replace { mix: mix.clone() }) {
        Err(ReduceError::Binding(BindingError::Mix(MixError::Unbalanced { expected, actual }))) => {
            Err(ReduceError::Conservation {
                marker: marker.clone(),
                expected,
                actual,
            })
        }
        other => other,
    }
}

fn ui_action(s: &mut SessionState, ts: Millis, action: &UiAction, out: &mut Vec<Followup>) -> Result<(), ReduceError> {
    match action {
        UiAction::ClickLabel { marker, label } => click_label(s, ts, marker, label),
        UiAction::SetDialFocus { marker, field } => set_focus(s, marker, field),
        UiAction::PenStrokeBatch { sheet, strokes } => pen_strokes(s, sheet, strokes, out),
        UiAction::LoadScenario { name } => {
            let case = preset_case(name).ok_or_else(|| invalid(format!("unknown scenario `{name}`")))?;
            set_case(s, case, out)
        }
        UiAction::EditMix { marker, edit } => mix_update(s, marker, MixUpdate::Edit { edit: edit.clone() }),
        UiAction::SetMix { marker, mix } => set_mix(s, marker, mix),
    }
}
