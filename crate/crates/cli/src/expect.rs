use std::str::FromStr;

use livepaper_core::binding::{DocBody, MapView, MortgageMixView};
use livepaper_core::mortgage::TrancheKind;
use livepaper_core::session::{summarize, Session, SessionState};
use livepaper_core::tracker::{MarkerId, ObjectKind};
use rust_decimal::Decimal;

/// `expect key value [tolerance]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub key: String,
    pub value: String,
    pub tolerance: Option<Decimal>,
}

#[derive(Debug, Clone, PartialEq)]
enum Actual {
    Num(Decimal),
    Text(String),
}

impl From<i64> for Actual {
    fn from(v: i64) -> Self {
        Actual::Num(Decimal::from(v))
    }
}

impl From<Decimal> for Actual {
    fn from(v: Decimal) -> Self {
        Actual::Num(v)
    }
}

impl From<bool> for Actual {
    fn from(v: bool) -> Self {
        Actual::Text(v.to_string())
    }
}

impl From<String> for Actual {
    fn from(v: String) -> Self {
        Actual::Text(v)
    }
}

/// Keys accepted by `expect`, for error messages and docs.
pub const KEYS: &[&str] = &[
    "price",
    "own_funds",
    "income",
    "income:<i>",
    "mortgage",
    "ltv",
    "equity_ratio",
    "ratio",
    "affordable",
    "monthly_cost",
    "amortization",
    "rate_scenario",
    "tranche_count",
    "tranche_sum",
    "tranche_principal:<i>",
    "tranche_rate:<i>",
    "tranche_term:<i>",
    "interest_year:<n>",
    "monthly_year:<n>",
    "map_visible",
    "map_located",
    "map_zoom",
    "map_mode",
    "address",
    "focus",
    "tint:<marker>",
    "doc:<marker>",
    "present:<marker>",
    "seq",
    "events",
];

fn active_mix(state: &SessionState) -> Option<MortgageMixView> {
    match state.body(state.active_mix.as_ref()?)? {
        DocBody::MortgageMix(view) => Some(view),
        _ => None,
    }
}

fn visible_map(state: &SessionState) -> Option<MapView> {
    state
        .objects
        .iter()
        .filter(|(id, rec)| rec.kind == ObjectKind::HouseToken && state.is_present(id))
        .find_map(|(id, _)| match state.body(id) {
            Some(DocBody::Map(view)) => Some(view),
            _ => None,
        })
}

fn lookup(session: &Session, key: &str) -> Result<Option<Actual>, String> {
    let state = session.state();
    let summary = summarize(state);
    let figures = summary.figures.as_ref();
    let afford = summary.affordability.as_ref();
    let (name, arg) = match key.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (key, None),
    };
    let index = || -> Result<usize, String> {
        arg.and_then(|a| a.parse().ok())
            .ok_or_else(|| format!("`{name}` needs a numeric index, e.g. `{name}:0`"))
    };
    let marker = || -> Result<MarkerId, String> {
        arg.filter(|a| !a.is_empty())
            .map(MarkerId::new)
            .ok_or_else(|| format!("`{name}` needs a marker, e.g. `{name}:P1`"))
    };
    let mix = active_mix(state);
    let tranche = |i: usize| mix.as_ref().and_then(|m| m.mix.tranches.get(i).cloned());
    let year = |i: usize| mix.as_ref().and_then(|m| m.schedule.years.get(i).cloned());
    Ok(match name {
        "price" => Some(state.case.purchase_price.into()),
        "own_funds" => Some(state.case.own_funds.into()),
        "income" => match arg {
            None => Some(state.case.total_income().into()),
            Some(_) => state.case.annual_incomes.get(index()?).map(|&v| v.into()),
        },
        "mortgage" => figures.map(|f| f.mortgage_amount.into()),
        "ltv" => figures.map(|f| f.ltv.into()),
        "equity_ratio" => figures.map(|f| f.equity_ratio.into()),
        "ratio" => afford.map(|a| a.ratio.into()),
        "affordable" => afford.map(|a| a.affordable.into()),
        "monthly_cost" => summary.monthly_cost.map(Actual::from),
        "amortization" => mix.as_ref().map(|m| m.include_amortization.into()),
        "rate_scenario" => Some(state.scenario.annual_increase.into()),
        "tranche_count" => mix.as_ref().map(|m| (m.mix.tranches.len() as i64).into()),
        "tranche_sum" => mix.as_ref().map(|m| m.mix.total_principal().into()),
        "tranche_principal" => tranche(index()?).map(|t| t.principal.into()),
        "tranche_rate" => tranche(index()?).map(|t| t.annual_rate.into()),
        "tranche_term" => tranche(index()?).map(|t| match t.kind {
            TrancheKind::Fixed { term_years } => i64::from(term_years).into(),
            TrancheKind::Libor => 0.into(),
        }),
        "interest_year" => year(index()?).map(|y| y.interest.into()),
        "monthly_year" => year(index()?).map(|y| y.monthly.into()),
        "map_visible" => Some(visible_map(state).is_some().into()),
        "map_located" => Some(visible_map(state).is_some_and(|m| m.located).into()),
        "map_zoom" => visible_map(state).map(|m| i64::from(m.state.zoom).into()),
        "map_mode" => visible_map(state).map(|m| m.state.mode.to_string().into()),
        "address" => Some(state.case.address.clone().into()),
        "focus" => state
            .dial_focus
            .as_ref()
            .map(|f| format!("{}:{}", f.marker, f.field).into()),
        "tint" => {
            let m = marker()?;
            let render = session.render();
            render
                .entry(&m)
                .and_then(|e| e.tint)
                .map(|t| format!("{t:?}").to_ascii_lowercase().into())
        }
        "doc" => state.body(&marker()?).map(|b| {
            let kind = serde_json::to_value(b.kind()).ok();
            kind.and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default().into()
        }),
        "present" => Some(state.is_present(&marker()?).into()),
        "seq" => state.last_seq.map(|s| Actual::Num(Decimal::from(s))),
        "events" => Some((session.journal().len() as i64).into()),
        _ => return Err(format!("unknown key `{key}`; known keys: {}", KEYS.join(", "))),
    })
}

/// Checks one expectation; returns whether it held and a short detail.
pub fn evaluate(session: &Session, expectation: &Expectation) -> (bool, String) {
    let actual = match lookup(session, &expectation.key) {
        Ok(a) => a,
        Err(message) => return (false, message),
    };
    let want = &expectation.value;
    match (actual, Decimal::from_str(want)) {
        (Some(Actual::Num(got)), Ok(target)) => {
            let tol = expectation.tolerance.unwrap_or_default();
            let ok = (got - target).abs() <= tol;
            (ok, format!("got {got}, want {target} ± {tol}"))
        }
        (Some(Actual::Num(got)), Err(_)) => (false, format!("got {got}, want non-numeric `{want}`")),
        (Some(Actual::Text(got)), _) => (got.eq_ignore_ascii_case(want), format!("got {got}, want {want}")),
        (None, _) => (want.eq_ignore_ascii_case("none"), format!("got none, want {want}")),
    }
}
