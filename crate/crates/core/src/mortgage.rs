//! Swiss mortgage model: case derivation, affordability, tranche mixes and
//! interest-rate paths.
//!
//! Principals, prices and incomes are whole francs. Rates are exact decimal
//! fractions, and every derived amount is computed in exact decimal
//! arithmetic; rounding to 0.01 CHF happens only for monthly figures.

use std::fmt;
use std::str::FromStr;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Whole Swiss francs.
pub type Chf = i64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MortgageError {
    #[error("own funds {own_funds} exceed purchase price {purchase_price}")]
    EquityExceedsPrice { own_funds: Chf, purchase_price: Chf },
    #[error("purchase price must be positive")]
    NonPositivePrice,
    #[error("amounts must be non-negative")]
    NegativeAmount,
    #[error("total income is zero")]
    NoIncome,
    #[error("mortgage mix has no tranches")]
    EmptyMix,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixError {
    #[error("edit would leave a tranche with no principal")]
    InsufficientResidual,
    #[error("tranche index {index} out of range (mix has {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("tranche {index} is not a fixed-rate tranche")]
    NotFixed { index: usize },
    #[error("mix totals {actual} CHF but the mortgage is {expected} CHF")]
    Unbalanced { expected: Chf, actual: Chf },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FinancialCase {
    pub purchase_price: Chf,
    pub own_funds: Chf,
    pub annual_incomes: Vec<Chf>,
    pub address: String,
}

impl FinancialCase {
    pub fn new(purchase_price: Chf, own_funds: Chf, annual_incomes: Vec<Chf>) -> Self {
        Self {
            purchase_price,
            own_funds,
            annual_incomes,
            address: String::new(),
        }
    }

    pub fn total_income(&self) -> Chf {
        self.annual_incomes.iter().sum()
    }

    pub fn validate(&self) -> Result<(), MortgageError> {
        if self.purchase_price <= 0 {
            return Err(MortgageError::NonPositivePrice);
        }
        if self.own_funds < 0 || self.annual_incomes.iter().any(|i| *i < 0) {
            return Err(MortgageError::NegativeAmount);
        }
        if self.own_funds > self.purchase_price {
            return Err(MortgageError::EquityExceedsPrice {
                own_funds: self.own_funds,
                purchase_price: self.purchase_price,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFigures {
    pub mortgage_amount: Chf,
    pub ltv: Decimal,
    pub equity_ratio: Decimal,
}

pub fn derive_case(case: &FinancialCase) -> Result<CaseFigures, MortgageError> {
    case.validate()?;
    let mortgage_amount = case.purchase_price - case.own_funds;
    let ltv = Decimal::from(mortgage_amount) / Decimal::from(case.purchase_price);
    Ok(CaseFigures {
        mortgage_amount,
        ltv,
        equity_ratio: Decimal::ONE - ltv,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffordabilityParams {
    pub imputed_rate: Decimal,
    pub maintenance_rate: Decimal,
    pub threshold: Decimal,
    pub target_ltv: Decimal,
    pub amortization_years: u32,
}

impl Default for AffordabilityParams {
    fn default() -> Self {
        Self {
            imputed_rate: Decimal::new(5, 2),
            maintenance_rate: Decimal::new(1, 2),
            threshold: Decimal::new(33, 2),
            target_ltv: Decimal::new(65, 2),
            amortization_years: 15,
        }
    }
}

impl AffordabilityParams {
    pub fn validate(&self) -> Result<(), MortgageError> {
        let unit = |name: &str, v: Decimal| {
            if v > Decimal::ZERO && v < Decimal::ONE {
                Ok(())
            } else {
                Err(MortgageError::InvalidParams(format!("{name} must be in (0, 1), got {v}")))
            }
        };
        unit("imputed_rate", self.imputed_rate)?;
        unit("maintenance_rate", self.maintenance_rate)?;
        unit("threshold", self.threshold)?;
        unit("target_ltv", self.target_ltv)?;
        if self.amortization_years < 1 {
            return Err(MortgageError::InvalidParams(
                "amortization_years must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Yearly amortization needed to reach the target loan-to-value within the
/// amortization period.
pub fn required_amortization(
    case: &FinancialCase,
    params: &AffordabilityParams,
) -> Result<Decimal, MortgageError> {
    params.validate()?;
    let figures = derive_case(case)?;
    let excess = Decimal::from(figures.mortgage_amount)
        - params.target_ltv * Decimal::from(case.purchase_price);
    if excess <= Decimal::ZERO {
        return Ok(Decimal::ZERO);
    }
    Ok(excess / Decimal::from(params.amortization_years))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub imputed_interest: Decimal,
    pub amortization: Decimal,
    pub maintenance: Decimal,
}

impl CostBreakdown {
    pub fn total(&self) -> Decimal {
        self.imputed_interest + self.amortization + self.maintenance
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affordability {
    pub ratio: Decimal,
    pub affordable: bool,
    pub breakdown: CostBreakdown,
}

pub fn affordability(
    case: &FinancialCase,
    params: &AffordabilityParams,
) -> Result<Affordability, MortgageError> {
    let figures = derive_case(case)?;
    let income = case.total_income();
    if income <= 0 {
        return Err(MortgageError::NoIncome);
    }
    let breakdown = CostBreakdown {
        imputed_interest: Decimal::from(figures.mortgage_amount) * params.imputed_rate,
        amortization: required_amortization(case, params)?,
        maintenance: Decimal::from(case.purchase_price) * params.maintenance_rate,
    };
    let cost = breakdown.total();
    let income = Decimal::from(income);
    Ok(Affordability {
        ratio: cost / income,
        // Compared without division so the flag is exact.
        affordable: cost <= params.threshold * income,
        breakdown,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrancheType {
    Fixed,
    Libor,
}

impl FromStr for TrancheType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(TrancheType::Fixed),
            "libor" => Ok(TrancheType::Libor),
            other => Err(format!("unknown tranche kind `{other}`")),
        }
    }
}

impl fmt::Display for TrancheType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrancheType::Fixed => "fixed",
            TrancheType::Libor => "libor",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrancheKind {
    Fixed { term_years: u32 },
    Libor,
}

impl TrancheKind {
    pub fn tranche_type(&self) -> TrancheType {
        match self {
            TrancheKind::Fixed { .. } => TrancheType::Fixed,
            TrancheKind::Libor => TrancheType::Libor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tranche {
    pub kind: TrancheKind,
    pub principal: Chf,
    pub annual_rate: Decimal,
}

impl Tranche {
    pub fn fixed(term_years: u32, principal: Chf, annual_rate: Decimal) -> Self {
        Self {
            kind: TrancheKind::Fixed { term_years },
            principal,
            annual_rate,
        }
    }

    pub fn libor(principal: Chf, annual_rate: Decimal) -> Self {
        Self {
            kind: TrancheKind::Libor,
            principal,
            annual_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MortgageMix {
    pub tranches: Vec<Tranche>,
}

impl MortgageMix {
    pub fn total_principal(&self) -> Chf {
        self.tranches.iter().map(|t| t.principal).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tranches.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RateScenario {
    pub annual_increase: Decimal,
}

impl RateScenario {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn rising(annual_increase: Decimal) -> Self {
        Self { annual_increase }
    }
}

pub fn round_cents(amount: Decimal) -> Decimal {
    amount.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero)
}

fn yearly_interest(mix: &MortgageMix) -> Decimal {
    mix.tranches
        .iter()
        .map(|t| Decimal::from(t.principal) * t.annual_rate)
        .sum()
}

/// Monthly payment: yearly interest of every tranche plus yearly
/// amortization, divided by twelve and rounded half-up to the centime.
pub fn monthly_cost(mix: &MortgageMix, amortization_per_year: Decimal) -> Result<Decimal, MortgageError> {
    if mix.is_empty() {
        return Err(MortgageError::EmptyMix);
    }
    Ok(round_cents(
        (yearly_interest(mix) + amortization_per_year) / Decimal::from(12),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearCost {
    pub year: u32,
    pub interest: Decimal,
    pub amortization: Decimal,
    pub total: Decimal,
    pub monthly: Decimal,
    /// Principal left after this year's amortization.
    pub remaining_principal: Decimal,
    /// Some fixed tranche ran past its term and was re-rated at the
    /// scenario level this year.
    pub fixed_rerated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostSchedule {
    pub years: Vec<YearCost>,
}

/// Projects yearly costs under a rate scenario.
///
/// Floating tranches move by `annual_increase` per year. Fixed tranches keep
/// their rate during the term and then follow the scenario from their own
/// base rate. Amortization is taken from floating tranches first, then from
/// fixed tranches in mix order.
pub fn simulate_rate_path(
    mix: &MortgageMix,
    scenario: &RateScenario,
    amortization_per_year: Decimal,
    horizon_years: u32,
) -> CostSchedule {
    let mut principals: Vec<Decimal> = mix.tranches.iter().map(|t| Decimal::from(t.principal)).collect();
    let mut order: Vec<usize> = (0..mix.tranches.len())
        .filter(|&i| mix.tranches[i].kind == TrancheKind::Libor)
        .collect();
    order.extend((0..mix.tranches.len()).filter(|&i| mix.tranches[i].kind != TrancheKind::Libor));

    let mut years = Vec::with_capacity(horizon_years as usize);
    for year in 0..horizon_years {
        let drift = Decimal::from(year) * scenario.annual_increase;
        let mut interest = Decimal::ZERO;
        let mut fixed_rerated = false;
        for (tranche, principal) in mix.tranches.iter().zip(&principals) {
            let rate = match tranche.kind {
                TrancheKind::Libor => tranche.annual_rate + drift,
                TrancheKind::Fixed { term_years } if year < term_years => tranche.annual_rate,
                TrancheKind::Fixed { .. } => {
                    fixed_rerated = true;
                    tranche.annual_rate + drift
                }
            };
            interest += *principal * rate;
        }

        let outstanding: Decimal = principals.iter().copied().sum();
        let amortization = amortization_per_year.max(Decimal::ZERO).min(outstanding);
        let mut to_repay = amortization;
        for &i in &order {
            if to_repay.is_zero() {
                break;
            }
            let step = to_repay.min(principals[i]);
            principals[i] -= step;
            to_repay -= step;
        }

        let total = interest + amortization;
        years.push(YearCost {
            year,
            interest,
            amortization,
            total,
            monthly: round_cents(total / Decimal::from(12)),
            remaining_principal: principals.iter().copied().sum(),
            fixed_rerated,
        });
    }
    CostSchedule { years }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateEntry {
    pub kind: TrancheType,
    pub term_years: u32,
    pub rate: Decimal,
}

/// Offered rates per tranche type and term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateTable {
    pub entries: Vec<RateEntry>,
}

pub const DEFAULT_FIXED_TERM: u32 = 10;

impl Default for RateTable {
    fn default() -> Self {
        Self {
            entries: vec![
                RateEntry {
                    kind: TrancheType::Fixed,
                    term_years: DEFAULT_FIXED_TERM,
                    rate: Decimal::new(16, 3),
                },
                RateEntry {
                    kind: TrancheType::Libor,
                    term_years: 0,
                    rate: Decimal::new(10, 3),
                },
            ],
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("rate table line {line}: {message}")]
pub struct RateTableError {
    pub line: usize,
    pub message: String,
}

impl RateTable {
    /// Parses `kind term rate` lines, e.g. `fixed 10 0.016`.
    pub fn parse(text: &str) -> Result<Self, RateTableError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| RateTableError { line: idx + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err(format!("expected `kind term rate`, got `{line}`")));
            }
            let kind = fields[0].parse().map_err(err)?;
            let term_years = fields[1].parse().map_err(|e| err(format!("term: {e}")))?;
            let rate = Decimal::from_str(fields[2]).map_err(|e| err(format!("rate: {e}")))?;
            if rate.is_sign_negative() {
                return Err(err("rate must be non-negative".into()));
            }
            entries.push(RateEntry { kind, term_years, rate });
        }
        if entries.is_empty() {
            return Err(RateTableError {
                line: 0,
                message: "rate table is empty".into(),
            });
        }
        Ok(Self { entries })
    }

    /// Rate for the closest listed term of the given type (shorter wins ties).
    pub fn rate_for(&self, kind: TrancheType, term_years: u32) -> Decimal {
        self.entries
            .iter()
            .filter(|e| e.kind == kind)
            .min_by_key(|e| (e.term_years.abs_diff(term_years), e.term_years))
            .map(|e| e.rate)
            .unwrap_or_else(|| {
                let fallback = RateTable::default();
                fallback
                    .entries
                    .into_iter()
                    .find(|e| e.kind == kind)
                    .map(|e| e.rate)
                    .unwrap_or_default()
            })
    }

    fn new_tranche(&self, kind: TrancheType, principal: Chf) -> Tranche {
        match kind {
            TrancheType::Fixed => Tranche::fixed(
                DEFAULT_FIXED_TERM,
                principal,
                self.rate_for(TrancheType::Fixed, DEFAULT_FIXED_TERM),
            ),
            TrancheType::Libor => Tranche::libor(principal, self.rate_for(TrancheType::Libor, 0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MixEdit {
    /// Adds a tranche. The first tranche takes the whole mortgage; later
    /// ones take half of the residual floating tranche (or of the last
    /// tranche when there is none).
    AddTranche { kind: TrancheType },
    /// Removes a tranche and returns its principal to the residual floating
    /// tranche.
    RemoveTranche { index: usize },
    /// Moves `delta` francs into tranche `index` from the residual floating
    /// tranche (negative `delta` moves principal out).
    ResizeTranche { index: usize, delta: Chf },
    Reterm { index: usize, delta_years: i32 },
}

// First floating tranche other than `exclude`.
fn residual_index(mix: &MortgageMix, exclude: Option<usize>) -> Option<usize> {
    mix.tranches
        .iter()
        .enumerate()
        .find(|(i, t)| Some(*i) != exclude && t.kind == TrancheKind::Libor)
        .map(|(i, _)| i)
}

fn check_index(mix: &MortgageMix, index: usize) -> Result<(), MixError> {
    if index >= mix.tranches.len() {
        return Err(MixError::IndexOutOfRange {
            index,
            len: mix.tranches.len(),
        });
    }
    Ok(())
}

/// Applies one edit, keeping the sum of principals equal to the mortgage.
pub fn edit_mix(
    mix: &MortgageMix,
    op: &MixEdit,
    mortgage_amount: Chf,
    rates: &RateTable,
) -> Result<MortgageMix, MixError> {
    if let MixEdit::AddTranche { kind } = op {
        if mix.is_empty() {
            if mortgage_amount <= 0 {
                return Err(MixError::InsufficientResidual);
            }
            return Ok(MortgageMix {
                tranches: vec![rates.new_tranche(*kind, mortgage_amount)],
            });
        }
    }
    let actual = mix.total_principal();
    if actual != mortgage_amount {
        return Err(MixError::Unbalanced {
            expected: mortgage_amount,
            actual,
        });
    }

    let mut out = mix.clone();
    match *op {
        MixEdit::AddTranche { kind } => {
            let donor = residual_index(mix, None).unwrap_or(mix.tranches.len() - 1);
            let share = out.tranches[donor].principal / 2;
            if share <= 0 {
                return Err(MixError::InsufficientResidual);
            }
            out.tranches[donor].principal -= share;
            out.tranches.push(rates.new_tranche(kind, share));
        }
        MixEdit::RemoveTranche { index } => {
            check_index(mix, index)?;
            let removed = out.tranches.remove(index);
            if out.tranches.is_empty() {
                return Err(MixError::InsufficientResidual);
            }
            let target = residual_index(&out, None).unwrap_or(out.tranches.len() - 1);
            out.tranches[target].principal += removed.principal;
        }
        MixEdit::ResizeTranche { index, delta } => {
            check_index(mix, index)?;
            if delta == 0 {
                return Ok(out);
            }
            match residual_index(mix, Some(index)) {
                Some(r) => {
                    out.tranches[r].principal -= delta;
                }
                None if delta < 0 => {
                    out.tranches.push(rates.new_tranche(TrancheType::Libor, -delta));
                }
                None => {
                    let donor = (0..mix.tranches.len())
                        .rev()
                        .find(|&i| i != index)
                        .ok_or(MixError::InsufficientResidual)?;
                    out.tranches[donor].principal -= delta;
                }
            }
            out.tranches[index].principal += delta;
            if out.tranches.iter().any(|t| t.principal <= 0) {
                return Err(MixError::InsufficientResidual);
            }
        }
        MixEdit::Reterm { index, delta_years } => {
            check_index(mix, index)?;
            let tranche = &mut out.tranches[index];
            let TrancheKind::Fixed { term_years } = tranche.kind else {
                return Err(MixError::NotFixed { index });
            };
            let term = (i64::from(term_years) + i64::from(delta_years)).clamp(1, 50) as u32;
            tranche.kind = TrancheKind::Fixed { term_years: term };
            tranche.annual_rate = rates.rate_for(TrancheType::Fixed, term);
        }
    }
    Ok(out)
}

/// Adapts a mix to a changed mortgage amount. The difference goes to the
/// residual floating tranche; shrinking beyond it consumes tranches from
/// the end of the mix.
pub fn rebalance(mix: &MortgageMix, mortgage_amount: Chf, rates: &RateTable) -> MortgageMix {
    if mortgage_amount <= 0 {
        return MortgageMix::default();
    }
    if mix.is_empty() {
        return mix.clone();
    }
    let mut out = mix.clone();
    let diff = mortgage_amount - mix.total_principal();
    if diff > 0 {
        match residual_index(&out, None) {
            Some(r) => out.tranches[r].principal += diff,
            None => out.tranches.push(rates.new_tranche(TrancheType::Libor, diff)),
        }
    } else if diff < 0 {
        let mut excess = -diff;
        let residual = residual_index(&out, None);
        let order = residual
            .into_iter()
            .chain((0..out.tranches.len()).rev().filter(|i| Some(*i) != residual));
        for i in order {
            let take = excess.min(out.tranches[i].principal);
            out.tranches[i].principal -= take;
            excess -= take;
            if excess == 0 {
                break;
            }
        }
        out.tranches.retain(|t| t.principal > 0);
    }
    out
}
