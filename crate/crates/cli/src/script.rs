//! Line-oriented session scripts (`.lps`).
//!
//! ```text
//! # comment
//! geocode 47.3887 8.1744 Florastreet 6, Lenzburg
//! place P1 marked_paper 400 500 [theta]
//! move P1 450 500 [theta]
//! remove P1
//! dial 450 [D1]
//! click P1 Motgage Mix
//! focus P1 income
//! write N1 KP = 770'000\nEM = 202'000
//! load transcript_4_2
//! edit P2 resize 0 116000
//! setmix P2 fixed:10:400000:0.016 libor:168000:0.010
//! wait 500
//! expect monthly_cost 673.33 0.01
//! ```
//!
//! Every command advances a logical clock by [`TICK_MS`], so two runs of
//! the same script journal identical timestamps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use livepaper_core::map::{GeoPoint, OfflineGeocoder};
use livepaper_core::mortgage::{MixEdit, MortgageMix, Tranche, TrancheType};
use livepaper_core::notes::{synthesize_strokes, StubRecognizer};
use livepaper_core::session::{Payload, Session, SessionConfig, SessionError, UiAction};
use livepaper_core::tracker::{MarkerId, Millis, ObjectKind};
use rust_decimal::Decimal;
use thiserror::Error;

use crate::expect::{evaluate, Expectation};

pub const TICK_MS: Millis = 100;

#[derive(Debug, Error, PartialEq)]
#[error("script line {line}: {message}")]
pub struct ScriptParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Geocode { point: GeoPoint, address: String },
    Place { marker: MarkerId, kind: ObjectKind, x: f64, y: f64, theta: f64 },
    Move { marker: MarkerId, x: f64, y: f64, theta: Option<f64> },
    Remove { marker: MarkerId },
    Dial { degrees: f64, marker: Option<MarkerId> },
    Click { marker: MarkerId, label: String },
    Focus { marker: MarkerId, field: String },
    Write { sheet: MarkerId, text: String },
    Load { name: String },
    Edit { marker: MarkerId, edit: MixEdit },
    SetMix { marker: MarkerId, mix: MortgageMix },
    Wait { ms: Millis },
    Expect(Expectation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub line: usize,
    pub source: String,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    pub steps: Vec<Step>,
}

fn num<T: FromStr>(token: Option<&str>, what: &str) -> Result<T, String> {
    let token = token.ok_or_else(|| format!("missing {what}"))?;
    token.parse().map_err(|_| format!("invalid {what} `{token}`"))
}

fn opt_num<T: FromStr>(token: Option<&str>, what: &str) -> Result<Option<T>, String> {
    token.map(|t| num(Some(t), what)).transpose()
}

/// Splits off the first `n` words and returns them with the rest of the
/// line (trimmed, possibly empty).
fn words(line: &str, n: usize) -> (Vec<&str>, &str) {
    let mut out = Vec::new();
    let mut rest = line.trim_start();
    while out.len() < n && !rest.is_empty() {
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        out.push(&rest[..end]);
        rest = rest[end..].trim_start();
    }
    (out, rest.trim_end())
}

fn no_extra(rest: &str) -> Result<(), String> {
    if rest.is_empty() {
        Ok(())
    } else {
        Err(format!("unexpected trailing `{rest}`"))
    }
}

fn parse_tranche(token: &str) -> Result<Tranche, String> {
    let parts: Vec<&str> = token.split(':').collect();
    let rate = |s: &str| Decimal::from_str(s).map_err(|_| format!("invalid rate `{s}`"));
    match parts.as_slice() {
        ["fixed", term, principal, r] => Ok(Tranche::fixed(
            num(Some(term), "term")?,
            num(Some(principal), "principal")?,
            rate(r)?,
        )),
        ["libor", principal, r] => Ok(Tranche::libor(num(Some(principal), "principal")?, rate(r)?)),
        _ => Err(format!(
            "expected `fixed:term:principal:rate` or `libor:principal:rate`, got `{token}`"
        )),
    }
}

fn parse_edit(args: &str) -> Result<MixEdit, String> {
    let (w, rest) = words(args, 3);
    no_extra(rest)?;
    let op = w.first().copied().unwrap_or_default();
    match op {
        "add" => Ok(MixEdit::AddTranche {
            kind: num::<TrancheType>(w.get(1).copied(), "tranche kind")?,
        }),
        "remove" => Ok(MixEdit::RemoveTranche {
            index: num(w.get(1).copied(), "index")?,
        }),
        "resize" => Ok(MixEdit::ResizeTranche {
            index: num(w.get(1).copied(), "index")?,
            delta: num(w.get(2).copied(), "delta")?,
        }),
        "reterm" => Ok(MixEdit::Reterm {
            index: num(w.get(1).copied(), "index")?,
            delta_years: num(w.get(2).copied(), "years")?,
        }),
        other => Err(format!("unknown edit `{other}` (add, remove, resize, reterm)")),
    }
}

fn parse_command(line: &str) -> Result<Command, String> {
    let (head, rest) = words(line, 1);
    let verb = head.first().copied().unwrap_or_default();
    let marker = |s: Option<&&str>| -> Result<MarkerId, String> {
        s.map(|s| MarkerId::new(*s)).ok_or_else(|| "missing marker".to_string())
    };
    match verb {
        "geocode" => {
            let (w, address) = words(rest, 2);
            if address.is_empty() {
                return Err("missing address".into());
            }
            let point = GeoPoint::new(num(w.first().copied(), "latitude")?, num(w.get(1).copied(), "longitude")?)
                .map_err(|e| e.to_string())?;
            Ok(Command::Geocode {
                point,
                address: address.to_string(),
            })
        }
        "place" => {
            let (w, tail) = words(rest, 5);
            no_extra(tail)?;
            Ok(Command::Place {
                marker: marker(w.first())?,
                kind: num(w.get(1).copied(), "object kind")?,
                x: num(w.get(2).copied(), "x")?,
                y: num(w.get(3).copied(), "y")?,
                theta: opt_num(w.get(4).copied(), "theta")?.unwrap_or(0.0),
            })
        }
        "move" => {
            let (w, tail) = words(rest, 4);
            no_extra(tail)?;
            Ok(Command::Move {
                marker: marker(w.first())?,
                x: num(w.get(1).copied(), "x")?,
                y: num(w.get(2).copied(), "y")?,
                theta: opt_num(w.get(3).copied(), "theta")?,
            })
        }
        "remove" => {
            let (w, tail) = words(rest, 1);
            no_extra(tail)?;
            Ok(Command::Remove { marker: marker(w.first())? })
        }
        "dial" => {
            let (w, tail) = words(rest, 2);
            no_extra(tail)?;
            Ok(Command::Dial {
                degrees: num(w.first().copied(), "degrees")?,
                marker: w.get(1).map(|m| MarkerId::new(*m)),
            })
        }
        "click" | "focus" | "write" => {
            let (w, text) = words(rest, 1);
            let m = marker(w.first())?;
            if text.is_empty() {
                return Err(format!("{verb} needs text after the marker"));
            }
            Ok(match verb {
                "click" => Command::Click {
                    marker: m,
                    label: text.to_string(),
                },
                "focus" => Command::Focus {
                    marker: m,
                    field: text.to_string(),
                },
                _ => Command::Write {
                    sheet: m,
                    text: text.replace("\\n", "\n"),
                },
            })
        }
        "load" => {
            let (w, tail) = words(rest, 1);
            no_extra(tail)?;
            let name = w.first().ok_or("missing scenario name")?;
            Ok(Command::Load { name: name.to_string() })
        }
        "edit" => {
            let (w, args) = words(rest, 1);
            Ok(Command::Edit {
                marker: marker(w.first())?,
                edit: parse_edit(args)?,
            })
        }
        "setmix" => {
            let (w, tranches_text) = words(rest, 1);
            let tranches = tranches_text.split_whitespace().map(parse_tranche).collect::<Result<_, _>>()?;
            Ok(Command::SetMix {
                marker: marker(w.first())?,
                mix: MortgageMix { tranches },
            })
        }
        "wait" => {
            let (w, tail) = words(rest, 1);
            no_extra(tail)?;
            Ok(Command::Wait {
                ms: num(w.first().copied(), "milliseconds")?,
            })
        }
        "expect" => {
            let (w, tail) = words(rest, 3);
            no_extra(tail)?;
            let key = w.first().ok_or("missing key")?;
            let value = w.get(1).ok_or("missing expected value")?;
            let tolerance = w
                .get(2)
                .map(|t| Decimal::from_str(t).map_err(|_| format!("invalid tolerance `{t}`")))
                .transpose()?;
            Ok(Command::Expect(Expectation {
                key: key.to_string(),
                value: value.to_string(),
                tolerance,
            }))
        }
        "" => Err("empty command".into()),
        other => Err(format!("unknown command `{other}`")),
    }
}

impl Script {
    pub fn parse(text: &str) -> Result<Self, ScriptParseError> {
        let mut steps = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let source = raw.trim();
            if source.is_empty() || source.starts_with('#') {
                continue;
            }
            let command = parse_command(source).map_err(|message| ScriptParseError { line: idx + 1, message })?;
            steps.push(Step {
                line: idx + 1,
                source: source.to_string(),
                command,
            });
        }
        Ok(Self { steps })
    }
}

/// Result of one checked step: an expectation, or an action that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub line: usize,
    pub source: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub outcomes: Vec<Outcome>,
    pub events: usize,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.passed).count()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            let tag = if o.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} line {}: {} ({})", o.line, o.source, o.detail)?;
        }
        let checks = self.outcomes.len();
        write!(
            f,
            "{} of {checks} checks passed, {} events journaled",
            checks - self.failures(),
            self.events
        )
    }
}

/// Runs a script against a fresh session. Action failures and unmet
/// expectations go into the report; only a journal write failure aborts.
pub fn run(
    script: &Script,
    config: SessionConfig,
    geocoder: OfflineGeocoder,
    recognizer: Arc<StubRecognizer>,
    sink: Option<Box<dyn Write + Send>>,
) -> Result<(Report, Session), SessionError> {
    // Script geocode lines are collected up front so the session's
    // geocoder is fixed for the whole run.
    let mut geocoder = geocoder;
    for step in &script.steps {
        if let Command::Geocode { point, address } = &step.command {
            geocoder.insert(address.clone(), *point);
        }
    }
    let mut session = Session::new(config, Box::new(recognizer.clone()), Box::new(geocoder), sink)?;
    let mut report = Report::default();
    let mut clock: Millis = 0;
    for step in &script.steps {
        clock += TICK_MS;
        let ui = |action: UiAction| Payload::Ui { action };
        let result = match &step.command {
            Command::Geocode { .. } => Ok(Vec::new()),
            Command::Place {
                marker,
                kind,
                x,
                y,
                theta,
            } => session.place(clock, marker, *kind, *x, *y, *theta),
            Command::Move { marker, x, y, theta } => session.move_object(clock, marker, *x, *y, *theta),
            Command::Remove { marker } => session.remove(clock, marker),
            Command::Dial { degrees, marker } => session.rotate_dial(clock, marker.as_ref(), *degrees),
            Command::Click { marker, label } => session.submit(
                clock,
                ui(UiAction::ClickLabel {
                    marker: marker.clone(),
                    label: label.clone(),
                }),
            ),
            Command::Focus { marker, field } => session.submit(
                clock,
                ui(UiAction::SetDialFocus {
                    marker: marker.clone(),
                    field: field.clone(),
                }),
            ),
            Command::Write { sheet, text } => {
                let strokes = synthesize_strokes(text, clock);
                recognizer.learn(&strokes, text.clone());
                session.submit(
                    clock,
                    ui(UiAction::PenStrokeBatch {
                        sheet: sheet.clone(),
                        strokes,
                    }),
                )
            }
            Command::Load { name } => session.submit(clock, ui(UiAction::LoadScenario { name: name.clone() })),
            Command::Edit { marker, edit } => session.submit(
                clock,
                ui(UiAction::EditMix {
                    marker: marker.clone(),
                    edit: edit.clone(),
                }),
            ),
            Command::SetMix { marker, mix } => session.submit(
                clock,
                ui(UiAction::SetMix {
                    marker: marker.clone(),
                    mix: mix.clone(),
                }),
            ),
            Command::Wait { ms } => {
                clock += ms;
                Ok(Vec::new())
            }
            Command::Expect(expectation) => {
                let (passed, detail) = evaluate(&session, expectation);
                report.outcomes.push(Outcome {
                    line: step.line,
                    source: step.source.clone(),
                    passed,
                    detail,
                });
                Ok(Vec::new())
            }
        };
        match result {
            Ok(_) => {}
            Err(e @ SessionError::Journal(_)) => return Err(e),
            Err(e) => report.outcomes.push(Outcome {
                line: step.line,
                source: step.source.clone(),
                passed: false,
                detail: format!("rejected: {e}"),
            }),
        }
    }
    report.events = session.journal().len();
    Ok((report, session))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_command() {
        let text = "\
# notes
geocode 47.3887 8.1744 Florastreet 6, Lenzburg
place P1 marked_paper 400 500
move P1 410 500 15
dial -30
click P2 Motgage Mix
write N1 KP = 770'000\\nEM = 202'000
edit P2 resize 0 116000
setmix P2 fixed:10:400000:0.016 libor:168000:0.010
expect monthly_cost 673.33 0.01
";
        let script = Script::parse(text).unwrap();
        assert_eq!(script.steps.len(), 9);
        assert_eq!(script.steps[0].line, 2);
        assert_eq!(
            script.steps[4].command,
            Command::Click {
                marker: MarkerId::new("P2"),
                label: "Motgage Mix".into()
            }
        );
        let Command::Write { text, .. } = &script.steps[5].command else { panic!() };
        assert_eq!(text, "KP = 770'000\nEM = 202'000");
        let Command::SetMix { mix, .. } = &script.steps[7].command else { panic!() };
        assert_eq!(mix.total_principal(), 568_000);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = Script::parse("place P1 marked_paper 1 2\n\nplace P2 sofa 1 2").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(Script::parse("dial").unwrap_err().message.contains("degrees"));
        assert!(Script::parse("teleport P1").unwrap_err().message.contains("unknown command"));
        assert!(Script::parse("expect ltv 0.7 0.1 extra").is_err());
        assert!(Script::parse("edit P2 shrink 0").is_err());
    }
}
