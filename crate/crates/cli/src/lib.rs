//! Script runner behind the `mesoscribe` binary.
//!
//! A script is one turn per line. Plain lines are chat messages; lines
//! starting with `@` are directives:
//!
//! ```text
//! @select N            answer a pending selection with candidate N
//! @cancel              drop a pending selection
//! @apply N             apply rule N
//! @revert N            revert the latest application of rule N
//! @feedback N TEXT     correct the translator output of turn N
//! @auto TEXT           run a whole model description automatically
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use mesoscribe_core::session::{Session, TurnError, TurnOutcome};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Message(String),
    Select(usize),
    Cancel,
    Apply(u64),
    Revert(u64),
    Feedback { turn: usize, corrected: String },
    Auto(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ScriptError {}

fn number<T: std::str::FromStr>(line: usize, directive: &str, arg: &str) -> Result<T, ScriptError> {
    arg.trim().parse().map_err(|_| ScriptError {
        line,
        message: format!("@{directive} expects a non-negative integer, got `{}`", arg.trim()),
    })
}

/// Parse a whole script; the first bad line fails the parse.
pub fn parse_script(text: &str) -> Result<Vec<(usize, Directive)>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some(rest) = t.strip_prefix('@') else {
            out.push((line, Directive::Message(t.to_string())));
            continue;
        };
        let (name, arg) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let arg = arg.trim();
        let need_text = |what: &str| {
            if arg.is_empty() {
                Err(ScriptError {
                    line,
                    message: format!("@{name} needs {what}"),
                })
            } else {
                Ok(arg.to_string())
            }
        };
        let d = match name {
            "select" => Directive::Select(number(line, name, arg)?),
            "cancel" if arg.is_empty() => Directive::Cancel,
            "apply" => Directive::Apply(number(line, name, arg)?),
            "revert" => Directive::Revert(number(line, name, arg)?),
            "auto" => Directive::Auto(need_text("a model description")?),
            "feedback" => {
                let (turn, corrected) = arg.split_once(char::is_whitespace).ok_or_else(|| ScriptError {
                    line,
                    message: "@feedback needs a turn number and the corrected output".into(),
                })?;
                Directive::Feedback {
                    turn: number(line, name, turn)?,
                    corrected: corrected.trim().to_string(),
                }
            }
            _ => {
                return Err(ScriptError {
                    line,
                    message: format!("unknown directive `@{name}`"),
                })
            }
        };
        out.push((line, d));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub line: usize,
    pub turn: Option<usize>,
    pub error: TurnError,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub outcomes: Vec<TurnOutcome>,
    /// Failures not repaired by a later `@feedback`, keyed by turn (or by
    /// line for feedback the session rejected outright).
    pub failures: Vec<Failure>,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn describe(o: &TurnOutcome) -> String {
    let mut s = format!("turn {}", o.turn_index);
    if let Some(step) = o.step {
        s += &format!(" (step {step})");
    }
    if let Some(e) = &o.error {
        s += &format!(" FAILED {}: {}", e.kind, e.message);
        if let Some(raw) = &e.raw_output {
            s += &format!("\n  last output: {}", raw.replace('\n', " "));
        }
        return s;
    }
    if !o.actions.is_empty() {
        s += &format!(" [{}]", o.actions.join(", "));
    }
    let added: u64 = o.delta.added.iter().map(|r| r[1] - r[0]).sum();
    let removed: u64 = o.delta.removed.iter().map(|r| r[1] - r[0]).sum();
    if added > 0 {
        s += &format!(" +{added}");
    }
    if removed > 0 {
        s += &format!(" -{removed}");
    }
    s += &format!(" ({} instances)", o.instance_count);
    for m in &o.messages {
        s += &format!("\n  {m}");
    }
    if let Some(p) = &o.pending_selection {
        s += &format!("\n  which \"{}\"?", p.query);
        for (i, c) in p.candidates.iter().enumerate() {
            s += &format!(" {i}) {c}");
        }
    }
    if let Some(a) = &o.advice {
        for l in a.lines() {
            s += &format!("\n  | {l}");
        }
    }
    s
}

/// Run every directive, writing one summary per turn to `out`.
pub fn run_script(session: &mut Session, script: &[(usize, Directive)], out: &mut dyn Write) -> io::Result<RunReport> {
    let mut report = RunReport::default();
    let mut failed: BTreeMap<usize, Failure> = BTreeMap::new();
    let mut rejected = Vec::new();
    for (line, d) in script {
        let outcomes = match d {
            Directive::Message(text) => vec![session.handle_turn(text)],
            Directive::Select(n) => vec![session.select(*n)],
            Directive::Cancel => vec![session.cancel()],
            Directive::Apply(id) => vec![session.apply_rule(*id)],
            Directive::Revert(id) => vec![session.revert_rule(*id)],
            Directive::Auto(desc) => session.run_automatic(desc),
            Directive::Feedback { turn, corrected } => match session.submit_feedback(*turn, corrected) {
                Ok(o) => {
                    failed.remove(turn);
                    vec![o]
                }
                Err(e) => {
                    writeln!(out, "line {line}: feedback for turn {turn} rejected: {e}")?;
                    rejected.push(Failure {
                        line: *line,
                        turn: Some(*turn),
                        error: TurnError {
                            kind: e.kind().to_string(),
                            message: e.to_string(),
                            action_index: None,
                            step: None,
                            operation: None,
                            raw_output: None,
                            validation_errors: Vec::new(),
                        },
                    });
                    continue;
                }
            },
        };
        for o in outcomes {
            writeln!(out, "{}", describe(&o))?;
            if let Some(e) = &o.error {
                failed.insert(
                    o.turn_index,
                    Failure {
                        line: *line,
                        turn: Some(o.turn_index),
                        error: e.clone(),
                    },
                );
            }
            report.outcomes.push(o);
        }
    }
    report.failures = failed.into_values().chain(rejected).collect();
    report.failures.sort_by_key(|f| f.line);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_directives_and_messages() {
        let s = parse_script("# c\n\nhello there\n@select 1\n@feedback 3 {\"labeling\": true}\n@auto a b\n@cancel\n").unwrap();
        assert_eq!(
            s,
            vec![
                (3, Directive::Message("hello there".into())),
                (4, Directive::Select(1)),
                (
                    5,
                    Directive::Feedback {
                        turn: 3,
                        corrected: "{\"labeling\": true}".into()
                    }
                ),
                (6, Directive::Auto("a b".into())),
                (7, Directive::Cancel),
            ]
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        for (text, line, needle) in [
            ("hi\n@select x", 2, "non-negative integer"),
            ("@frobnicate", 1, "unknown directive"),
            ("\n\n@feedback 2", 3, "turn number"),
            ("@auto", 1, "model description"),
            ("@apply -1", 1, "`-1`"),
        ] {
            let e = parse_script(text).unwrap_err();
            assert_eq!(e.line, line, "{text}");
            assert!(e.message.contains(needle), "{}", e.message);
        }
    }
}
