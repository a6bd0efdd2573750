//! Plain-text MDP format.
//!
//! ```text
//! tabular-mdp 1
//! states 2
//! actions 2
//! horizon 3
//! initial 1 0
//! transition 0 0 1 0      # one line per (s, a), s-major: P(. | s, a)
//! ...
//! reward 0 1 0            # one line per s: r(s, a) for every a
//! ...
//! ```
//!
//! Numbers are written with Rust's shortest round-trip `f64` formatting, so
//! `parse_text(dump_text(m)) == m` bit for bit. `#` starts a comment.

use std::fmt::Write as _;

use thiserror::Error;

use super::{MdpError, TabularMdp};

const MAGIC: &str = "tabular-mdp";
const VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum TextFormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing section `{0}`")]
    Missing(&'static str),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn dump_text(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "states {ns}").unwrap();
    writeln!(out, "actions {na}").unwrap();
    writeln!(out, "horizon {}", mdp.horizon()).unwrap();
    writeln!(out, "initial {}", join(mdp.initial())).unwrap();
    for s in 0..ns {
        for a in 0..na {
            writeln!(out, "transition {s} {a} {}", join(mdp.transition_row(s, a))).unwrap();
        }
    }
    for s in 0..ns {
        let row: Vec<f64> = (0..na).map(|a| mdp.reward(s, a)).collect();
        writeln!(out, "reward {s} {}", join(&row)).unwrap();
    }
    out
}

/// Parses the text format and validates the result.
pub fn parse_text(input: &str) -> Result<TabularMdp, TextFormatError> {
    let mut header_seen = false;
    let (mut ns, mut na, mut horizon) = (None, None, None);
    let mut initial = None;
    let mut transitions: Vec<(usize, usize, usize, Vec<f64>)> = Vec::new();
    let mut rewards: Vec<(usize, usize, Vec<f64>)> = Vec::new();

    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| TextFormatError::Syntax {
            line: line_no,
            message,
        };
        let mut words = line.split_whitespace();
        let key = words.next().unwrap();
        let rest: Vec<&str> = words.collect();
        if !header_seen {
            if key != MAGIC || rest != [VERSION] {
                return Err(err(format!("expected `{MAGIC} {VERSION}` header")));
            }
            header_seen = true;
            continue;
        }
        let count = |rest: &[&str]| -> Result<usize, TextFormatError> {
            match rest {
                [v] => v.parse().map_err(|_| err(format!("`{key}` expects an integer"))),
                _ => Err(err(format!("`{key}` expects one value"))),
            }
        };
        let floats = |rest: &[&str]| -> Result<Vec<f64>, TextFormatError> {
            rest.iter()
                .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad number `{v}`"))))
                .collect()
        };
        let index = |v: &str| -> Result<usize, TextFormatError> {
            v.parse().map_err(|_| err(format!("bad index `{v}`")))
        };
        match key {
            "states" => ns = Some(count(&rest)?),
            "actions" => na = Some(count(&rest)?),
            "horizon" => horizon = Some(count(&rest)?),
            "initial" => initial = Some(floats(&rest)?),
            "transition" => {
                if rest.len() < 2 {
                    return Err(err("`transition` expects s a followed by probabilities".into()));
                }
                transitions.push((line_no, index(rest[0])?, index(rest[1])?, floats(&rest[2..])?));
            }
            "reward" => {
                if rest.is_empty() {
                    return Err(err("`reward` expects s followed by rewards".into()));
                }
                rewards.push((line_no, index(rest[0])?, floats(&rest[1..])?));
            }
            other => return Err(err(format!("unknown section `{other}`"))),
        }
    }

    if !header_seen {
        return Err(TextFormatError::Missing("header"));
    }
    let ns = ns.ok_or(TextFormatError::Missing("states"))?;
    let na = na.ok_or(TextFormatError::Missing("actions"))?;
    let horizon = horizon.ok_or(TextFormatError::Missing("horizon"))?;
    let initial = initial.ok_or(TextFormatError::Missing("initial"))?;

    let mut transition = vec![f64::NAN; ns * na * ns];
    let mut seen = vec![false; ns * na];
    for (line, s, a, row) in transitions {
        if s >= ns || a >= na || row.len() != ns || seen[s * na + a] {
            return Err(TextFormatError::Syntax {
                line,
                message: format!("bad or duplicate transition row for (s{s}, a{a})"),
            });
        }
        seen[s * na + a] = true;
        transition[(s * na + a) * ns..(s * na + a + 1) * ns].copy_from_slice(&row);
    }
    if seen.iter().any(|x| !x) {
        return Err(TextFormatError::Missing("transition"));
    }
    let mut reward = vec![f64::NAN; ns * na];
    let mut seen = vec![false; ns];
    for (line, s, row) in rewards {
        if s >= ns || row.len() != na || seen[s] {
            return Err(TextFormatError::Syntax {
                line,
                message: format!("bad or duplicate reward row for s{s}"),
            });
        }
        seen[s] = true;
        reward[s * na..(s + 1) * na].copy_from_slice(&row);
    }
    if seen.iter().any(|x| !x) {
        return Err(TextFormatError::Missing("reward"));
    }
    Ok(TabularMdp::new(ns, na, horizon, transition, reward, initial)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
tabular-mdp 1
# two states, self loops
states 2
actions 2
horizon 2
initial 1 0
transition 0 0 1 0
transition 0 1 1 0
transition 1 0 0 1
transition 1 1 0 1
reward 0 1 0
reward 1 0 0
";

    #[test]
    fn parses_and_round_trips() {
        let m = parse_text(SAMPLE).unwrap();
        assert_eq!(m.reward(0, 0), 1.0);
        assert_eq!(parse_text(&dump_text(&m)).unwrap(), m);
    }

    #[test]
    fn missing_row_is_reported() {
        let text = SAMPLE.replace("transition 1 1 0 1\n", "");
        assert!(matches!(parse_text(&text), Err(TextFormatError::Missing("transition"))));
    }

    #[test]
    fn bad_number_names_line() {
        let text = SAMPLE.replace("reward 1 0 0", "reward 1 0 x");
        match parse_text(&text) {
            Err(TextFormatError::Syntax { line, .. }) => assert_eq!(line, 12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        let text = SAMPLE.replace("initial 1 0", "initial 0.5 0");
        assert!(matches!(parse_text(&text), Err(TextFormatError::Mdp(_))));
    }
}
