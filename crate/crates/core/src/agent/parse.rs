use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProposalError {
    #[error("no parseable x-line in reply: {raw:?}")]
    NoProposal { raw: String },
    #[error("non-finite coordinate '{token}' in reply: {raw:?}")]
    NonFinite { token: String, raw: String },
    #[error("expected {expected} coordinates, found {found}")]
    Arity { expected: usize, found: usize },
}

impl ProposalError {
    /// Short description without the raw reply.
    pub fn summary(&self) -> String {
        match self {
            ProposalError::NoProposal { .. } => "no 'x:' line found".into(),
            ProposalError::NonFinite { token, .. } => format!("'{token}' is not a finite number"),
            ProposalError::Arity { expected, found } => {
                format!("expected {expected} coordinates, found {found}")
            }
        }
    }

    pub fn is_arity(&self) -> bool {
        matches!(self, ProposalError::Arity { .. })
    }
}

/// Position just after an `x:` label that is not part of a longer word.
fn x_label(line: &str) -> Option<usize> {
    let bytes = line.as_bytes();
    let mut from = 0;
    while let Some(pos) = line[from..].find("x:") {
        let at = from + pos;
        let standalone =
            at == 0 || !(bytes[at - 1].is_ascii_alphanumeric() || bytes[at - 1] == b'_');
        if standalone {
            return Some(at + 2);
        }
        from = at + 2;
    }
    None
}

fn strip_markup(line: &str) -> String {
    line.replace(['*', '`'], "")
}

/// Leading numeric tokens of `s`; stops at the first non-numeric token.
fn numbers(s: &str, raw: &str) -> Result<Vec<f64>, ProposalError> {
    let cleaned = s.replace(['[', ']', '(', ')'], " ");
    let mut out = Vec::new();
    for token in cleaned
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
    {
        let token = token.trim_end_matches(';');
        match token.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => {
                return Err(ProposalError::NonFinite {
                    token: token.to_string(),
                    raw: raw.to_string(),
                })
            }
            Err(_) => break,
        }
    }
    Ok(out)
}

fn explanation(text: &str) -> String {
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let l = strip_markup(line);
        let t = l.trim_start();
        if t.len() >= 12 && t[..12].eq_ignore_ascii_case("explanation:") {
            let mut out = t[12..].trim().to_string();
            for rest in lines.by_ref() {
                out.push('\n');
                out.push_str(rest);
            }
            return out.trim().to_string();
        }
    }
    String::new()
}

/// Extracts the first `x:` proposal line from an agent reply.
pub fn parse_proposal(text: &str, dims: usize) -> Result<Proposal, ProposalError> {
    assert!(dims >= 1, "dims must be at least 1");
    let mut coords = None;
    for line in text.lines() {
        let line = strip_markup(line);
        if let Some(start) = x_label(&line) {
            let xs = numbers(&line[start..], text)?;
            if !xs.is_empty() {
                coords = Some(xs);
                break;
            }
        }
    }
    if coords.is_none() && dims == 1 {
        if let Some(first) = text.lines().map(str::trim).find(|l| !l.is_empty()) {
            if let Ok(v) = first.trim_end_matches(',').parse::<f64>() {
                if !v.is_finite() {
                    return Err(ProposalError::NonFinite {
                        token: first.to_string(),
                        raw: text.to_string(),
                    });
                }
                coords = Some(vec![v]);
            }
        }
    }
    let x = coords.ok_or_else(|| ProposalError::NoProposal {
        raw: text.to_string(),
    })?;
    if x.len() != dims {
        return Err(ProposalError::Arity {
            expected: dims,
            found: x.len(),
        });
    }
    Ok(Proposal {
        x,
        explanation: explanation(text),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_specimen() {
        let p = parse_proposal(
            "Step: 0, x: -4.5\nExplanation: We observe a decreasing trend in f(x) as x increases.",
            1,
        )
        .unwrap();
        assert_eq!(p.x, vec![-4.5]);
        assert!(p.explanation.starts_with("We observe a decreasing trend"));
    }

    #[test]
    fn trailing_comma_and_markup() {
        let p = parse_proposal("**Step**: 1, x: -2.5, \nexplanation: bigger jump", 1).unwrap();
        assert_eq!(p.x, vec![-2.5]);
        assert_eq!(p.explanation, "bigger jump");
    }

    #[test]
    fn eight_dims() {
        let p = parse_proposal(
            "x: 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0\nExplanation: spread",
            8,
        )
        .unwrap();
        assert_eq!(p.x, (1..=8).map(f64::from).collect::<Vec<_>>());
        assert_eq!(p.explanation, "spread");
    }

    #[test]
    fn space_separated_and_brackets() {
        assert_eq!(
            parse_proposal("x: [0.5 -1e-3]", 2).unwrap().x,
            vec![0.5, -0.001]
        );
        assert_eq!(
            parse_proposal("x: (1, 2) because", 2).unwrap().x,
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn bare_real_in_one_dim() {
        assert_eq!(
            parse_proposal("  0.25\nExplanation: guess", 1).unwrap().x,
            vec![0.25]
        );
        assert!(parse_proposal("0.25", 2).is_err());
    }

    #[test]
    fn errors() {
        let e = parse_proposal("the minimum is probably near zero", 1).unwrap_err();
        assert_eq!(
            e,
            ProposalError::NoProposal {
                raw: "the minimum is probably near zero".into()
            }
        );
        assert!(parse_proposal("x: 1, 2", 3).unwrap_err().is_arity());
        assert!(matches!(
            parse_proposal("x: NaN, 1", 2),
            Err(ProposalError::NonFinite { .. })
        ));
        assert!(matches!(
            parse_proposal("x: inf", 1),
            Err(ProposalError::NonFinite { .. })
        ));
    }

    #[test]
    fn labels_inside_words_are_ignored() {
        let p = parse_proposal("max: 3\nf(x): 2\nx: 0.1", 1).unwrap();
        assert_eq!(p.x, vec![0.1]);
    }
}
