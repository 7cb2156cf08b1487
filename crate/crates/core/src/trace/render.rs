//! Textual trace layout used inside prompts.
//!
//! ```text
//! Example 5:
//! a:1.1 b:1.2 c:0.7 d:1.1 e:1.1 f:1.1 g:1.1 h:1.5
//!
//! Landing Position:
//!   x       y    z      On Table
//! 0.3207 0.7890 0.0143   True
//!
//!       paddle x  paddle y  paddle z    ball x    ball y    ball z
//! time
//! 1       0.2478   -1.1859    0.4236    0.2415    0.0619    0.2745
//! ```
//!
//! The formal grammar lives in `docs/trace-grammar.ebnf`.

use std::fmt::Write as _;

use super::{ExecutionTrace, LandingRecord, ParamVector, TraceError, TraceRow, PARAM_NAMES};

const LANDING_HEADER: &str = "Landing Position:";
const LANDING_COLUMNS: &str = "  x       y    z      On Table";
const ROW_LABELS: [&str; 6] = [
    "paddle x", "paddle y", "paddle z", "ball x", "ball y", "ball z",
];
const TIME_WIDTH: usize = 6;
const ELISION: &str = "...";

/// Fixed-point with `precision` decimals; never prints `-0.000`.
pub fn fixed(v: f64, precision: usize) -> String {
    let s = format!("{v:.precision$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Fixed-point with trailing zeros removed, keeping at least one decimal.
pub fn trim_decimal(v: f64, precision: usize) -> String {
    let s = fixed(v, precision.max(1));
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

fn column_width(precision: usize) -> usize {
    precision + 5
}

/// Renders one trace. `precision` is clamped to `1..=6`.
///
/// Measured quantities (landing and time series) use exactly `precision` decimals;
/// the parameter line drops trailing zeros.
pub fn render_trace(trace: &ExecutionTrace, precision: usize) -> String {
    let p = precision.clamp(1, 6);
    let w = column_width(p);
    let mut out = String::new();
    let _ = writeln!(out, "Example {}:", trace.id);
    let params: Vec<String> = PARAM_NAMES
        .iter()
        .zip(trace.params.values())
        .map(|(n, v)| format!("{n}:{}", trim_decimal(*v, p)))
        .collect();
    let _ = writeln!(out, "{}", params.join(" "));
    out.push('\n');
    let _ = writeln!(out, "{LANDING_HEADER}");
    let _ = writeln!(out, "{LANDING_COLUMNS}");
    let l = &trace.landing;
    let _ = writeln!(
        out,
        "{} {} {}   {}",
        fixed(l.x, p),
        fixed(l.y, p),
        fixed(l.z, p),
        if l.on_table { "True" } else { "False" }
    );
    out.push('\n');
    out.push_str(&" ".repeat(TIME_WIDTH));
    for label in ROW_LABELS {
        let _ = write!(out, " {label:>w$}");
    }
    out.push('\n');
    out.push_str("time\n");
    for row in &trace.rows {
        let _ = write!(out, "{:<TIME_WIDTH$}", row.time);
        for v in row.paddle.iter().chain(&row.ball) {
            let _ = write!(out, " {:>w$}", fixed(*v, p));
        }
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if !line.trim().is_empty() {
                return Some((i + 1, line));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str), TraceError> {
        self.next_content().ok_or_else(|| {
            TraceError::parse(
                self.last + 1,
                format!("expected {what}, found end of input"),
            )
        })
    }
}

fn strip_markup(line: &str) -> &str {
    line.trim().trim_matches('*').trim()
}

fn parse_number(line: usize, token: &str) -> Result<f64, TraceError> {
    let v: f64 = token
        .parse()
        .map_err(|_| TraceError::parse(line, format!("'{token}' is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TraceError::parse(line, format!("'{token}' is not finite")))
    }
}

fn parse_header(line: usize, text: &str) -> Result<usize, TraceError> {
    let body = strip_markup(text).replace("**", "");
    let id = body
        .strip_prefix("Example")
        .and_then(|rest| rest.trim().strip_suffix(':'))
        .ok_or_else(|| {
            TraceError::parse(
                line,
                format!("expected 'Example <id>:', found '{}'", text.trim()),
            )
        })?;
    id.trim()
        .parse()
        .map_err(|_| TraceError::parse(line, format!("bad example id '{}'", id.trim())))
}

fn parse_params(line: usize, text: &str) -> Result<ParamVector, TraceError> {
    let mut values = [f64::NAN; 8];
    let mut seen = [false; 8];
    for token in text.split_whitespace() {
        let (name, value) = token.split_once(':').ok_or_else(|| {
            TraceError::parse(line, format!("expected '<name>:<value>', found '{token}'"))
        })?;
        let idx = match name.chars().collect::<Vec<_>>().as_slice() {
            [c] => ParamVector::index_of(*c),
            _ => None,
        }
        .ok_or_else(|| TraceError::parse(line, format!("unknown parameter '{name}'")))?;
        if seen[idx] {
            return Err(TraceError::parse(
                line,
                format!("parameter '{name}' repeated"),
            ));
        }
        seen[idx] = true;
        values[idx] = parse_number(line, value)?;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(TraceError::parse(
            line,
            format!("parameter '{}' missing", PARAM_NAMES[missing]),
        ));
    }
    Ok(ParamVector(values))
}

fn parse_landing(line: usize, text: &str) -> Result<(f64, f64, f64, bool), TraceError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(TraceError::parse(
            line,
            format!(
                "landing line needs x y z and On Table, found {} fields",
                tokens.len()
            ),
        ));
    }
    let on_table = match tokens[3] {
        "True" | "true" => true,
        "False" | "false" => false,
        other => {
            return Err(TraceError::parse(
                line,
                format!("On Table must be True/False, found '{other}'"),
            ))
        }
    };
    Ok((
        parse_number(line, tokens[0])?,
        parse_number(line, tokens[1])?,
        parse_number(line, tokens[2])?,
        on_table,
    ))
}

enum Row {
    Full(TraceRow),
    /// A row cut short with `...`; ends the table.
    Elided,
}

fn parse_row(line: usize, text: &str) -> Result<Row, TraceError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let time: u32 = tokens[0].parse().map_err(|_| {
        TraceError::parse(
            line,
            format!("row '{}': bad time step '{}'", text.trim(), tokens[0]),
        )
    })?;
    let rest = &tokens[1..];
    if let Some(pos) = rest.iter().position(|t| *t == ELISION) {
        if pos + 1 != rest.len() {
            return Err(TraceError::parse(
                line,
                format!("row {time}: '...' must end the row"),
            ));
        }
        return Ok(Row::Elided);
    }
    if rest.len() != 6 {
        return Err(TraceError::parse(
            line,
            format!(
                "row {time}: expected 6 numeric columns, found {}",
                rest.len()
            ),
        ));
    }
    let mut v = [0.0; 6];
    for (slot, t) in v.iter_mut().zip(rest) {
        *slot = parse_number(line, t)?;
    }
    Ok(Row::Full(TraceRow {
        time,
        paddle: [v[0], v[1], v[2]],
        ball: [v[3], v[4], v[5]],
    }))
}

/// Parses one rendered trace block.
///
/// Columns may be separated by any amount of whitespace. A row cut short with `...`
/// (as in hand-abbreviated examples) ends the table and is dropped. The peak height is
/// recovered as the highest sampled ball height.
pub fn parse_trace(text: &str) -> Result<ExecutionTrace, TraceError> {
    let mut lines = Lines::new(text);
    let (n, header) = lines.expect("'Example <id>:' header")?;
    let id = parse_header(n, header)?;
    let (n, params) = lines.expect("parameter line")?;
    let params = parse_params(n, params)?;
    let (n, landing_header) = lines.expect("'Landing Position:'")?;
    if strip_markup(landing_header).replace("**", "") != LANDING_HEADER {
        return Err(TraceError::parse(
            n,
            format!(
                "expected '{LANDING_HEADER}', found '{}'",
                landing_header.trim()
            ),
        ));
    }
    let (n, columns) = lines.expect("landing column header")?;
    if !columns.contains("On Table") {
        return Err(TraceError::parse(
            n,
            "expected landing column header with 'On Table'",
        ));
    }
    let (n, landing_line) = lines.expect("landing values")?;
    let (x, y, z, on_table) = parse_landing(n, landing_line)?;
    let (n, table_header) = lines.expect("time-series header")?;
    let labels = strip_markup(table_header).replace("**", "");
    let labels: Vec<&str> = labels.split_whitespace().collect();
    let expected: Vec<&str> = ROW_LABELS
        .iter()
        .flat_map(|l| l.split_whitespace())
        .collect();
    if labels != expected {
        return Err(TraceError::parse(
            n,
            format!(
                "expected time-series header, found '{}'",
                table_header.trim()
            ),
        ));
    }
    let (n, time_label) = lines.expect("'time' label")?;
    if strip_markup(time_label) != "time" {
        return Err(TraceError::parse(
            n,
            format!("expected 'time', found '{}'", time_label.trim()),
        ));
    }

    let mut rows: Vec<TraceRow> = Vec::new();
    let mut ended = false;
    while let Some((n, line)) = lines.next_content() {
        if ended {
            return Err(TraceError::parse(
                n,
                format!(
                    "unexpected content after the time series: '{}'",
                    line.trim()
                ),
            ));
        }
        match parse_row(n, line)? {
            Row::Full(row) => {
                if let Some(prev) = rows.last() {
                    if row.time <= prev.time {
                        return Err(TraceError::parse(
                            n,
                            format!("row {}: time must increase", row.time),
                        ));
                    }
                }
                rows.push(row);
            }
            Row::Elided => ended = true,
        }
    }
    if rows.is_empty() {
        return Err(TraceError::parse(
            lines.last.max(1),
            "time series has no complete rows",
        ));
    }
    let sampled = rows
        .iter()
        .map(|r| r.ball[2])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ExecutionTrace {
        id,
        params,
        rows,
        landing: LandingRecord {
            x,
            y,
            z,
            on_table,
            peak_height: sampled.max(z),
        },
    })
}

fn is_example_header(line: &str) -> bool {
    parse_header(0, line).is_ok()
}

/// Parses every `Example <id>:` block in `text`, in order. Text before the first
/// header is ignored; each block runs to the next header.
pub fn parse_traces(text: &str) -> Result<Vec<ExecutionTrace>, TraceError> {
    let lines: Vec<&str> = text.lines().collect();
    let starts: Vec<usize> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| is_example_header(l))
        .map(|(i, _)| i)
        .collect();
    let mut traces = Vec::with_capacity(starts.len());
    for (k, &start) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(lines.len());
        let block = lines[start..end].join("\n");
        let trace = parse_trace(&block).map_err(|e| match e {
            TraceError::Parse { line, message } => TraceError::parse(line + start, message),
            other => other,
        })?;
        traces.push(trace);
    }
    Ok(traces)
}
