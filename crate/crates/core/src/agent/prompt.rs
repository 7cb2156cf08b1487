use crate::optimizers::{RunHistory, StepOrigin};
use crate::trace::render::fixed;

use super::ProposalError;

const SYSTEM_TEMPLATE: &str = "\
You are an expert optimization assistant, helping me find the global
minimum of a mathematical function. I will give you the function evaluation f(x)
and the current iteration number at each step. Your goal is to  propose input
values 'x' that efficiently lead us to the global minimum within a limited number
of iterations (MAX_STEPS = {max_steps}).

Here's how we'll interact:
1. I will first provide MAX_STEPS along with a few training examples of the form
   'x, f(x)'.
2. You will provide your response in the following exact format:
    * Line 1: a new input 'x: ', aiming to minimize the function's value f(x,y).
    * Line 2: a brief explanation of why you chose that input in one sentence,
      considering the current iteration.
3. I will then provide the function's value f(x) at your suggested point, and the
   current iteration.
4. We will repeat steps 2-3 until we reach the maximum number of iterations.

Remember:
* **Assume no prior knowledge about the function's specific form.**
* **Balance Exploitation and Exploration:**  Early on, explore the input space
  broadly. As iterations increase, focus more on promising regions based on
  observed f(x) values.
* **Be adaptable:**  Your approach might need to change based on the function's
  behavior and the remaining iterations. If you suspect a local minimum or slow
  progress for too long, try more exploratory values and then exploit any
  promising findings based on your understanding of the function.
";

/// Leads the harness line that reports a point evaluated in place of an unparsable reply.
pub const FALLBACK_MARKER: &str = "fallback x:";

const DECIMALS: usize = 4;

pub fn build_numopt_system_prompt(max_steps: usize) -> String {
    assert!(max_steps >= 1, "max_steps must be at least 1");
    SYSTEM_TEMPLATE.replace("{max_steps}", &max_steps.to_string())
}

fn join(x: &[f64]) -> String {
    x.iter()
        .map(|v| fixed(*v, DECIMALS))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `x: 1.0000, -2.0000, f(x): 5.0000`
pub fn render_seed_line(x: &[f64], f: f64) -> String {
    format!("x: {}, f(x): {}", join(x), fixed(f, DECIMALS))
}

/// Inverse of [`render_seed_line`].
pub fn parse_seed_line(line: &str) -> Option<(Vec<f64>, f64)> {
    let rest = line.trim().strip_prefix("x:")?;
    let (xs, f) = rest.split_once(", f(x):")?;
    let x = xs
        .split(',')
        .map(|t| t.trim().parse::<f64>().ok())
        .collect::<Option<Vec<_>>>()?;
    let f = f.trim().parse::<f64>().ok()?;
    (!x.is_empty()).then_some((x, f))
}

/// Harness message for proposal number `iteration`.
///
/// Iteration 0 lists the seed records of `history`; later iterations report the
/// value of the latest record.
pub fn build_step_message(history: &RunHistory, iteration: usize, max_steps: usize) -> String {
    let mut out = String::new();
    if iteration == 0 {
        out.push_str(&format!("MAX_STEPS: {max_steps}\n"));
        out.push_str("Training examples of the form 'x, f(x)':\n");
        for r in history
            .records()
            .iter()
            .filter(|r| r.origin == StepOrigin::Seed)
        {
            out.push_str(&render_seed_line(&r.x, r.f));
            out.push('\n');
        }
    } else if let Some(last) = history.last() {
        if last.origin == StepOrigin::Fallback {
            out.push_str(&format!(
                "{FALLBACK_MARKER} {} (your reply could not be parsed, so this point was evaluated instead)\n",
                join(&last.x)
            ));
        }
        out.push_str(&format!("f(x): {}\n", fixed(last.f, DECIMALS)));
    }
    out.push_str(&format!("iteration: {iteration}"));
    out
}

/// Single-line reminder sent after an unparsable reply.
pub fn format_reminder(error: &ProposalError, dims: usize) -> String {
    format!(
        "Your reply could not be parsed ({}); answer with one line 'x: <v1>, ..., <v{dims}>' holding {dims} numbers, then one line 'Explanation: <one sentence>'.",
        error.summary()
    )
}
