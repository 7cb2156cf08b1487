//! Byte-pinned prompt texts. Regenerate with `UPDATE_GOLDEN=1 cargo test -p sas-core --test golden`.

use std::path::PathBuf;

use sas_core::agent::build_numopt_system_prompt;
use sas_core::env::{seed_cache, EnvConfig, ParamRegion};
use sas_core::sas::{build_sas_prompt, SasMode, SasPromptConfig};
use sas_core::seed;
use sas_core::trace::{ParamBounds, TraceCache};

fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    if expected != actual {
        let line = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .unwrap_or(expected.lines().count().min(actual.lines().count()));
        panic!("{name} differs from the pinned copy at line {}", line + 1);
    }
}

fn cache() -> TraceCache {
    let env = EnvConfig::sim_default();
    seed_cache(
        &env,
        &ParamRegion::full(&ParamBounds::default()),
        3,
        &mut seed::rng(7),
    )
    .unwrap()
}

#[test]
fn numopt_system_prompt_is_pinned() {
    check("numopt_system_prompt.txt", &build_numopt_system_prompt(100));
}

#[test]
fn sas_retrieve_prompt_is_pinned() {
    let cfg = SasPromptConfig::new("Hit to the top edge of the table", SasMode::RetrieveOnly);
    check(
        "sas_retrieve_prompt.txt",
        &build_sas_prompt(&cfg, &cache()).unwrap(),
    );
}

#[test]
fn sas_synthesize_prompt_is_pinned() {
    let cfg = SasPromptConfig::new("Hit the ball to the left corner!", SasMode::Synthesize);
    check(
        "sas_synthesize_prompt.txt",
        &build_sas_prompt(&cfg, &cache()).unwrap(),
    );
}

#[test]
fn prompts_are_pure() {
    let cfg = SasPromptConfig::new("Play as far right as possible", SasMode::Synthesize);
    assert_eq!(
        build_sas_prompt(&cfg, &cache()).unwrap(),
        build_sas_prompt(&cfg, &cache()).unwrap()
    );
    assert_eq!(build_numopt_system_prompt(7), build_numopt_system_prompt(7));
}
