//! Experiment configs shipped with the binary.

pub const PROFILES: [(&str, &str); 6] = [
    (
        "bench-smoke",
        include_str!("../profiles/bench-smoke.toml"),
    ),
    ("bench-full", include_str!("../profiles/bench-full.toml")),
    (
        "retrieval",
        include_str!("../profiles/retrieval.toml"),
    ),
    ("s1", include_str!("../profiles/s1.toml")),
    ("s2", include_str!("../profiles/s2.toml")),
    ("s3", include_str!("../profiles/s3.toml")),
];

pub fn profile(name: &str) -> Option<&'static str> {
    PROFILES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn names() -> Vec<&'static str> {
    PROFILES.iter().map(|(n, _)| *n).collect()
}
