//! Acceptance criteria, each at its exact tolerance. Prints one line per
//! criterion and exits nonzero if any fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cobel::harness::{run_check, Check, CheckReport, SuiteConfig};
use cobel::model::ModelDocument;
use cobel::{EffectKind, Rational};
use serde_json::Value;

const FIG1: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/fig1.json");

type Row<'a> = (&'a str, &'a str, Vec<(&'a str, &'a str)>, &'a str);
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn q(s: &str) -> Rational {
    s.parse().unwrap()
}

fn cli(args: &[&str]) -> (Value, Duration, i32) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_cobel"))
        .args(args)
        .output()
        .expect("binary runs");
    let elapsed = start.elapsed();
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (json, elapsed, out.status.code().unwrap_or(-1))
}

fn value_of(json: &Value) -> Option<Rational> {
    json["value"].as_str()?.parse().ok()
}

fn running_example_values() -> Outcome {
    let cases: [(&[&str], &str, &str); 4] = [
        (
            &["value", FIG1, "--horizon", "3", "--method", "brute"],
            "2",
            "brute",
        ),
        (
            &["value", FIG1, "--horizon", "3", "--method", "belief"],
            "2",
            "belief",
        ),
        (
            &[
                "value",
                FIG1,
                "--horizon",
                "3",
                "--method",
                "fullobs",
                "--fully-observable",
            ],
            "5/2",
            "fullobs",
        ),
        (
            &[
                "value",
                FIG1,
                "--horizon",
                "3",
                "--method",
                "brute",
                "--fully-observable",
            ],
            "5/2",
            "brute",
        ),
    ];
    let mut details = Vec::new();
    let mut passed = true;
    for (args, expected, method) in cases {
        let (json, elapsed, code) = cli(args);
        let got = value_of(&json);
        let ok = code == 0
            && got == Some(q(expected))
            && json["method"] == method
            && elapsed < Duration::from_secs(1);
        passed &= ok;
        details.push(format!(
            "{method}{} = {} in {elapsed:.2?}",
            if args.contains(&"--fully-observable") {
                " (full obs)"
            } else {
                ""
            },
            got.map_or("?".into(), |v| v.to_string())
        ));
    }
    outcome(passed, details.join(", "))
}

fn belief_structure() -> Outcome {
    let (json, elapsed, code) = cli(&["build", FIG1]);
    let Ok(doc) = serde_json::from_value::<ModelDocument>(json) else {
        return outcome(false, format!("exit {code}, unreadable output"));
    };
    // hand-derived from the running example: δ_s0, μ = ½δ_s1 + ½δ_s2, δ_t1, δ_t2
    let legend: Vec<(&str, Vec<(&str, &str)>)> = vec![
        ("b0", vec![("s0", "1")]),
        ("b1", vec![("s1", "1/2"), ("s2", "1/2")]),
        ("b2", vec![("t1", "1")]),
        ("b3", vec![("t2", "1")]),
    ];
    let rows: Vec<Row> = vec![
        ("b0", "a", vec![("b1", "1")], "1"),
        ("b0", "b", vec![("b2", "1")], "0"),
        ("b1", "a", vec![("b2", "1/2"), ("b3", "1/2")], "1/2"),
        ("b1", "b", vec![("b2", "1/2"), ("b3", "1/2")], "1"),
        ("b2", "a", vec![("b2", "1")], "0"),
        ("b2", "b", vec![("b2", "1")], "0"),
        ("b3", "a", vec![("b3", "1")], "0"),
        ("b3", "b", vec![("b3", "1")], "0"),
    ];
    let as_map = |v: &Value| -> Option<Vec<(String, Rational)>> {
        v.as_object()?
            .iter()
            .map(|(k, w)| Some((k.clone(), w.as_str()?.parse().ok()?)))
            .collect()
    };
    let expect_map = |entries: &[(&str, &str)]| -> Vec<(String, Rational)> {
        entries.iter().map(|(k, w)| (k.to_string(), q(w))).collect()
    };
    let doc_json = serde_json::to_value(&doc).expect("serializable");
    let mut problems = Vec::new();
    if doc.states.len() != 4 {
        problems.push(format!("{} beliefs", doc.states.len()));
    }
    for (id, value) in &legend {
        if as_map(&doc_json["legend"][id]) != Some(expect_map(value)) {
            problems.push(format!("legend {id}: {}", doc_json["legend"][id]));
        }
    }
    for (b, a, succ, reward) in &rows {
        let row = &doc_json["delta"][b][a];
        let ok = as_map(&row["succ"]) == Some(expect_map(succ))
            && row["reward"]
                .as_str()
                .and_then(|r| r.parse::<Rational>().ok())
                == Some(q(reward));
        if !ok {
            problems.push(format!("({b}, {a}): {row}"));
        }
    }
    if elapsed >= Duration::from_secs(1) {
        problems.push(format!("took {elapsed:.2?}"));
    }
    let passed = code == 0 && problems.is_empty();
    let detail = if passed {
        format!("4 beliefs, 8 rows match in {elapsed:.2?}")
    } else {
        problems.join("; ")
    };
    outcome(passed, detail)
}

fn reports(cfg: &SuiteConfig, check: Check) -> Vec<CheckReport> {
    EffectKind::ALL
        .into_iter()
        .filter(|k| check.applies_to(*k))
        .map(|k| run_check(cfg, check, k))
        .collect()
}

fn summarize(rs: &[CheckReport], expected_trials: usize) -> (bool, String) {
    let passed = rs
        .iter()
        .all(|r| r.ok() && r.trials == expected_trials && r.passed == expected_trials);
    let parts: Vec<String> = rs
        .iter()
        .map(|r| {
            let mut s = format!("{} {}/{}", r.kind, r.passed, r.trials);
            if r.resampled > 0 {
                s += &format!(" ({} redrawn)", r.resampled);
            }
            s
        })
        .collect();
    (passed, parts.join(", "))
}

fn timed(limit: Option<Duration>, checks: &[(Check, usize)]) -> Outcome {
    let cfg = SuiteConfig::default();
    let start = Instant::now();
    let mut passed = true;
    let mut details = Vec::new();
    for (check, trials) in checks {
        let (ok, detail) = summarize(&reports(&cfg, *check), *trials);
        passed &= ok;
        details.push(format!("{check:?}: {detail}"));
    }
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        passed &= elapsed < limit;
    }
    outcome(passed, format!("{} in {elapsed:.2?}", details.join("; ")))
}

fn main() -> ExitCode {
    let cfg = SuiteConfig::default();
    let criteria: Vec<Criterion> = vec![
        ("running example values", Box::new(running_example_values)),
        ("belief model structure", Box::new(belief_structure)),
        (
            "belief correctness per scheduler and horizon",
            Box::new(|| timed(Some(Duration::from_secs(300)), &[(Check::Correctness, 50)])),
        ),
        (
            "section and base-change laws",
            Box::new(|| {
                timed(
                    Some(Duration::from_secs(10)),
                    &[(Check::SectionLaw, 500), (Check::BaseChange, 500)],
                )
            }),
        ),
        (
            "star conditions",
            Box::new(|| timed(None, &[(Check::Star, 200)])),
        ),
        (
            "degeneracy and flat compatibility",
            Box::new(|| timed(None, &[(Check::Degeneracy, 50), (Check::FlatCompat, 100)])),
        ),
        (
            "observability gap",
            Box::new(move || {
                let rs = reports(&cfg, Check::ObservabilityGap);
                let (passed, detail) = summarize(&rs, 50);
                let injective: u64 = rs
                    .iter()
                    .map(|r| r.notes.get("injective_instances").copied().unwrap_or(0))
                    .sum();
                outcome(passed, format!("{detail}; {injective} injective instances"))
            }),
        ),
        (
            "nondeterministic decidability",
            Box::new(|| timed(None, &[(Check::Decidability, 50)])),
        ),
        (
            "weighted path sums",
            Box::new(|| timed(None, &[(Check::PathSum, 50)])),
        ),
    ];

    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.passed {
            failures += 1;
        }
        println!(
            "criterion {}: {} {name}: {}",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
