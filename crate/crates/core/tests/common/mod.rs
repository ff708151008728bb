#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use codegrad_core::engine::{parse_transcript, PromptTemplates, ScriptedEngine, SharedEngine};
use codegrad_core::refine::{run_task, Engines, LoopContext, RunConfig, TaskResult};
use codegrad_core::sandbox::{Sandbox, SandboxConfig, SandboxHandle};
use codegrad_core::task::TaskSpec;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_task(name: &str) -> TaskSpec {
    let text = std::fs::read_to_string(fixture(name)).expect("fixture readable");
    let mut task: TaskSpec = serde_json::from_str(&text).expect("fixture parses");
    task.validate().expect("fixture validates");
    task
}

pub fn sandbox() -> SandboxHandle {
    Sandbox::new(SandboxConfig::new("python3")).expect("python3 available")
}

pub struct Scripted {
    pub forward: Arc<ScriptedEngine>,
    pub backward: Option<Arc<ScriptedEngine>>,
}

impl Scripted {
    pub fn new(forward: Vec<String>, backward: Option<Vec<String>>) -> Self {
        Self {
            forward: Arc::new(ScriptedEngine::new("fwd", forward)),
            backward: backward.map(|b| Arc::new(ScriptedEngine::new("bwd", b))),
        }
    }

    pub fn from_transcript(name: &str) -> Self {
        let text = std::fs::read_to_string(fixture(name)).expect("transcript readable");
        let t = parse_transcript(&text).expect("transcript parses");
        Self::new(t.forward, Some(t.backward))
    }

    pub fn engines(&self) -> Engines {
        Engines {
            forward: self.forward.clone() as SharedEngine,
            backward: self.backward.clone().map(|b| b as SharedEngine),
        }
    }

    pub fn forward_calls(&self) -> usize {
        self.forward.calls()
    }

    pub fn backward_calls(&self) -> usize {
        self.backward.as_ref().map_or(0, |b| b.calls())
    }
}

pub fn config(max_iterations: u32) -> RunConfig {
    RunConfig {
        max_iterations,
        ..RunConfig::default()
    }
}

pub fn run(task: &TaskSpec, scripted: &Scripted, config: &RunConfig) -> TaskResult {
    let sb = sandbox();
    let templates = PromptTemplates::builtin();
    let ctx = LoopContext {
        sandbox: &sb,
        templates: &templates,
        config,
    };
    run_task(&ctx, &scripted.engines(), task).expect("loop runs")
}

pub fn fenced(code: &str) -> String {
    format!("```python\n{}\n```", code.trim_end())
}

/// Largest sum over every contiguous non-empty slice, by exhaustion.
pub fn brute_max_subarray(nums: &[i64]) -> i64 {
    let mut best = i64::MIN;
    for i in 0..nums.len() {
        for j in i..nums.len() {
            best = best.max(nums[i..=j].iter().sum());
        }
    }
    best
}

pub const KADANE: &str = "def max_subarray(nums):\n    best = current = nums[0]\n    for x in nums[1:]:\n        current = max(x, current + x)\n        best = max(best, current)\n    return best\n";

pub const CUBIC_ZERO_SEED: &str = "def max_subarray(nums):\n    best = 0\n    for i in range(len(nums)):\n        for j in range(i, len(nums)):\n            total = 0\n            for k in range(i, j + 1):\n                total += nums[k]\n            best = max(best, total)\n    return best\n";

pub const FAILING_REVIEW: &str = "[CORRECTNESS] verdict: fail\nWrong on some inputs.\n[IO_FORMAT] verdict: pass\n[EFFICIENCY] verdict: pass\n[COMPLETENESS] verdict: fail\nMisses the all-negative case.\nEDITS:\n1. location: line 2 / action: seed best with nums[0] / axis: completeness\n";

pub const PASSING_REVIEW: &str = "[CORRECTNESS] verdict: pass\n[IO_FORMAT] verdict: pass\n[EFFICIENCY] verdict: pass\n[COMPLETENESS] verdict: pass\nEDITS:\n";

pub const HOLDS_PROOF: &str = "[INVARIANT syntax]\nParses.\nHOLDS\n[INVARIANT io_format]\nRight signature.\nHOLDS\n[INVARIANT efficiency]\nLinear.\nHOLDS\n[INVARIANT completeness]\nSeeded with the first element.\nHOLDS\n";

pub mod gen {
    use codegrad_core::gradient::{Axis, AxisFeedback, AxisVerdict, EditDirective, LocationKind};
    use codegrad_core::verify::{ClaimVerdict, InvariantId, ProofClaim};
    use rand::seq::SliceRandom;
    use rand::Rng;

    const WORDS: &[&str] = &[
        "the", "loop", "index", "sum", "returns", "wrong", "value", "list", "empty", "case", "handle", "negative",
        "input", "scan", "linear", "seed", "best", "check", "bound", "result", "off", "by", "one", "slice",
    ];

    fn words<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
        let n = rng.gen_range(lo..=hi);
        (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    }

    fn lines<R: Rng>(rng: &mut R, max_lines: usize) -> String {
        let n = rng.gen_range(0..=max_lines);
        (0..n).map(|_| words(rng, 1, 6)).collect::<Vec<_>>().join("\n")
    }

    /// Axes in canonical order plus an edit list valid for a program of `line_count` lines.
    pub fn feedback<R: Rng>(rng: &mut R, line_count: usize) -> (Vec<AxisFeedback>, Vec<EditDirective>) {
        let axes = Axis::ALL
            .iter()
            .map(|&axis| {
                let verdict = *[AxisVerdict::Pass, AxisVerdict::Fail, AxisVerdict::Fail, AxisVerdict::Unknown]
                    .choose(rng)
                    .unwrap();
                let commentary = if verdict == AxisVerdict::Unknown { String::new() } else { lines(rng, 2) };
                AxisFeedback { axis, verdict, commentary }
            })
            .collect();
        let n = rng.gen_range(0..=4);
        let edits = (0..n)
            .map(|i| {
                let (location_kind, location_value) = match rng.gen_range(0..3) {
                    0 => (LocationKind::Function, format!("fn_{}", words(rng, 1, 1))),
                    1 => {
                        let start = rng.gen_range(1..=line_count);
                        (LocationKind::LineRange, format!("{start}-{}", rng.gen_range(start..=line_count)))
                    }
                    _ => (LocationKind::Global, String::new()),
                };
                EditDirective {
                    ordinal: i + 1,
                    location_kind,
                    location_value,
                    action: words(rng, 1, 8),
                    source_axis: if rng.gen_bool(0.5) { Some(*Axis::ALL.choose(rng).unwrap()) } else { None },
                }
            })
            .collect();
        (axes, edits)
    }

    pub fn proof<R: Rng>(rng: &mut R) -> Vec<ProofClaim> {
        InvariantId::ALL
            .iter()
            .map(|&invariant| {
                let argument = lines(rng, 3);
                let verdict = if argument.is_empty() || rng.gen_bool(0.3) {
                    ClaimVerdict::Unknown
                } else {
                    ClaimVerdict::Holds
                };
                ProofClaim { invariant, argument, verdict }
            })
            .collect()
    }

    /// Damages `text` so that no section header survives, then adds noise.
    pub fn malformed<R: Rng>(rng: &mut R, text: &str) -> String {
        let bracket = *["(", "{", "<", "", "]"].choose(rng).unwrap();
        let mut out: Vec<char> = text.replace('[', bracket).chars().collect();
        let noise: Vec<char> = "abcXYZ01 :/.-*#_\n\t]}>|HOLDS pass fail EDITS verdict".chars().collect();
        for _ in 0..rng.gen_range(0..20) {
            let at = rng.gen_range(0..=out.len());
            match rng.gen_range(0..3) {
                0 if at < out.len() => {
                    out.remove(at);
                }
                _ => out.insert(at, *noise.choose(rng).unwrap()),
            }
        }
        let mut lines: Vec<String> = out.into_iter().collect::<String>().lines().map(str::to_string).collect();
        if rng.gen_bool(0.3) {
            lines.shuffle(rng);
        }
        lines.join("\n")
    }
}
