//! Dependency-ordered task runner with retries and skip propagation.
//!
//! A DAG file is TOML:
//!
//! ```toml
//! dag_id = "offline"
//!
//! [[task]]
//! name = "train"
//! action = "train"              # a built-in step, run in-process
//! args = ["--data", "train.csv", "--model", "logreg"]
//! depends_on = ["preprocess"]
//! retries = 1                   # extra attempts after the first failure
//! retry_delay_ms = 500
//!
//! [[task]]
//! name = "notify"
//! command = ["echo", "done"]    # or an external program
//! depends_on = ["train"]
//! ```
//!
//! Tasks run one at a time. Among ready tasks the lexicographically
//! smallest name goes first. Run state is rewritten atomically to
//! `<runs_dir>/<run_id>.json` after every transition.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::now_millis;

pub const BUILTIN_ACTIONS: [&str; 7] = [
    "preprocess",
    "fit-features",
    "train",
    "evaluate",
    "publish-model",
    "replay",
    "serve-stream",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    /// Built-in step name; exclusive with `command`.
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub args: Vec<String>,
    /// External argv; exclusive with `action`.
    #[serde(default)]
    pub command: Option<Vec<String>>,
    #[serde(default)]
    pub depends_on: Vec<String>,
    #[serde(default)]
    pub retries: u32,
    #[serde(default)]
    pub retry_delay_ms: u64,
}

impl TaskSpec {
    pub fn builtin(name: &str, action: &str, depends_on: &[&str]) -> Self {
        TaskSpec {
            name: name.into(),
            action: Some(action.into()),
            args: Vec::new(),
            command: None,
            depends_on: depends_on.iter().map(|s| (*s).to_owned()).collect(),
            retries: 0,
            retry_delay_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSpec {
    pub dag_id: String,
    #[serde(rename = "task", default)]
    pub tasks: Vec<TaskSpec>,
}

impl DagSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Dag(format!("cannot parse DAG file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path.as_ref())?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagIssue {
    DuplicateName(String),
    UnknownDependency {
        task: String,
        dependency: String,
    },
    SelfDependency(String),
    /// Members of one cycle, in dependency order.
    Cycle(Vec<String>),
    BadAction {
        task: String,
        message: String,
    },
}

impl fmt::Display for DagIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DagIssue::DuplicateName(n) => write!(f, "duplicate task name `{n}`"),
            DagIssue::UnknownDependency { task, dependency } => {
                write!(f, "task `{task}` depends on undeclared task `{dependency}`")
            }
            DagIssue::SelfDependency(n) => write!(f, "task `{n}` depends on itself"),
            DagIssue::Cycle(members) => write!(f, "dependency cycle: {}", members.join(" -> ")),
            DagIssue::BadAction { task, message } => write!(f, "task `{task}`: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub issues: Vec<DagIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("ok");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_dag(spec: &DagSpec) -> ValidationReport {
    let mut issues = Vec::new();
    let mut names = HashSet::new();
    for t in &spec.tasks {
        if !names.insert(t.name.as_str()) {
            issues.push(DagIssue::DuplicateName(t.name.clone()));
        }
        match (&t.action, &t.command) {
            (Some(a), None) if !BUILTIN_ACTIONS.contains(&a.as_str()) => issues.push(DagIssue::BadAction {
                task: t.name.clone(),
                message: format!("unknown built-in action `{a}`"),
            }),
            (None, Some(c)) if c.is_empty() => issues.push(DagIssue::BadAction {
                task: t.name.clone(),
                message: "empty command".into(),
            }),
            (Some(_), Some(_)) | (None, None) => issues.push(DagIssue::BadAction {
                task: t.name.clone(),
                message: "exactly one of `action` or `command` is required".into(),
            }),
            _ => {}
        }
    }
    for t in &spec.tasks {
        for d in &t.depends_on {
            if d == &t.name {
                issues.push(DagIssue::SelfDependency(t.name.clone()));
            } else if !names.contains(d.as_str()) {
                issues.push(DagIssue::UnknownDependency {
                    task: t.name.clone(),
                    dependency: d.clone(),
                });
            }
        }
    }
    if let Some(cycle) = find_cycle(spec) {
        issues.push(DagIssue::Cycle(cycle));
    }
    ValidationReport { issues }
}

/// One cycle among declared, non-self edges, if any.
fn find_cycle(spec: &DagSpec) -> Option<Vec<String>> {
    let index: HashMap<&str, usize> = spec
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.name.as_str(), i))
        .collect();
    let deps: Vec<Vec<usize>> = spec
        .tasks
        .iter()
        .map(|t| {
            t.depends_on
                .iter()
                .filter(|d| *d != &t.name)
                .filter_map(|d| index.get(d.as_str()).copied())
                .collect()
        })
        .collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; deps.len()];
    let mut stack: Vec<usize> = Vec::new();
    fn dfs(v: usize, deps: &[Vec<usize>], color: &mut [u8], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        color[v] = 1;
        stack.push(v);
        for &w in &deps[v] {
            if color[w] == 1 {
                let at = stack.iter().position(|&s| s == w).expect("on stack");
                return Some(stack[at..].to_vec());
            }
            if color[w] == 0 {
                if let Some(c) = dfs(w, deps, color, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        color[v] = 2;
        None
    }
    (0..deps.len())
        .find_map(|v| {
            if color[v] == 0 {
                dfs(v, &deps, &mut color, &mut stack)
            } else {
                None
            }
        })
        .map(|c| c.into_iter().map(|i| spec.tasks[i].name.clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Running,
    Success,
    Failed,
    Skipped,
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskStatus::Pending => "pending",
            TaskStatus::Running => "running",
            TaskStatus::Success => "success",
            TaskStatus::Failed => "failed",
            TaskStatus::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskState {
    pub name: String,
    pub status: TaskStatus,
    pub attempts: u32,
    pub started_at: Option<i64>,
    pub finished_at: Option<i64>,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub dag_id: String,
    /// `running` until the run ends, then `success` or `failed`.
    pub status: TaskStatus,
    pub tasks: Vec<TaskState>,
    /// Names in the order they reached a terminal state.
    pub completion_order: Vec<String>,
}

impl RunState {
    pub fn task(&self, name: &str) -> Option<&TaskState> {
        self.tasks.iter().find(|t| t.name == name)
    }
}

/// Executes one attempt of a task.
pub trait TaskRunner {
    fn run(&mut self, task: &TaskSpec) -> std::result::Result<(), String>;
}

impl<F: FnMut(&TaskSpec) -> std::result::Result<(), String>> TaskRunner for F {
    fn run(&mut self, task: &TaskSpec) -> std::result::Result<(), String> {
        self(task)
    }
}

/// Runs `command` tasks as child processes and hands built-in actions to
/// `builtin(action, args)`, which returns a process-style exit code.
pub struct DefaultRunner<B> {
    pub builtin: B,
}

impl<B: FnMut(&str, &[String]) -> i32> TaskRunner for DefaultRunner<B> {
    fn run(&mut self, task: &TaskSpec) -> std::result::Result<(), String> {
        if let Some(action) = &task.action {
            return match (self.builtin)(action, &task.args) {
                0 => Ok(()),
                code => Err(format!("`{action}` exited with code {code}")),
            };
        }
        let argv = task.command.as_deref().unwrap_or_default();
        let (prog, rest) = argv.split_first().ok_or("empty command")?;
        let status = Command::new(prog)
            .args(rest)
            .status()
            .map_err(|e| format!("cannot start `{prog}`: {e}"))?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("`{prog}` exited with {status}"))
        }
    }
}

fn run_path(runs_dir: &Path, run_id: &str) -> PathBuf {
    runs_dir.join(format!("{run_id}.json"))
}

fn persist(runs_dir: &Path, state: &RunState) -> Result<()> {
    fs::create_dir_all(runs_dir)?;
    let path = run_path(runs_dir, &state.run_id);
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(serde_json::to_string_pretty(state)?.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(())
}

/// Validates, then runs every task in topological order. A task whose
/// dependencies did not all succeed is skipped. The returned state's
/// `status` is `success` only if every task succeeded.
pub fn run_dag<R: TaskRunner + ?Sized>(
    spec: &DagSpec,
    runner: &mut R,
    runs_dir: impl AsRef<Path>,
    run_id: &str,
) -> Result<RunState> {
    let runs_dir = runs_dir.as_ref();
    if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id.starts_with('.') {
        return Err(Error::Dag(format!("invalid run id `{run_id}`")));
    }
    let report = validate_dag(spec);
    if !report.is_ok() {
        return Err(Error::Dag(report.to_string()));
    }
    let pos: HashMap<&str, usize> = spec
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.name.as_str(), i))
        .collect();
    let mut state = RunState {
        run_id: run_id.to_owned(),
        dag_id: spec.dag_id.clone(),
        status: TaskStatus::Running,
        tasks: spec
            .tasks
            .iter()
            .map(|t| TaskState {
                name: t.name.clone(),
                status: TaskStatus::Pending,
                attempts: 0,
                started_at: None,
                finished_at: None,
                last_error: None,
            })
            .collect(),
        completion_order: Vec::new(),
    };
    persist(runs_dir, &state)?;

    let mut remaining: Vec<usize> = spec.tasks.iter().map(|t| t.depends_on.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); spec.tasks.len()];
    for (i, t) in spec.tasks.iter().enumerate() {
        for d in &t.depends_on {
            dependents[pos[d.as_str()]].push(i);
        }
    }
    let mut ready: BTreeSet<(&str, usize)> = spec
        .tasks
        .iter()
        .enumerate()
        .filter(|(i, _)| remaining[*i] == 0)
        .map(|(i, t)| (t.name.as_str(), i))
        .collect();

    while let Some(next) = ready.pop_first() {
        let i = next.1;
        let task = &spec.tasks[i];
        let deps_ok = task
            .depends_on
            .iter()
            .all(|d| state.tasks[pos[d.as_str()]].status == TaskStatus::Success);
        if deps_ok {
            state.tasks[i].status = TaskStatus::Running;
            state.tasks[i].started_at = Some(now_millis() as i64);
            persist(runs_dir, &state)?;
            loop {
                assert!(
                    task.depends_on
                        .iter()
                        .all(|d| state.tasks[pos[d.as_str()]].status == TaskStatus::Success),
                    "task `{}` started with an unsuccessful dependency",
                    task.name
                );
                state.tasks[i].attempts += 1;
                match runner.run(task) {
                    Ok(()) => {
                        state.tasks[i].status = TaskStatus::Success;
                        state.tasks[i].last_error = None;
                        break;
                    }
                    Err(e) => {
                        log::warn!("task `{}` attempt {} failed: {e}", task.name, state.tasks[i].attempts);
                        state.tasks[i].last_error = Some(e);
                        if state.tasks[i].attempts > task.retries {
                            state.tasks[i].status = TaskStatus::Failed;
                            break;
                        }
                        persist(runs_dir, &state)?;
                        std::thread::sleep(Duration::from_millis(task.retry_delay_ms));
                    }
                }
            }
            state.tasks[i].finished_at = Some(now_millis() as i64);
        } else {
            state.tasks[i].status = TaskStatus::Skipped;
        }
        state.completion_order.push(task.name.clone());
        persist(runs_dir, &state)?;
        for &j in &dependents[i] {
            remaining[j] -= 1;
            if remaining[j] == 0 {
                ready.insert((spec.tasks[j].name.as_str(), j));
            }
        }
    }
    state.status = if state.tasks.iter().all(|t| t.status == TaskStatus::Success) {
        TaskStatus::Success
    } else {
        TaskStatus::Failed
    };
    persist(runs_dir, &state)?;
    Ok(state)
}

pub fn load_run(runs_dir: impl AsRef<Path>, run_id: &str) -> Result<RunState> {
    let path = run_path(runs_dir.as_ref(), run_id);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(serde_json::from_str(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::UnknownRun(run_id.to_owned())),
        Err(e) => Err(e.into()),
    }
}

pub fn render_status(state: &RunState) -> String {
    let width = state.tasks.iter().map(|t| t.name.len()).chain([4]).max().unwrap_or(4);
    let mut out = format!("run {} (dag {}): {}\n", state.run_id, state.dag_id, state.status);
    let _ = writeln!(
        out,
        "{:<width$}  {:<8}  {:>8}  {:>11}",
        "task", "status", "attempts", "duration_ms"
    );
    for t in &state.tasks {
        let dur = match (t.started_at, t.finished_at) {
            (Some(s), Some(f)) => (f - s).to_string(),
            _ => "-".into(),
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:<8}  {:>8}  {:>11}",
            t.name,
            t.status.to_string(),
            t.attempts,
            dur
        );
    }
    out
}

/// Status table for a persisted run.
pub fn status(runs_dir: impl AsRef<Path>, run_id: &str) -> Result<String> {
    Ok(render_status(&load_run(runs_dir, run_id)?))
}

/// Task names grouped by status, for summaries.
pub fn status_counts(state: &RunState) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for t in &state.tasks {
        *m.entry(t.status.to_string()).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dag(edges: &[(&str, &[&str])]) -> DagSpec {
        DagSpec {
            dag_id: "t".into(),
            tasks: edges.iter().map(|(n, d)| TaskSpec::builtin(n, "train", d)).collect(),
        }
    }

    #[test]
    fn validation_examples() {
        assert!(validate_dag(&dag(&[("A", &[]), ("B", &["A"]), ("C", &["B"])])).is_ok());
        let r = validate_dag(&dag(&[("A", &["B"]), ("B", &["A"])]));
        let cycle = r
            .issues
            .iter()
            .find_map(|i| match i {
                DagIssue::Cycle(m) => Some(m.clone()),
                _ => None,
            })
            .unwrap();
        let mut sorted = cycle.clone();
        sorted.sort();
        assert_eq!(sorted, ["A", "B"]);
        let r = validate_dag(&dag(&[("A", &["X"])]));
        assert!(matches!(&r.issues[..], [DagIssue::UnknownDependency { dependency, .. }] if dependency == "X"));
        let r = validate_dag(&dag(&[("A", &["A"])]));
        assert_eq!(r.issues, [DagIssue::SelfDependency("A".into())]);
        let r = validate_dag(&dag(&[("A", &[]), ("A", &[])]));
        assert_eq!(r.issues, [DagIssue::DuplicateName("A".into())]);
    }

    #[test]
    fn parse_toml() {
        let spec = DagSpec::parse(
            r#"
dag_id = "offline"
[[task]]
name = "a"
action = "preprocess"
args = ["--x", "1"]
[[task]]
name = "b"
command = ["true"]
depends_on = ["a"]
retries = 2
"#,
        )
        .unwrap();
        assert_eq!(spec.tasks.len(), 2);
        assert_eq!(spec.tasks[1].retries, 2);
        assert!(validate_dag(&spec).is_ok());
        assert!(DagSpec::parse("dag_id = 1").is_err());
        let bad = DagSpec::parse("dag_id='x'\n[[task]]\nname='a'\naction='nope'\n").unwrap();
        assert!(!validate_dag(&bad).is_ok());
    }

    #[test]
    fn chain_runs_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dag(&[("C", &["B"]), ("B", &["A"]), ("A", &[])]);
        let mut seen = Vec::new();
        let mut runner = |t: &TaskSpec| {
            seen.push(t.name.clone());
            Ok(())
        };
        let st = run_dag(&spec, &mut runner, dir.path(), "r1").unwrap();
        assert_eq!(seen, ["A", "B", "C"]);
        assert_eq!(st.completion_order, ["A", "B", "C"]);
        assert_eq!(st.status, TaskStatus::Success);
        let text = status(dir.path(), "r1").unwrap();
        assert!(text.contains("success"));
        assert!(matches!(status(dir.path(), "nope"), Err(Error::UnknownRun(_))));
    }

    #[test]
    fn lexicographic_tie_break() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dag(&[("z", &[]), ("m", &[]), ("a", &["z"])]);
        let st = run_dag(&spec, &mut |_: &TaskSpec| Ok(()), dir.path(), "r").unwrap();
        assert_eq!(st.completion_order, ["m", "z", "a"]);
    }

    #[test]
    fn retry_then_success() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = dag(&[("A", &[]), ("B", &["A"]), ("C", &["B"])]);
        spec.tasks[1].retries = 1;
        let mut b_calls = 0;
        let mut runner = |t: &TaskSpec| {
            if t.name == "B" {
                b_calls += 1;
                if b_calls == 1 {
                    return Err("flaky".to_string());
                }
            }
            Ok(())
        };
        let st = run_dag(&spec, &mut runner, dir.path(), "r").unwrap();
        assert_eq!(st.task("B").unwrap().attempts, 2);
        assert_eq!(st.task("C").unwrap().status, TaskStatus::Success);
    }

    #[test]
    fn failure_skips_dependents() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dag(&[("A", &[]), ("B", &["A"]), ("C", &["B"]), ("D", &["A"])]);
        let mut runner = |t: &TaskSpec| if t.name == "B" { Err("boom".to_string()) } else { Ok(()) };
        let st = run_dag(&spec, &mut runner, dir.path(), "r").unwrap();
        assert_eq!(st.task("B").unwrap().status, TaskStatus::Failed);
        assert_eq!(st.task("C").unwrap().status, TaskStatus::Skipped);
        assert_eq!(st.task("C").unwrap().attempts, 0);
        assert_eq!(st.task("D").unwrap().status, TaskStatus::Success);
        assert_eq!(st.status, TaskStatus::Failed);
        let persisted = load_run(dir.path(), "r").unwrap();
        assert_eq!(persisted, st);
    }

    #[test]
    fn invalid_dag_not_executed() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dag(&[("A", &["B"]), ("B", &["A"])]);
        let mut ran = false;
        let r = run_dag(
            &spec,
            &mut |_: &TaskSpec| {
                ran = true;
                Ok(())
            },
            dir.path(),
            "r",
        );
        assert!(r.is_err());
        assert!(!ran);
    }

    #[test]
    fn external_commands() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = dag(&[("ok", &[]), ("bad", &[])]);
        spec.tasks[0].action = None;
        spec.tasks[0].command = Some(vec!["true".into()]);
        spec.tasks[1].action = None;
        spec.tasks[1].command = Some(vec!["false".into()]);
        let mut runner = DefaultRunner {
            builtin: |_: &str, _: &[String]| 0,
        };
        let st = run_dag(&spec, &mut runner, dir.path(), "r").unwrap();
        assert_eq!(st.task("ok").unwrap().status, TaskStatus::Success);
        assert_eq!(st.task("bad").unwrap().status, TaskStatus::Failed);
    }

    /// Cyclic iff some node reaches itself, by transitive closure.
    fn brute_force_cyclic(n: usize, edges: &[(usize, usize)]) -> bool {
        let mut reach = vec![vec![false; n]; n];
        for &(a, b) in edges {
            reach[a][b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        (0..n).any(|i| reach[i][i])
    }

    proptest! {
        #[test]
        fn validate_accepts_exactly_acyclic(
            n in 1usize..=10,
            raw in proptest::collection::vec((0usize..10, 0usize..10), 0..25),
        ) {
            let edges: Vec<(usize, usize)> = raw
                .into_iter()
                .map(|(a, b)| (a % n, b % n))
                .filter(|(a, b)| a != b)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let names: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let spec = DagSpec {
                dag_id: "p".into(),
                tasks: (0..n)
                    .map(|i| {
                        let deps: Vec<&str> = edges
                            .iter()
                            .filter(|(a, _)| *a == i)
                            .map(|(_, b)| names[*b].as_str())
                            .collect();
                        TaskSpec::builtin(&names[i], "train", &deps)
                    })
                    .collect(),
            };
            let report = validate_dag(&spec);
            prop_assert_eq!(report.is_ok(), !brute_force_cyclic(n, &edges));
            if let Some(DagIssue::Cycle(members)) = report.issues.first() {
                // Consecutive members (wrapping) must be real edges.
                for k in 0..members.len() {
                    let a: usize = members[k][1..].parse().unwrap();
                    let b: usize = members[(k + 1) % members.len()][1..].parse().unwrap();
                    prop_assert!(edges.contains(&(a, b)));
                }
            }
        }
    }
}
