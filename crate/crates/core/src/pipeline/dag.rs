use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named tasks and their dependencies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskDag {
    deps: BTreeMap<String, BTreeSet<String>>,
}

impl TaskDag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a task; dependencies may be added later but must exist by the
    /// time the DAG is validated.
    pub fn add_task<S: Into<String>>(&mut self, name: impl Into<String>, deps: impl IntoIterator<Item = S>) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) || name.contains(':') {
            return Err(Error::contract(format!("invalid task name '{name}'")));
        }
        if self.deps.contains_key(&name) {
            return Err(Error::contract(format!("task '{name}' is defined twice")));
        }
        self.deps.insert(name, deps.into_iter().map(Into::into).collect());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.deps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deps.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.deps.keys().map(String::as_str)
    }

    pub fn deps_of(&self, task: &str) -> Option<&BTreeSet<String>> {
        self.deps.get(task)
    }

    /// Dependency edges as (dependency, dependent) pairs.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.deps.iter().flat_map(|(t, ds)| ds.iter().map(move |d| (d.as_str(), t.as_str())))
    }

    fn dependents(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = self.deps.keys().map(|k| (k.as_str(), Vec::new())).collect();
        for (d, t) in self.edges() {
            out.entry(d).or_default().push(t);
        }
        out
    }

    /// Checks that every dependency exists and that there is no cycle, and
    /// returns a topological order (smallest name first among ready tasks).
    pub fn validate(&self) -> Result<Vec<String>> {
        for (t, ds) in &self.deps {
            if let Some(missing) = ds.iter().find(|d| !self.deps.contains_key(*d)) {
                return Err(Error::contract(format!("task '{t}' depends on undefined task '{missing}'")));
            }
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(Error::Cycle(cycle));
        }
        let dependents = self.dependents();
        let mut remaining: BTreeMap<&str, usize> = self.deps.iter().map(|(t, d)| (t.as_str(), d.len())).collect();
        let mut ready: BTreeSet<&str> = remaining.iter().filter(|(_, n)| **n == 0).map(|(t, _)| *t).collect();
        let mut order = Vec::with_capacity(self.deps.len());
        while let Some(t) = ready.pop_first() {
            order.push(t.to_string());
            for c in &dependents[t] {
                let n = remaining.get_mut(c).expect("dependent exists");
                *n -= 1;
                if *n == 0 {
                    ready.insert(c);
                }
            }
        }
        Ok(order)
    }

    /// A cycle along dependency edges, starting and ending at the same task.
    fn find_cycle(&self) -> Option<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        let dependents = self.dependents();
        let mut mark: BTreeMap<&str, Mark> = self.deps.keys().map(|k| (k.as_str(), Mark::New)).collect();
        for start in self.deps.keys() {
            if mark[start.as_str()] != Mark::New {
                continue;
            }
            let mut path: Vec<&str> = vec![start];
            let mut cursors: Vec<usize> = vec![0];
            mark.insert(start, Mark::Open);
            while let Some(&node) = path.last() {
                let i = cursors.last_mut().expect("cursor per path node");
                match dependents[node].get(*i) {
                    Some(&next) => {
                        *i += 1;
                        match mark[next] {
                            Mark::Open => {
                                let from = path.iter().position(|n| *n == next).expect("open node is on the path");
                                let mut cycle: Vec<String> = path[from..].iter().map(|s| s.to_string()).collect();
                                cycle.push(next.to_string());
                                return Some(cycle);
                            }
                            Mark::New => {
                                mark.insert(next, Mark::Open);
                                path.push(next);
                                cursors.push(0);
                            }
                            Mark::Done => {}
                        }
                    }
                    None => {
                        mark.insert(node, Mark::Done);
                        path.pop();
                        cursors.pop();
                    }
                }
            }
        }
        None
    }

    /// Parses `task: dep1 dep2 ...` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut dag = TaskDag::new();
        let mut defined_at: BTreeMap<String, u64> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, deps) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(origin, line_no, format!("expected 'task: deps', found '{line}'")))?;
            dag.add_task(name.trim(), deps.split_whitespace()).map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
            defined_at.insert(name.trim().to_string(), line_no);
        }
        for (t, ds) in &dag.deps {
            if let Some(missing) = ds.iter().find(|d| !dag.deps.contains_key(*d)) {
                return Err(Error::parse(origin, defined_at[t], format!("task '{t}' depends on undefined task '{missing}'")));
            }
        }
        dag.validate()?;
        Ok(dag)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_text(&self) -> String {
        self.deps
            .iter()
            .map(|(t, ds)| {
                let deps: Vec<&str> = ds.iter().map(String::as_str).collect();
                format!("{t}: {}\n", deps.join(" "))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TaskOutcome<T> {
    Succeeded { output: T },
    Failed { error: String },
    Skipped { failed_dependency: String },
}

/// One executed task; times are microseconds since the run started.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub task: String,
    pub start: u64,
    pub end: u64,
    pub worker: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DagRun<T> {
    pub outcomes: BTreeMap<String, TaskOutcome<Arc<T>>>,
    /// Executed tasks in completion order.
    pub completion_order: Vec<String>,
    /// In completion order.
    pub trace: Vec<TraceEvent>,
}

impl<T> DagRun<T> {
    pub fn succeeded(&self) -> bool {
        self.outcomes.values().all(|o| matches!(o, TaskOutcome::Succeeded { .. }))
    }

    pub fn output(&self, task: &str) -> Option<&T> {
        match self.outcomes.get(task)? {
            TaskOutcome::Succeeded { output } => Some(output),
            _ => None,
        }
    }

    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|e| serde_json::to_string(e).expect("trace serializes") + "\n").collect()
    }
}

struct Schedule<T> {
    ready: VecDeque<String>,
    remaining: BTreeMap<String, usize>,
    outcomes: BTreeMap<String, TaskOutcome<Arc<T>>>,
    order: Vec<String>,
    trace: Vec<TraceEvent>,
}

/// Runs every task once after all its dependencies on a pool of `workers`
/// threads. A task sees the outputs of its direct dependencies. A failed or
/// panicking task marks all its descendants skipped. Cycles and undefined
/// dependencies are rejected before anything runs.
pub fn execute_dag<T, F>(dag: &TaskDag, workers: usize, run: F) -> Result<DagRun<T>>
where
    T: Send + Sync,
    F: Fn(&str, &BTreeMap<String, Arc<T>>) -> std::result::Result<T, String> + Sync,
{
    dag.validate()?;
    if workers == 0 {
        return Err(Error::contract("execute_dag needs at least one worker"));
    }
    let dependents: BTreeMap<String, Vec<String>> = dag
        .dependents()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.into_iter().map(str::to_string).collect()))
        .collect();
    let remaining: BTreeMap<String, usize> = dag.deps.iter().map(|(t, d)| (t.clone(), d.len())).collect();
    let ready: VecDeque<String> = remaining.iter().filter(|(_, n)| **n == 0).map(|(t, _)| t.clone()).collect();
    let state = Mutex::new(Schedule::<T> { ready, remaining, outcomes: BTreeMap::new(), order: Vec::new(), trace: Vec::new() });
    let wake = Condvar::new();
    let total = dag.len();
    let clock = Instant::now();

    let worker = |id: usize| loop {
        let task = {
            let mut st = state.lock().unwrap_or_else(|p| p.into_inner());
            loop {
                if st.outcomes.len() == total {
                    wake.notify_all();
                    return;
                }
                if let Some(t) = st.ready.pop_front() {
                    break t;
                }
                st = wake.wait(st).unwrap_or_else(|p| p.into_inner());
            }
        };
        let inputs: BTreeMap<String, Arc<T>> = {
            let st = state.lock().unwrap_or_else(|p| p.into_inner());
            dag.deps[&task]
                .iter()
                .filter_map(|d| match &st.outcomes[d] {
                    TaskOutcome::Succeeded { output } => Some((d.clone(), output.clone())),
                    _ => None,
                })
                .collect()
        };
        let start = clock.elapsed().as_micros() as u64;
        let result = catch_unwind(AssertUnwindSafe(|| run(&task, &inputs)))
            .unwrap_or_else(|_| Err(format!("task '{task}' panicked")));
        let end = clock.elapsed().as_micros() as u64;

        let mut st = state.lock().unwrap_or_else(|p| p.into_inner());
        st.trace.push(TraceEvent { task: task.clone(), start, end, worker: id });
        st.order.push(task.clone());
        match result {
            Ok(output) => {
                st.outcomes.insert(task.clone(), TaskOutcome::Succeeded { output: Arc::new(output) });
                for child in &dependents[&task] {
                    let n = st.remaining.get_mut(child).expect("dependent exists");
                    *n -= 1;
                    if *n == 0 && !st.outcomes.contains_key(child) {
                        st.ready.push_back(child.clone());
                    }
                }
            }
            Err(error) => {
                st.outcomes.insert(task.clone(), TaskOutcome::Failed { error });
                let mut queue: VecDeque<&String> = dependents[&task].iter().collect();
                while let Some(d) = queue.pop_front() {
                    if !st.outcomes.contains_key(d) {
                        st.outcomes.insert(d.clone(), TaskOutcome::Skipped { failed_dependency: task.clone() });
                        queue.extend(dependents[d].iter());
                    }
                }
            }
        }
        wake.notify_all();
    };
    std::thread::scope(|s| {
        for id in 0..workers.min(total.max(1)) {
            let worker = &worker;
            s.spawn(move || worker(id));
        }
    });
    let st = state.into_inner().unwrap_or_else(|p| p.into_inner());
    Ok(DagRun { outcomes: st.outcomes, completion_order: st.order, trace: st.trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::time::Duration;

    fn dag(lines: &str) -> TaskDag {
        TaskDag::parse(lines, Path::new("test.dag")).unwrap()
    }

    fn sleeper(ms: u64) -> impl Fn(&str, &BTreeMap<String, Arc<String>>) -> std::result::Result<String, String> + Sync {
        move |t, _| {
            std::thread::sleep(Duration::from_millis(ms));
            Ok(t.to_string())
        }
    }

    #[test]
    fn diamond_overlaps_and_ends_with_d() {
        let d = dag("A:\nB: A\nC: A\nD: B C\n");
        let run = execute_dag(&d, 2, sleeper(40)).unwrap();
        assert!(run.succeeded());
        let ev = |t: &str| run.trace.iter().find(|e| e.task == t).unwrap().clone();
        let (b, c) = (ev("B"), ev("C"));
        assert!(b.start < c.end && c.start < b.end, "{b:?} {c:?}");
        assert_ne!(b.worker, c.worker);
        assert_eq!(run.completion_order.last().unwrap(), "D");
        assert!(ev("D").start >= b.end.max(c.end));
    }

    #[test]
    fn single_node_runs_once() {
        let d = dag("only:");
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let run = execute_dag(&d, 4, |_, _| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(1)
        })
        .unwrap();
        assert_eq!(calls.into_inner(), 1);
        assert_eq!(run.completion_order, vec!["only"]);
    }

    #[test]
    fn cycles_are_reported_with_their_path() {
        match TaskDag::parse("A: B\nB: A\n", Path::new("x")) {
            Err(Error::Cycle(path)) => assert_eq!(path, vec!["A", "B", "A"]),
            other => panic!("{other:?}"),
        }
        match TaskDag::parse("A: A", Path::new("x")) {
            Err(Error::Cycle(path)) => assert_eq!(path, vec!["A", "A"]),
            other => panic!("{other:?}"),
        }
        let mut d = TaskDag::new();
        d.add_task("x", ["y"]).unwrap();
        d.add_task("y", ["z"]).unwrap();
        d.add_task("z", ["x"]).unwrap();
        assert!(matches!(execute_dag(&d, 1, sleeper(0)), Err(Error::Cycle(p)) if p.len() == 4));
    }

    #[test]
    fn parse_errors_carry_lines() {
        assert!(matches!(TaskDag::parse("A:\nB A\n", Path::new("f")), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(TaskDag::parse("A:\nB: Z\n", Path::new("f")), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(TaskDag::parse("A:\nA:\n", Path::new("f")), Err(Error::Parse { line: 2, .. })));
        let d = dag("# pipeline\nfetch:   # first\nparse: fetch\n\n");
        assert_eq!(d.len(), 2);
        assert_eq!(dag(&d.to_text()), d);
    }

    #[test]
    fn failure_skips_descendants_only() {
        let d = dag("A:\nB: A\nC: A\nD: B\nE: C\nF: D E\n");
        let run = execute_dag(&d, 2, |t, inputs| if t == "B" { Err("boom".into()) } else { Ok(inputs.len()) }).unwrap();
        assert!(matches!(&run.outcomes["B"], TaskOutcome::Failed { error } if error == "boom"));
        for t in ["D", "F"] {
            assert!(matches!(&run.outcomes[t], TaskOutcome::Skipped { failed_dependency } if failed_dependency == "B"));
        }
        assert_eq!(run.output("E"), Some(&1));
        assert_eq!(run.completion_order.len(), 4);
        assert!(!run.succeeded());
    }

    #[test]
    fn panics_become_failures() {
        let d = dag("A:\nB: A\n");
        let run = execute_dag(&d, 1, |t, _| -> std::result::Result<u8, String> {
            if t == "A" {
                panic!("kaput")
            }
            Ok(0)
        })
        .unwrap();
        assert!(matches!(run.outcomes["A"], TaskOutcome::Failed { .. }));
        assert!(matches!(run.outcomes["B"], TaskOutcome::Skipped { .. }));
    }

    #[test]
    fn outputs_flow_along_edges() {
        let d = dag("a:\nb:\nsum: a b\n");
        let run = execute_dag(&d, 3, |t, inputs: &BTreeMap<String, Arc<u32>>| match t {
            "a" => Ok(2),
            "b" => Ok(5),
            _ => Ok(inputs.values().map(|v| **v).sum()),
        })
        .unwrap();
        assert_eq!(run.output("sum"), Some(&7));
        assert_eq!(run.trace_jsonl().lines().count(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn completion_order_is_topological(n in 1usize..20, raw in prop::collection::vec((0usize..20, 0usize..20), 0..60), workers in 1usize..5) {
            let mut d = TaskDag::new();
            for i in 0..n {
                let deps: Vec<String> = raw.iter().filter(|(a, b)| *b == i && *a < i).map(|(a, _)| format!("t{a:02}")).collect();
                d.add_task(format!("t{i:02}"), deps).unwrap();
            }
            let run = execute_dag(&d, workers, |t, _| Ok(t.len())).unwrap();
            prop_assert_eq!(run.completion_order.len(), n);
            let pos: BTreeMap<&str, usize> = run.completion_order.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
            for (dep, task) in d.edges() {
                prop_assert!(pos[dep] < pos[task]);
            }
            let order = d.validate().unwrap();
            let vpos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
            for (dep, task) in d.edges() {
                prop_assert!(vpos[dep] < vpos[task]);
            }
        }
    }
}
