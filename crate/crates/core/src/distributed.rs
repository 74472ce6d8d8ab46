//! Coordinator/worker execution of the ADMM sweep.
//!
//! Nodes are partitioned over `k` worker threads. Each worker owns the local
//! iterates `(zᵢ, θᵢ, λᵢ, μᵢ)` of its nodes and only ever receives the hidden
//! outputs its nodes read (`xᵢ`) and the global parameters they are tied to.
//! The coordinator owns `x`, `θ₀` and `ρ`. One iteration is four rounds:
//!
//! 1. `Begin`: workers factor their node systems and return Schur
//!    contributions.
//! 2. `Broadcast`: the coordinator solves for `x` and sends each node its
//!    columns and its `θ₀` slice; workers solve for `zᵢ`, `θᵢ` and return
//!    tied sums of `θᵢ`.
//! 3. `Theta0`: the coordinator averages `θ₀` and sends slices back; workers
//!    update their duals and return residual pieces.
//! 4. The coordinator evaluates the stopping test and adapts `ρ`.
//!
//! Contributions are always combined in ascending node order, so a run is
//! bitwise identical to [`crate::admm::solve`] with the sequential policy.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::admm::{
    adapt_rho, combine_residuals, dual_update, local_apply_a, reduce_theta0, residual_contribution,
    shifted_dual, solve_schur, theta_contribution, theta_update, AdmmState, IterationRecord, NodeIterates,
    NodeSystem, ResidualContribution, SchurContribution, SolveResult, SolverConfig, ThetaContribution,
};
use crate::error::{NetidError, Result};
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistributedConfig {
    pub workers: usize,
    /// Barrier timeout per round.
    pub timeout_s: f64,
    pub record_log: bool,
    /// Keep the full iterate after every iteration.
    pub record_snapshots: bool,
}

impl Default for DistributedConfig {
    fn default() -> Self {
        Self { workers: 4, timeout_s: 60.0, record_log: true, record_snapshots: false }
    }
}

/// Hidden output `j` over all samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XSlice {
    pub index: usize,
    pub values: Vec<f64>,
}

/// Coordinator to worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    Init { node: usize, theta0: Vec<(usize, f64)> },
    Begin { node: usize, rho: f64 },
    Broadcast { node: usize, x: Vec<XSlice>, theta0: Vec<(usize, f64)> },
    Theta0 { node: usize, theta0: Vec<(usize, f64)> },
    Collect { node: usize },
    Shutdown,
}

/// Local iterates of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Worker to coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Schur { node: usize, contribution: SchurContribution },
    Theta { node: usize, contribution: ThetaContribution },
    Residual { node: usize, contribution: ResidualContribution, snapshot: Option<NodeSnapshot> },
    Final { node: usize, snapshot: NodeSnapshot },
    Failed { node: usize, message: String },
}

impl Report {
    fn node(&self) -> usize {
        match self {
            Report::Schur { node, .. }
            | Report::Theta { node, .. }
            | Report::Residual { node, .. }
            | Report::Final { node, .. }
            | Report::Failed { node, .. } => *node,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Report::Schur { .. } => "schur",
            Report::Theta { .. } => "theta",
            Report::Residual { .. } => "residual",
            Report::Final { .. } => "final",
            Report::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToWorker,
    ToCoordinator,
}

/// Metadata of one message: which shared quantities it carried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub iter: usize,
    pub direction: Direction,
    pub node: usize,
    pub kind: String,
    pub x_indices: Vec<usize>,
    pub theta0_indices: Vec<usize>,
    pub floats: usize,
}

impl MessageRecord {
    fn command(iter: usize, cmd: &Command) -> Option<Self> {
        let rec = |node, kind: &str, x: &[XSlice], th: &[(usize, f64)]| Self {
            iter,
            direction: Direction::ToWorker,
            node,
            kind: kind.to_string(),
            x_indices: x.iter().map(|s| s.index).collect(),
            theta0_indices: th.iter().map(|e| e.0).collect(),
            floats: x.iter().map(|s| s.values.len()).sum::<usize>() + th.len(),
        };
        Some(match cmd {
            Command::Init { node, theta0 } => rec(*node, "init", &[], theta0),
            Command::Begin { node, .. } => Self { floats: 1, ..rec(*node, "begin", &[], &[]) },
            Command::Broadcast { node, x, theta0 } => rec(*node, "broadcast", x, theta0),
            Command::Theta0 { node, theta0 } => rec(*node, "theta0", &[], theta0),
            Command::Collect { node } => rec(*node, "collect", &[], &[]),
            Command::Shutdown => return None,
        })
    }

    fn report(iter: usize, r: &Report) -> Self {
        let (x_indices, theta0_indices, floats) = match r {
            Report::Schur { contribution: c, .. } => (c.hidden.clone(), vec![], c.block.len() + c.rhs.len()),
            Report::Theta { contribution: c, .. } => (vec![], c.sums.iter().map(|e| e.0).collect(), c.sums.len()),
            Report::Residual { contribution: c, .. } => (
                vec![],
                c.et_mu.iter().map(|e| e.0).collect(),
                7 + c.at_dz.len() + c.at_lambda.len() + c.et_dtheta.len() + c.et_mu.len(),
            ),
            Report::Final { snapshot: s, .. } => {
                (vec![], vec![], s.z.len() + s.theta.len() + s.lambda.len() + s.mu.len())
            }
            Report::Failed { .. } => (vec![], vec![], 0),
        };
        Self {
            iter,
            direction: Direction::ToCoordinator,
            node: r.node(),
            kind: r.kind().to_string(),
            x_indices,
            theta0_indices,
            floats,
        }
    }
}

/// Full iterate after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSnapshot {
    pub iter: usize,
    pub x: Vec<f64>,
    pub theta0: Vec<f64>,
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Penalty for the next iteration.
    pub rho: f64,
}

impl IterateSnapshot {
    pub fn from_state(state: &AdmmState) -> Self {
        Self {
            iter: state.iter,
            x: state.x.clone(),
            theta0: state.theta0.clone(),
            z: state.z.clone(),
            theta: state.theta.clone(),
            lambda: state.lambda.clone(),
            mu: state.mu.clone(),
            rho: state.rho,
        }
    }

    /// Largest absolute difference over all blocks.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = |a: &[f64], b: &[f64]| {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        [
            d(&self.x, &other.x),
            d(&self.theta0, &other.theta0),
            d(&self.z, &other.z),
            d(&self.theta, &other.theta),
            d(&self.lambda, &other.lambda),
            d(&self.mu, &other.mu),
            (self.rho - other.rho).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DistributedRun {
    pub result: SolveResult,
    pub log: Vec<MessageRecord>,
    pub snapshots: Vec<IterateSnapshot>,
}

/// Writes the message log as JSON lines.
pub fn write_message_log<W: Write>(log: &[MessageRecord], mut w: W) -> Result<()> {
    for rec in log {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalityAudit {
    pub messages: usize,
    pub violations: Vec<String>,
}

impl LocalityAudit {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every message to a worker carried only hidden outputs its
/// node reads and global parameters it is tied to. A broadcast must carry
/// all of them.
pub fn audit_locality(problem: &Problem, log: &[MessageRecord]) -> LocalityAudit {
    let mut audit = LocalityAudit::default();
    for rec in log.iter().filter(|r| r.direction == Direction::ToWorker) {
        audit.messages += 1;
        let i = rec.node;
        if i >= problem.node_count() {
            audit.violations.push(format!("iter {}: message to unknown node {i}", rec.iter));
            continue;
        }
        let hidden = &problem.coupling(i).hidden;
        let globals = problem.tying.node_globals(i);
        let foreign_x: Vec<usize> =
            rec.x_indices.iter().copied().filter(|j| hidden.binary_search(j).is_err()).collect();
        let foreign_t: Vec<usize> =
            rec.theta0_indices.iter().copied().filter(|j| globals.binary_search(j).is_err()).collect();
        if !foreign_x.is_empty() {
            audit.violations.push(format!("iter {}: node {i} sent x{foreign_x:?} ({})", rec.iter, rec.kind));
        }
        if !foreign_t.is_empty() {
            audit.violations.push(format!("iter {}: node {i} sent θ₀{foreign_t:?} ({})", rec.iter, rec.kind));
        }
        if rec.kind == "broadcast" && (&rec.x_indices != hidden || rec.theta0_indices != globals) {
            audit.violations.push(format!("iter {}: incomplete broadcast to node {i}", rec.iter));
        }
    }
    audit
}

/// Node `i` runs on worker `i k / M`.
pub fn owner(node: usize, nodes: usize, workers: usize) -> usize {
    node * workers / nodes
}

struct NodeWorker<'a> {
    node: usize,
    problem: &'a Problem,
    z: Vec<f64>,
    z_prev: Vec<f64>,
    theta: Vec<f64>,
    theta_prev: Vec<f64>,
    lambda: Vec<f64>,
    mu: Vec<f64>,
    x_local: Vec<f64>,
    /// `θ̄ᵢ` from the last `θ₀` slice received.
    theta_bar: Vec<f64>,
    r: Vec<f64>,
    rho: f64,
    system: Option<NodeSystem<'a>>,
}

impl<'a> NodeWorker<'a> {
    fn new(problem: &'a Problem, node: usize) -> Self {
        let b = problem.form.b()[problem.form.node_range(node)].to_vec();
        let q = problem.tying.node_param_dim(node);
        Self {
            node,
            problem,
            z_prev: b.clone(),
            lambda: vec![0.0; b.len()],
            r: Vec::new(),
            z: b,
            theta: vec![0.0; q],
            theta_prev: vec![0.0; q],
            mu: vec![0.0; q],
            x_local: vec![0.0; problem.coupling(node).hidden.len() * problem.n_samples()],
            theta_bar: vec![0.0; q],
            rho: 0.0,
            system: None,
        }
    }

    fn b(&self) -> &'a [f64] {
        &self.problem.form.b()[self.problem.form.node_range(self.node)]
    }

    /// `Eᵢ θ₀` from a slice; components outside the slice are never read.
    fn gather(&self, slice: &[(usize, f64)]) -> Result<Vec<f64>> {
        let lookup: BTreeMap<usize, f64> = slice.iter().copied().collect();
        self.problem
            .tying
            .ties(self.node)
            .iter()
            .map(|j| match j {
                None => Ok(0.0),
                Some(j) => lookup.get(j).copied().ok_or_else(|| self.fail(format!("θ₀[{j}] not received"))),
            })
            .collect()
    }

    fn fail(&self, message: String) -> NetidError {
        NetidError::Worker { node: self.node, message }
    }

    fn snapshot(&self) -> NodeSnapshot {
        NodeSnapshot { z: self.z.clone(), theta: self.theta.clone(), lambda: self.lambda.clone(), mu: self.mu.clone() }
    }

    fn handle(&mut self, cmd: Command, snapshots: bool) -> Result<Option<Report>> {
        let node = self.node;
        let n = self.problem.n_samples();
        let coupling = self.problem.coupling(node);
        match cmd {
            Command::Init { theta0, .. } => {
                self.theta_bar = self.gather(&theta0)?;
                self.theta = self.theta_bar.clone();
                Ok(None)
            }
            Command::Begin { rho, .. } => {
                self.z_prev.copy_from_slice(&self.z);
                self.theta_prev.copy_from_slice(&self.theta);
                self.rho = rho;
                let system = NodeSystem::new(&self.problem.models[node], coupling, &self.theta, rho, n)?;
                self.r = shifted_dual(&self.lambda, self.b(), rho);
                let report = (!coupling.is_empty())
                    .then(|| Report::Schur { node, contribution: system.schur_contribution(&self.r) });
                self.system = Some(system);
                Ok(report)
            }
            Command::Broadcast { x, theta0, .. } => {
                if x.len() != coupling.hidden.len() || x.iter().zip(&coupling.hidden).any(|(s, &j)| s.index != j) {
                    return Err(self.fail("broadcast does not match the node's hidden columns".into()));
                }
                self.x_local = x.into_iter().flat_map(|s| s.values).collect();
                let system = self.system.as_ref().ok_or_else(|| self.fail("broadcast before begin".into()))?;
                self.z = system.solve_z(&self.x_local, &self.r);
                let theta_bar = self.gather(&theta0)?;
                self.theta = theta_update(&self.problem.models[node], &self.z, n, &theta_bar, &self.mu, self.rho)?;
                Ok(Some(Report::Theta {
                    node,
                    contribution: theta_contribution(&self.problem.tying, node, &self.theta),
                }))
            }
            Command::Theta0 { theta0, .. } => {
                self.theta_bar = self.gather(&theta0)?;
                let b = self.b();
                dual_update(
                    coupling,
                    &self.x_local,
                    &self.z,
                    b,
                    &self.theta,
                    &self.theta_bar,
                    self.rho,
                    &mut self.lambda,
                    &mut self.mu,
                );
                let ax = local_apply_a(coupling, &self.x_local, n);
                let contribution = residual_contribution(
                    coupling,
                    &self.problem.tying,
                    node,
                    n,
                    &NodeIterates {
                        z: &self.z,
                        z_prev: &self.z_prev,
                        ax: &ax,
                        b,
                        lambda: &self.lambda,
                        theta: &self.theta,
                        theta_prev: &self.theta_prev,
                        theta_bar: &self.theta_bar,
                        mu: &self.mu,
                    },
                );
                Ok(Some(Report::Residual { node, contribution, snapshot: snapshots.then(|| self.snapshot()) }))
            }
            Command::Collect { .. } => Ok(Some(Report::Final { node, snapshot: self.snapshot() })),
            Command::Shutdown => Ok(None),
        }
    }
}

fn command_node(cmd: &Command) -> Option<usize> {
    match cmd {
        Command::Init { node, .. }
        | Command::Begin { node, .. }
        | Command::Broadcast { node, .. }
        | Command::Theta0 { node, .. }
        | Command::Collect { node } => Some(*node),
        Command::Shutdown => None,
    }
}

fn worker_loop(problem: &Problem, nodes: Vec<usize>, rx: Receiver<Command>, tx: Sender<Report>, snapshots: bool) {
    let first = nodes.first().copied().unwrap_or(0);
    let mut workers: Vec<NodeWorker<'_>> = nodes.iter().map(|&i| NodeWorker::new(problem, i)).collect();
    while let Ok(cmd) = rx.recv() {
        let Some(node) = command_node(&cmd) else { break };
        let Some(w) = node.checked_sub(first).and_then(|k| workers.get_mut(k)) else {
            let _ = tx.send(Report::Failed { node, message: "node is not hosted by this worker".into() });
            continue;
        };
        let reply = match w.handle(cmd, snapshots) {
            Ok(r) => r,
            Err(e) => Some(Report::Failed { node, message: e.to_string() }),
        };
        if let Some(r) = reply {
            if tx.send(r).is_err() {
                break;
            }
        }
    }
}

struct Coordinator<'p> {
    problem: &'p Problem,
    senders: Vec<Sender<Command>>,
    rx: Receiver<Report>,
    timeout: Duration,
    record_log: bool,
    log: Vec<MessageRecord>,
    iter: usize,
}

impl Coordinator<'_> {
    fn send(&mut self, cmd: Command) -> Result<()> {
        let node = command_node(&cmd).expect("addressed command");
        if self.record_log {
            self.log.extend(MessageRecord::command(self.iter, &cmd));
        }
        let w = owner(node, self.problem.node_count(), self.senders.len());
        self.senders[w]
            .send(cmd)
            .map_err(|_| NetidError::Worker { node, message: "worker channel closed".into() })
    }

    /// Waits for one report from each of `expected`, returned in node order.
    fn gather(&mut self, expected: &[usize]) -> Result<Vec<Report>> {
        let mut slots: BTreeMap<usize, Option<Report>> = expected.iter().map(|&i| (i, None)).collect();
        let deadline = Instant::now() + self.timeout;
        let mut missing = expected.len();
        while missing > 0 {
            let wait = deadline.saturating_duration_since(Instant::now());
            let report = match self.rx.recv_timeout(wait) {
                Ok(r) => r,
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {
                    let node = slots.iter().find(|(_, r)| r.is_none()).map_or(0, |(&i, _)| i);
                    return Err(NetidError::MissingContribution(node));
                }
            };
            if self.record_log {
                self.log.push(MessageRecord::report(self.iter, &report));
            }
            if let Report::Failed { node, message } = report {
                return Err(NetidError::Worker { node, message });
            }
            let node = report.node();
            match slots.get_mut(&node) {
                Some(slot @ None) => {
                    *slot = Some(report);
                    missing -= 1;
                }
                _ => {
                    return Err(NetidError::Worker { node, message: format!("unexpected {} report", report.kind()) })
                }
            }
        }
        Ok(slots.into_values().flatten().collect())
    }

    fn theta0_slice(&self, i: usize, theta0: &[f64]) -> Vec<(usize, f64)> {
        self.problem.tying.node_globals(i).into_iter().map(|j| (j, theta0[j])).collect()
    }

    fn shutdown(&mut self) {
        for s in &self.senders {
            let _ = s.send(Command::Shutdown);
        }
    }
}

/// Runs ADMM with the node work spread over `cfg.workers` threads.
pub fn run_distributed(problem: &Problem, cfg: &SolverConfig, dist: &DistributedConfig) -> Result<DistributedRun> {
    cfg.validate()?;
    if dist.timeout_s.is_nan() || dist.timeout_s <= 0.0 {
        return Err(NetidError::Config(format!("timeout_s must be positive, got {}", dist.timeout_s)));
    }
    let m = problem.node_count();
    let k = dist.workers.clamp(1, m.max(1));
    let initial = AdmmState::initial(problem, cfg)?;

    thread::scope(|scope| {
        let (report_tx, report_rx) = mpsc::channel();
        let mut senders = Vec::with_capacity(k);
        for w in 0..k {
            let (tx, rx) = mpsc::channel();
            senders.push(tx);
            let nodes: Vec<usize> = (0..m).filter(|&i| owner(i, m, k) == w).collect();
            let report_tx = report_tx.clone();
            let snapshots = dist.record_snapshots;
            scope.spawn(move || worker_loop(problem, nodes, rx, report_tx, snapshots));
        }
        drop(report_tx);
        let mut coord = Coordinator {
            problem,
            senders,
            rx: report_rx,
            timeout: Duration::from_secs_f64(dist.timeout_s),
            record_log: dist.record_log,
            log: Vec::new(),
            iter: 0,
        };
        let outcome = coordinate(&mut coord, cfg, dist, initial);
        coord.shutdown();
        outcome.map(|(result, snapshots)| DistributedRun { result, log: std::mem::take(&mut coord.log), snapshots })
    })
}

fn coordinate(
    coord: &mut Coordinator<'_>,
    cfg: &SolverConfig,
    dist: &DistributedConfig,
    initial: AdmmState,
) -> Result<(SolveResult, Vec<IterateSnapshot>)> {
    let problem = coord.problem;
    let m = problem.node_count();
    let n = problem.n_samples();
    let all: Vec<usize> = (0..m).collect();
    let coupled: Vec<usize> = all.iter().copied().filter(|&i| !problem.coupling(i).is_empty()).collect();
    let mut x = initial.x;
    let mut theta0 = initial.theta0;
    let mut rho = initial.rho;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut snapshots = Vec::new();
    let mut converged = false;

    for i in 0..m {
        let slice = coord.theta0_slice(i, &theta0);
        coord.send(Command::Init { node: i, theta0: slice })?;
    }
    while coord.iter < cfg.max_iter {
        for i in 0..m {
            coord.send(Command::Begin { node: i, rho })?;
        }
        let schur: Vec<SchurContribution> = coord
            .gather(&coupled)?
            .into_iter()
            .filter_map(|r| match r {
                Report::Schur { contribution, .. } => Some(contribution),
                _ => None,
            })
            .collect();
        if schur.len() != coupled.len() {
            return Err(NetidError::Worker { node: 0, message: "expected Schur contributions".into() });
        }
        if problem.form.hidden_count() > 0 {
            x = solve_schur(problem.form.hidden_count(), n, &schur, rho)?;
        }

        for i in 0..m {
            let cols = problem
                .coupling(i)
                .hidden
                .iter()
                .map(|&j| XSlice { index: j, values: x[j * n..(j + 1) * n].to_vec() })
                .collect();
            let slice = coord.theta0_slice(i, &theta0);
            coord.send(Command::Broadcast { node: i, x: cols, theta0: slice })?;
        }
        let sums: Vec<ThetaContribution> = coord
            .gather(&all)?
            .into_iter()
            .filter_map(|r| match r {
                Report::Theta { contribution, .. } => Some(contribution),
                _ => None,
            })
            .collect();
        if sums.len() != m {
            return Err(NetidError::Worker { node: 0, message: "expected θ contributions".into() });
        }
        theta0 = reduce_theta0(problem.tying.global_dim(), &sums)?;

        for i in 0..m {
            let slice = coord.theta0_slice(i, &theta0);
            coord.send(Command::Theta0 { node: i, theta0: slice })?;
        }
        let mut residuals = Vec::with_capacity(m);
        let mut nodes = Vec::with_capacity(m);
        for r in coord.gather(&all)? {
            match r {
                Report::Residual { contribution, snapshot, .. } => {
                    residuals.push(contribution);
                    nodes.extend(snapshot);
                }
                other => {
                    return Err(NetidError::Worker { node: other.node(), message: "expected residual".into() })
                }
            }
        }
        let check = combine_residuals(problem, &residuals, rho, cfg);
        coord.iter += 1;
        history.push(IterationRecord {
            iter: coord.iter,
            r_p: check.r_p,
            r_d: check.r_d,
            eps_p: check.eps_p,
            eps_d: check.eps_d,
            rho,
        });
        if check.stop {
            converged = true;
        } else if cfg.adaptive.enabled {
            rho = adapt_rho(rho, check.r_p, check.r_d, &cfg.adaptive);
        }
        if dist.record_snapshots {
            snapshots.push(assemble(coord.iter, &x, &theta0, rho, &nodes));
        }
        if converged {
            break;
        }
    }

    for i in 0..m {
        coord.send(Command::Collect { node: i })?;
    }
    let finals: Vec<NodeSnapshot> = coord
        .gather(&all)?
        .into_iter()
        .filter_map(|r| match r {
            Report::Final { snapshot, .. } => Some(snapshot),
            _ => None,
        })
        .collect();
    let last = assemble(coord.iter, &x, &theta0, rho, &finals);
    Ok((
        SolveResult {
            theta0: last.theta0,
            theta: last.theta,
            z: last.z,
            x: last.x,
            lambda: last.lambda,
            mu: last.mu,
            rho,
            iterations: coord.iter,
            converged,
            history,
        },
        snapshots,
    ))
}

fn assemble(iter: usize, x: &[f64], theta0: &[f64], rho: f64, nodes: &[NodeSnapshot]) -> IterateSnapshot {
    let cat = |f: fn(&NodeSnapshot) -> &[f64]| nodes.iter().flat_map(|s| f(s).iter().copied()).collect();
    IterateSnapshot {
        iter,
        x: x.to_vec(),
        theta0: theta0.to_vec(),
        z: cat(|s| &s.z),
        theta: cat(|s| &s.theta),
        lambda: cat(|s| &s.lambda),
        mu: cat(|s| &s.mu),
        rho,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn owners_are_contiguous_and_balanced() {
        let owners: Vec<usize> = (0..15).map(|i| owner(i, 15, 4)).collect();
        assert!(owners.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(owners[0], 0);
        assert_eq!(owners[14], 3);
        for w in 0..4 {
            let c = owners.iter().filter(|&&o| o == w).count();
            assert!((3..=4).contains(&c));
        }
    }

    #[test]
    fn messages_serialize_with_kind_tag() {
        let cmd = Command::Theta0 { node: 2, theta0: vec![(0, 0.5)] };
        let s = serde_json::to_string(&cmd).unwrap();
        assert!(s.contains(r#""kind":"theta0""#));
        assert_eq!(serde_json::from_str::<Command>(&s).unwrap(), cmd);
    }
}
