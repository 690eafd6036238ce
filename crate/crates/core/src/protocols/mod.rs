//! Metasurface-controlled photonic gates and entangled-state preparation at
//! the stabilizer level.
//!
//! Qubit 0 is the metasurface (|U⟩ = |0⟩, |C⟩ = |1⟩); qubits 1..=m are
//! photons (right-propagating |0⟩, left-propagating |1⟩). Scattering a photon
//! off the metasurface is a CNOT from qubit 0: |C⟩ reflects, |U⟩ transmits.

pub mod dense;
pub mod pauli;
pub mod tableau;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use dense::StateVector;
pub use pauli::Pauli;
pub use tableau::{Sign, StabilizerTableau};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    H,
    X,
    Z,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    /// New photons scattered off the metasurface.
    Scatter { targets: Vec<usize> },
    HadamardQms,
    /// X-basis projection of the metasurface, (|U⟩ ± |C⟩)/√2.
    MeasureQms {
        #[serde(default)]
        basis: Sign,
    },
    Rotate { qubit: usize, gate: Gate },
    /// Photons that were scattered before, sent back to the metasurface.
    Rescatter { targets: Vec<usize> },
}

/// Ordered list of steps; serializes as a bare JSON list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProtocolScript {
    pub steps: Vec<Step>,
}

impl ProtocolScript {
    pub fn new(steps: Vec<Step>) -> Self {
        ProtocolScript { steps }
    }

    /// Highest photon index referenced.
    pub fn photons(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| match s {
                Step::Scatter { targets } | Step::Rescatter { targets } => targets.clone(),
                Step::Rotate { qubit, .. } => vec![*qubit],
                _ => vec![],
            })
            .max()
            .unwrap_or(0)
    }

    /// Same script with the final projection onto the given branch.
    pub fn with_outcome(mut self, outcome: Sign) -> Self {
        if let Some(Step::MeasureQms { basis }) = self.steps.last_mut() {
            *basis = outcome;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |step: usize, message: String| Err(Error::Validation { step, message });
        if self.steps.is_empty() {
            return bad(0, "script is empty".into());
        }
        let mut scattered = BTreeSet::new();
        for (i, s) in self.steps.iter().enumerate() {
            match s {
                Step::Scatter { targets } | Step::Rescatter { targets } => {
                    let mut seen = BTreeSet::new();
                    for &t in targets {
                        if t == 0 {
                            return bad(i, "the metasurface qubit cannot be a scattering target".into());
                        }
                        if t >= pauli::MAX_QUBITS {
                            return bad(i, format!("photon {t} exceeds the register limit"));
                        }
                        if !seen.insert(t) {
                            return bad(i, format!("photon {t} listed twice"));
                        }
                        let fresh = !scattered.contains(&t);
                        match (s, fresh) {
                            (Step::Scatter { .. }, false) => {
                                return bad(i, format!("photon {t} was already scattered; use rescatter"))
                            }
                            (Step::Rescatter { .. }, true) => {
                                return bad(i, format!("photon {t} has not been scattered yet"))
                            }
                            _ => {}
                        }
                    }
                    scattered.extend(targets.iter().copied());
                }
                Step::Rotate { qubit, .. } => {
                    if *qubit >= pauli::MAX_QUBITS {
                        return bad(i, format!("qubit {qubit} exceeds the register limit"));
                    }
                }
                Step::MeasureQms { .. } => {
                    if i + 1 != self.steps.len() {
                        return bad(i, "the metasurface measurement must be the final step".into());
                    }
                }
                Step::HadamardQms => {}
            }
        }
        if !matches!(self.steps.last(), Some(Step::MeasureQms { .. })) {
            return bad(self.steps.len(), "script must end by measuring the metasurface".into());
        }
        if self.photons() == 0 {
            return bad(0, "script involves no photons".into());
        }
        Ok(())
    }
}

/// CNOT from the metasurface (qubit 0) onto every target.
pub fn parallel_cnot(t: &StabilizerTableau, targets: &[usize]) -> Result<StabilizerTableau> {
    let set: BTreeSet<usize> = targets.iter().copied().collect();
    if set.contains(&0) {
        return Err(Error::invalid("control qubit 0 is in the target set"));
    }
    if set.len() != targets.len() {
        return Err(Error::invalid("duplicate targets"));
    }
    let mut out = t.clone();
    for &j in targets {
        out.cnot(0, j)?;
    }
    Ok(out)
}

/// |0⟩⟨0|_a ⊗ ∏ X + |1⟩⟨1|_a ⊗ 𝟙 from an ancilla onto a register.
pub fn ancilla_conditioned_flip(t: &StabilizerTableau, ancilla: usize, register: &[usize]) -> Result<StabilizerTableau> {
    if register.contains(&ancilla) {
        return Err(Error::invalid("ancilla is part of the register"));
    }
    let mut out = t.clone();
    out.x(ancilla)?;
    for &r in register {
        out.cnot(ancilla, r)?;
    }
    out.x(ancilla)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub outcome: Sign,
    /// The outcome was fixed by the state before the measurement.
    pub deterministic: bool,
    /// Photon reflections off |C⟩; each carries r = −1, i.e. a Z on the
    /// metasurface qubit.
    pub reflections: usize,
    /// Parity of those Z factors: when set, the physical branch labels are
    /// swapped relative to the sign-free CNOT model.
    pub metasurface_z_frame: bool,
    /// Local gates applied to the photonic register after the run.
    pub local_frame: Vec<(usize, Gate)>,
}

#[derive(Clone, Debug)]
pub struct ProtocolRun {
    /// Metasurface plus photons after the projection.
    pub full: StabilizerTableau,
    /// Photons only; photon k is qubit k − 1.
    pub photonic: StabilizerTableau,
    pub record: MeasurementRecord,
}

pub fn run_protocol(script: &ProtocolScript) -> Result<ProtocolRun> {
    script.validate()?;
    let n = script.photons() + 1;
    let mut t = StabilizerTableau::zero_state(n)?;
    let mut reflections = 0;
    let mut measured = None;
    for (i, s) in script.steps.iter().enumerate() {
        match s {
            Step::Scatter { targets } | Step::Rescatter { targets } => {
                t = parallel_cnot(&t, targets)?;
                reflections += targets.len();
            }
            Step::HadamardQms => t.h(0)?,
            Step::Rotate { qubit, gate } => apply_gate(&mut t, *qubit, *gate)?,
            Step::MeasureQms { basis } => {
                let det = t.measure_x(0, *basis).map_err(|e| Error::Validation { step: i, message: e.to_string() })?;
                measured = Some((*basis, det));
            }
        }
        t.check().map_err(|e| Error::numerical(format!("tableau invalid after step {i}: {e}")))?;
    }
    let (outcome, deterministic) = measured.expect("validated scripts end with a measurement");
    let photonic = t.remove_measured_x(0)?;
    Ok(ProtocolRun {
        full: t,
        photonic,
        record: MeasurementRecord {
            outcome,
            deterministic,
            reflections,
            metasurface_z_frame: reflections % 2 == 1,
            local_frame: vec![],
        },
    })
}

fn apply_gate(t: &mut StabilizerTableau, q: usize, g: Gate) -> Result<()> {
    match g {
        Gate::H => t.h(q),
        Gate::X => t.x(q),
        Gate::Z => t.z(q),
    }
}

/// The same script on a state vector; returns the post-measurement state of
/// metasurface and photons.
pub fn run_protocol_dense(script: &ProtocolScript) -> Result<StateVector> {
    script.validate()?;
    let mut s = StateVector::zero_state(script.photons() + 1)?;
    for (i, step) in script.steps.iter().enumerate() {
        match step {
            Step::Scatter { targets } | Step::Rescatter { targets } => targets.iter().for_each(|&j| s.cnot(0, j)),
            Step::HadamardQms => s.h(0),
            Step::Rotate { qubit, gate } => match gate {
                Gate::H => s.h(*qubit),
                Gate::X => s.x(*qubit),
                Gate::Z => s.z(*qubit),
            },
            Step::MeasureQms { basis } => s
                .project_x(0, *basis)
                .map_err(|e| Error::Validation { step: i, message: e.to_string() })?,
        }
    }
    Ok(s)
}

/// Undirected simple graph on vertices 0..n.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(a, b) in &edges {
            if a >= n || b >= n || a == b {
                return Err(Error::invalid(format!("bad edge ({a}, {b}) on {n} vertices")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::invalid(format!("repeated edge ({a}, {b})")));
            }
        }
        Ok(Graph { n, edges })
    }

    pub fn empty(n: usize) -> Self {
        Graph { n, edges: vec![] }
    }

    pub fn path(n: usize) -> Self {
        Graph { n, edges: (1..n).map(|i| (i - 1, i)).collect() }
    }

    pub fn complete(n: usize) -> Self {
        Graph { n, edges: (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect() }
    }

    /// Tree in which every internal vertex has degree `branching`: the root
    /// has `branching` children, the first child of each internal vertex
    /// continues the spine and the others are leaves, `depth` levels deep.
    pub fn tree(branching: usize, depth: usize) -> Result<Self> {
        if branching < 2 || depth == 0 {
            return Err(Error::invalid("tree needs branching ≥ 2 and depth ≥ 1"));
        }
        let mut edges = vec![];
        let (mut hub, mut next) = (0, 1);
        for level in 0..depth {
            let children = if level == 0 { branching } else { branching - 1 };
            for c in next..next + children {
                edges.push((hub, c));
            }
            hub = next;
            next += children;
        }
        Graph::new(next, edges)
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None })
            .collect();
        out.sort_unstable();
        out
    }

    /// K_v = X_v ∏_{w∈N(v)} Z_w.
    pub fn stabilizers(&self) -> Vec<Pauli> {
        (0..self.n)
            .map(|v| self.neighbors(v).into_iter().fold(Pauli::x(v), |p, w| p * Pauli::z(w)))
            .collect()
    }
}

/// X^⊗m and Z_i Z_{i+1}.
pub fn ghz_stabilizers(m: usize) -> Vec<Pauli> {
    let mut out = vec![(0..m).fold(Pauli::IDENTITY, |p, q| p * Pauli::x(q))];
    out.extend((1..m).map(|i| Pauli::z(i - 1) * Pauli::z(i)));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphCheck {
    pub ok: bool,
    /// Vertices whose K_v is not a +1 stabilizer.
    pub violations: Vec<usize>,
}

pub fn verify_graph_state(t: &StabilizerTableau, g: &Graph) -> GraphCheck {
    let violations: Vec<usize> = if t.n() != g.n {
        (0..g.n).collect()
    } else {
        g.stabilizers()
            .iter()
            .enumerate()
            .filter(|(_, k)| t.expectation(k) != Some(1))
            .map(|(v, _)| v)
            .collect()
    };
    GraphCheck { ok: violations.is_empty(), violations }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizerCheck {
    pub passed: usize,
    pub total: usize,
    pub failed: Vec<String>,
}

impl StabilizerCheck {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

/// Which of the `expected` operators are stabilizers of `t` with their sign.
pub fn verify_stabilizers(t: &StabilizerTableau, expected: &[Pauli]) -> StabilizerCheck {
    let failed: Vec<String> = expected
        .iter()
        .filter(|p| t.expectation(p) != Some(1))
        .map(|p| p.to_string_n(t.n()))
        .collect();
    StabilizerCheck { passed: expected.len() - failed.len(), total: expected.len(), failed }
}

/// What a preset is expected to produce on the photons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Target {
    Ghz { m: usize },
    Graph { graph: Graph },
}

impl Target {
    pub fn photonic_stabilizers(&self) -> Vec<Pauli> {
        match self {
            Target::Ghz { m } => ghz_stabilizers(*m),
            Target::Graph { graph } => graph.stabilizers(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub script: ProtocolScript,
    pub target: Target,
    pub local_frame: Vec<(usize, Gate)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetReport {
    pub name: String,
    pub record: MeasurementRecord,
    /// Full post-measurement state: metasurface generator plus the target.
    pub stabilizers: StabilizerCheck,
    pub photonic_generators: Vec<String>,
}

impl Preset {
    /// Runs the script, applies the local frame and checks the target.
    pub fn run(&self) -> Result<(ProtocolRun, PresetReport)> {
        let mut run = run_protocol(&self.script)?;
        for &(q, g) in &self.local_frame {
            apply_gate(&mut run.photonic, q, g)?;
            apply_gate(&mut run.full, q + 1, g)?;
        }
        run.record.local_frame = self.local_frame.clone();
        let anc = match run.record.outcome {
            Sign::Plus => Pauli::x(0),
            Sign::Minus => Pauli::x(0).negate(),
        };
        let mut expected = vec![anc];
        expected.extend(self.target.photonic_stabilizers().iter().map(|p| Pauli { x: p.x << 1, z: p.z << 1, phase: p.phase }));
        let report = PresetReport {
            name: self.name.clone(),
            record: run.record.clone(),
            stabilizers: verify_stabilizers(&run.full, &expected),
            photonic_generators: run.photonic.to_strings(),
        };
        Ok((run, report))
    }
}

fn check_count(what: &str, m: usize) -> Result<()> {
    if m == 0 || m >= pauli::MAX_QUBITS {
        return Err(Error::invalid(format!("{what} needs 1..={} photons", pauli::MAX_QUBITS - 1)));
    }
    Ok(())
}

/// H on the metasurface, all m photons scattered at once, X projection.
pub fn ghz(m: usize) -> Result<Preset> {
    check_count("ghz", m)?;
    let script = ProtocolScript::new(vec![
        Step::HadamardQms,
        Step::Scatter { targets: (1..=m).collect() },
        Step::MeasureQms { basis: Sign::Plus },
    ]);
    Ok(Preset { name: format!("ghz({m})"), script, target: Target::Ghz { m }, local_frame: vec![] })
}

/// Photons scattered one at a time with a metasurface Hadamard between
/// consecutive scatters; yields the path-graph state directly.
pub fn cluster1d(m: usize) -> Result<Preset> {
    check_count("cluster1d", m)?;
    let mut steps = vec![Step::HadamardQms];
    for k in 1..=m {
        steps.push(Step::Scatter { targets: vec![k] });
        if k < m {
            steps.push(Step::HadamardQms);
        }
    }
    steps.push(Step::MeasureQms { basis: Sign::Plus });
    Ok(Preset {
        name: format!("cluster1d({m})"),
        script: ProtocolScript::new(steps),
        target: Target::Graph { graph: Graph::path(m) },
        local_frame: vec![],
    })
}

/// Builds [`Graph::tree`] hub by hub: the hub and its leaf children are
/// scattered together, the leaves are rotated by H, and a metasurface
/// Hadamard hands over to the next hub.
pub fn tree(branching: usize, depth: usize) -> Result<Preset> {
    let graph = Graph::tree(branching, depth)?;
    check_count("tree", graph.n)?;
    let mut steps = vec![Step::HadamardQms];
    let (mut hub, mut next) = (1usize, 2usize);
    for level in 0..depth {
        let children = if level == 0 { branching } else { branching - 1 };
        let last = level + 1 == depth;
        let leaves: Vec<usize> = (next..next + children).filter(|&c| last || c != next).collect();
        let mut targets = vec![hub];
        targets.extend(&leaves);
        steps.push(Step::Scatter { targets });
        steps.extend(leaves.iter().map(|&q| Step::Rotate { qubit: q, gate: Gate::H }));
        if !last {
            steps.push(Step::HadamardQms);
        }
        hub = next;
        next += children;
    }
    steps.push(Step::MeasureQms { basis: Sign::Plus });
    let name = if (branching, depth) == (6, 2) { "tree-fig2b".to_string() } else { format!("tree({branching},{depth})") };
    Ok(Preset { name, script: ProtocolScript::new(steps), target: Target::Graph { graph }, local_frame: vec![] })
}

/// Root photon with six children, the second photon carrying five more.
pub fn tree_fig2b() -> Preset {
    tree(6, 2).expect("fixed parameters are valid")
}

/// Staged sequence: one photon, six photons, the second photon sent back,
/// five photons, each stage separated by a metasurface Hadamard. It does not
/// produce the (6, 2) tree; kept for comparison.
pub fn tree_staged_sequence() -> ProtocolScript {
    ProtocolScript::new(vec![
        Step::HadamardQms,
        Step::Scatter { targets: vec![1] },
        Step::HadamardQms,
        Step::Scatter { targets: (2..=7).collect() },
        Step::HadamardQms,
        Step::Rescatter { targets: vec![2] },
        Step::HadamardQms,
        Step::Scatter { targets: (8..=12).collect() },
        Step::MeasureQms { basis: Sign::Plus },
    ])
}

/// Parses "ghz(6)", "ghz:6", "cluster1d(8)", "tree-fig2b" or "tree(3,3)".
pub fn preset(name: &str) -> Result<Preset> {
    let name = name.trim();
    if name == "tree-fig2b" {
        return Ok(tree_fig2b());
    }
    let (head, args) = match name.find(['(', ':']) {
        Some(i) => (&name[..i], name[i + 1..].trim_end_matches(')')),
        None => (name, ""),
    };
    let nums: Vec<usize> = args
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<usize>().map_err(|_| Error::invalid(format!("bad preset argument {s:?}"))))
        .collect::<Result<_>>()?;
    match (head, nums.as_slice()) {
        ("ghz", [m]) => ghz(*m),
        ("cluster1d", [m]) => cluster1d(*m),
        ("tree", [b, d]) => tree(*b, *d),
        _ => Err(Error::invalid(format!("unknown preset {name:?}"))),
    }
}
