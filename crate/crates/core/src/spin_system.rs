//! Molecule model: offsets, scalar couplings, relaxation times and the
//! internal Hamiltonian.
//!
//! Offsets are stored in Hz relative to each spin's own transmitter carrier.
//! The weak-coupling Hamiltonian is
//!
//! ```text
//! H = Σ_s −2π ν_s Iz_s + Σ_{i<j} 2π J_ij Iz_i Iz_j      (rad/s)
//! ```
//!
//! With the lowering-operator receiver used by [`crate::readout`] a spin at
//! offset ν shows its line at `+ν`, and a neighbour in `|0⟩` shifts it by
//! `−J/2` (a neighbour in `|1⟩` by `+J/2`).

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{self, bit_of, c, dim, Axis, CMatrix, MAX_SPINS};

/// Coupling regime of the internal Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HamiltonianModel {
    /// Only `Iz·Iz` coupling terms (first-order spectra).
    #[default]
    Weak,
    /// Full isotropic `I·S` coupling.
    Strong,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    labels: Vec<String>,
    offsets_hz: Vec<f64>,
    channels: Vec<usize>,
    couplings_hz: Vec<Vec<f64>>,
    t1_s: Vec<Option<f64>>,
    t2_s: Vec<Option<f64>>,
    weights: Vec<f64>,
}

/// One line of a first-order multiplet.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipletLine {
    pub frequency_hz: f64,
    /// `(spin, bit)` of every other spin, ascending by spin index.
    pub neighbors: Vec<(usize, u8)>,
}

impl MultipletLine {
    /// Neighbour bits as a string, e.g. `"01"`; empty for an isolated spin.
    pub fn label(&self) -> String {
        self.neighbors.iter().map(|&(_, b)| if b == 0 { '0' } else { '1' }).collect()
    }
}

impl SpinSystem {
    /// Uncoupled system with one transmitter channel per spin and no relaxation.
    pub fn new(offsets_hz: Vec<f64>) -> Result<Self> {
        let n = offsets_hz.len();
        if n == 0 {
            return Err(Error::InvalidSystem("at least one spin is required".into()));
        }
        if n > MAX_SPINS {
            return Err(Error::InvalidSystem(format!("{n} spins exceeds the cap of {MAX_SPINS}")));
        }
        if offsets_hz.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidSystem("offsets must be finite".into()));
        }
        Ok(Self {
            labels: (0..n).map(|i| format!("s{i}")).collect(),
            offsets_hz,
            channels: (0..n).collect(),
            couplings_hz: vec![vec![0.0; n]; n],
            t1_s: vec![None; n],
            t2_s: vec![None; n],
            weights: vec![1.0; n],
        })
    }

    pub fn with_coupling(mut self, i: usize, j: usize, hz: f64) -> Result<Self> {
        self.check_spin(i)?;
        self.check_spin(j)?;
        if i == j {
            return Err(Error::InvalidSystem(format!("self-coupling on spin {i}")));
        }
        if !hz.is_finite() {
            return Err(Error::InvalidSystem("couplings must be finite".into()));
        }
        self.couplings_hz[i][j] = hz;
        self.couplings_hz[j][i] = hz;
        Ok(self)
    }

    pub fn with_relaxation(mut self, spin: usize, t1_s: f64, t2_s: f64) -> Result<Self> {
        self.check_spin(spin)?;
        validate_relaxation(spin, Some(t1_s), Some(t2_s))?;
        self.t1_s[spin] = Some(t1_s);
        self.t2_s[spin] = Some(t2_s);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        self.check_len(labels.len())?;
        self.labels = labels;
        Ok(self)
    }

    pub fn with_channels(mut self, channels: Vec<usize>) -> Result<Self> {
        self.check_len(channels.len())?;
        self.channels = channels;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.check_len(weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidSystem("weights must be finite".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: len });
        }
        Ok(())
    }

    pub fn check_spin(&self, spin: usize) -> Result<()> {
        if spin >= self.n() {
            return Err(Error::IndexOutOfRange { index: spin, len: self.n() });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.offsets_hz.len()
    }

    pub fn dim(&self) -> usize {
        dim(self.n())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn offset_hz(&self, spin: usize) -> f64 {
        self.offsets_hz[spin]
    }

    pub fn offsets_hz(&self) -> &[f64] {
        &self.offsets_hz
    }

    pub fn channel_of(&self, spin: usize) -> usize {
        self.channels[spin]
    }

    pub fn coupling_hz(&self, i: usize, j: usize) -> f64 {
        self.couplings_hz[i][j]
    }

    pub fn t1(&self, spin: usize) -> Option<f64> {
        self.t1_s[spin]
    }

    pub fn t2(&self, spin: usize) -> Option<f64> {
        self.t2_s[spin]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every spin carries both relaxation times.
    pub fn has_relaxation(&self) -> bool {
        self.t1_s.iter().all(Option::is_some) && self.t2_s.iter().all(Option::is_some)
    }

    /// Edges `(i, j)`, `i < j`, with nonzero coupling.
    pub fn coupling_graph(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.couplings_hz[i][j] != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn neighbors(&self, spin: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| j != spin && self.couplings_hz[spin][j] != 0.0).collect()
    }

    /// Shortest coupling-graph path from `from` to `to`; ties go to the
    /// lexicographically smallest sequence of spin indices.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let n = self.n();
        if from >= n || to >= n {
            return None;
        }
        // BFS from the destination gives distances; then walk greedily from
        // the source through the lowest-index neighbour that decreases distance.
        let mut distance = vec![usize::MAX; n];
        distance[to] = 0;
        let mut queue = VecDeque::from([to]);
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if distance[w] == usize::MAX {
                    distance[w] = distance[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        if distance[from] == usize::MAX {
            return None;
        }
        let mut path = vec![from];
        let mut current = from;
        while current != to {
            current = self
                .neighbors(current)
                .into_iter()
                .find(|&w| distance[w] + 1 == distance[current])
                .expect("distance labels are consistent");
            path.push(current);
        }
        Some(path)
    }

    /// Eigenvalues of the weak-coupling Hamiltonian in the Zeeman basis (rad/s).
    pub fn zeeman_energies(&self) -> Vec<f64> {
        let n = self.n();
        let m = |idx: usize, s: usize| if bit_of(idx, s, n) == 0 { 0.5 } else { -0.5 };
        (0..self.dim())
            .map(|idx| {
                let mut e = 0.0;
                for s in 0..n {
                    e -= 2.0 * PI * self.offsets_hz[s] * m(idx, s);
                }
                for i in 0..n {
                    for j in i + 1..n {
                        let jij = self.couplings_hz[i][j];
                        if jij != 0.0 {
                            e += 2.0 * PI * jij * m(idx, i) * m(idx, j);
                        }
                    }
                }
                e
            })
            .collect()
    }

    /// Internal Hamiltonian in angular-frequency units.
    pub fn internal_hamiltonian(&self, model: HamiltonianModel) -> CMatrix {
        let d = self.dim();
        let mut h = CMatrix::zeros(d, d);
        for (i, e) in self.zeeman_energies().into_iter().enumerate() {
            h[(i, i)] = c(e);
        }
        if model == HamiltonianModel::Strong {
            let n = self.n();
            for i in 0..n {
                for j in i + 1..n {
                    let jij = self.couplings_hz[i][j];
                    if jij == 0.0 {
                        continue;
                    }
                    for axis in [Axis::X, Axis::Y] {
                        let term = linalg::spin_axis(n, i, axis) * linalg::spin_axis(n, j, axis);
                        h += term * c(2.0 * PI * jij);
                    }
                }
            }
        }
        h
    }

    /// First-order multiplet of `spin`: `2^(n-1)` lines labelled by neighbour bits.
    pub fn multiplet_lines(&self, spin: usize) -> Result<Vec<MultipletLine>> {
        self.check_spin(spin)?;
        let others: Vec<usize> = (0..self.n()).filter(|&s| s != spin).collect();
        let k = others.len();
        let lines = (0..dim(k))
            .map(|config| {
                let mut f = self.offsets_hz[spin];
                let mut neighbors = Vec::with_capacity(k);
                for (q, &o) in others.iter().enumerate() {
                    let bit = ((config >> (k - 1 - q)) & 1) as u8;
                    let m = if bit == 0 { 0.5 } else { -0.5 };
                    f -= m * self.couplings_hz[spin][o];
                    neighbors.push((o, bit));
                }
                MultipletLine { frequency_hz: f, neighbors }
            })
            .collect();
        Ok(lines)
    }

    /// Relabels spins: new spin `k` is old spin `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let unique: BTreeSet<_> = perm.iter().copied().collect();
        if perm.len() != n || unique.len() != n || perm.iter().any(|&p| p >= n) {
            return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        let pick = |v: &Vec<f64>| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        Ok(Self {
            labels: perm.iter().map(|&p| self.labels[p].clone()).collect(),
            offsets_hz: pick(&self.offsets_hz),
            channels: perm.iter().map(|&p| self.channels[p]).collect(),
            couplings_hz: perm.iter().map(|&a| perm.iter().map(|&b| self.couplings_hz[a][b]).collect()).collect(),
            t1_s: perm.iter().map(|&p| self.t1_s[p]).collect(),
            t2_s: perm.iter().map(|&p| self.t2_s[p]).collect(),
            weights: pick(&self.weights),
        })
    }

    /// Parses a molecule config (TOML).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: MoleculeConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    /// Serializes back to the TOML config schema.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for s in 0..self.n() {
            out.push_str("[[spins]]\n");
            out.push_str(&format!("label = {:?}\n", self.labels[s]));
            out.push_str(&format!("offset_hz = {:?}\n", self.offsets_hz[s]));
            out.push_str(&format!("channel = {}\n", self.channels[s]));
            if let Some(t1) = self.t1_s[s] {
                out.push_str(&format!("t1_s = {t1:?}\n"));
            }
            if let Some(t2) = self.t2_s[s] {
                out.push_str(&format!("t2_s = {t2:?}\n"));
            }
            out.push_str(&format!("weight = {:?}\n\n", self.weights[s]));
        }
        for (i, j) in self.coupling_graph() {
            out.push_str(&format!("[[j_hz]]\ni = {i}\nj = {j}\nvalue = {:?}\n\n", self.couplings_hz[i][j]));
        }
        out
    }
}

fn validate_relaxation(spin: usize, t1: Option<f64>, t2: Option<f64>) -> Result<()> {
    for t in [t1, t2].into_iter().flatten() {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidSystem(format!("spin {spin}: relaxation times must be positive")));
        }
    }
    if let (Some(t1), Some(t2)) = (t1, t2) {
        if t2 > 2.0 * t1 {
            return Err(Error::InvalidSystem(format!("spin {spin}: T2 = {t2} s exceeds 2·T1 = {} s", 2.0 * t1)));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MoleculeConfig {
    spins: Vec<SpinEntry>,
    #[serde(default)]
    j_hz: Vec<CouplingEntry>,
    #[serde(default)]
    j_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpinEntry {
    label: Option<String>,
    offset_hz: f64,
    channel: Option<usize>,
    t1_s: Option<f64>,
    t2_s: Option<f64>,
    weight: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingEntry {
    i: usize,
    j: usize,
    value: f64,
}

impl MoleculeConfig {
    fn build(self) -> Result<SpinSystem> {
        let n = self.spins.len();
        let mut sys = SpinSystem::new(self.spins.iter().map(|s| s.offset_hz).collect())?;
        for (k, s) in self.spins.iter().enumerate() {
            if let Some(label) = &s.label {
                sys.labels[k] = label.clone();
            }
            if let Some(ch) = s.channel {
                sys.channels[k] = ch;
            }
            if let Some(w) = s.weight {
                sys.weights[k] = w;
            }
            validate_relaxation(k, s.t1_s, s.t2_s)?;
            sys.t1_s[k] = s.t1_s;
            sys.t2_s[k] = s.t2_s;
        }

        // Collect raw (possibly one-sided) entries, then mirror.
        let mut raw = vec![vec![None::<f64>; n]; n];
        let set = |i: usize, j: usize, v: f64, raw: &mut Vec<Vec<Option<f64>>>| -> Result<()> {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { index: i.max(j), len: n });
            }
            if i == j {
                if v != 0.0 {
                    return Err(Error::InvalidSystem(format!("nonzero self-coupling on spin {i}")));
                }
                return Ok(());
            }
            if let Some(prev) = raw[i][j] {
                if prev != v {
                    return Err(Error::AsymmetricCoupling { i, j, forward: prev, backward: v });
                }
            }
            raw[i][j] = Some(v);
            Ok(())
        };
        if let Some(matrix) = &self.j_matrix {
            if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
                return Err(Error::Config(format!("j_matrix must be {n}×{n}")));
            }
            for (i, row) in matrix.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if v != 0.0 || i == j {
                        set(i, j, v, &mut raw)?;
                    }
                }
            }
        }
        for entry in &self.j_hz {
            set(entry.i, entry.j, entry.value, &mut raw)?;
        }
        for i in 0..n {
            for j in i + 1..n {
                let value = match (raw[i][j], raw[j][i]) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(Error::AsymmetricCoupling { i, j, forward: a, backward: b })
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => 0.0,
                };
                if value != 0.0 {
                    sys = sys.with_coupling(i, j, value)?;
                }
            }
        }
        Ok(sys)
    }
}
