//! DC susceptance model and power transfer distribution factors.
//!
//! Each island is handled independently: its weighted Laplacian is built
//! from line susceptances (1/x), the slack row and column are removed, and
//! the reduced matrix is factorized once. One solve per bus yields the
//! column of factors for an injection at that bus withdrawn at the slack.
//!
//! Storage is dense (lines × buses per island), i.e. `8 · L · N` bytes; a
//! 10k-bus, 13k-line island needs roughly 1 GB.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::factor::SkylineCholesky;
use crate::grid::{islands, GridCase};

/// Pivots smaller than this fraction of the largest diagonal abort the build.
pub const REL_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PtdfError {
    #[error("island {island} is not connected by its lines")]
    SingularIsland { island: usize },
    #[error("island {island} has {found} slack buses, expected exactly one")]
    SlackCount { island: usize, found: usize },
    #[error("reduced susceptance matrix is numerically singular near bus {bus} (pivot {pivot:e})")]
    NumericallySingular { bus: String, pivot: f64 },
    #[error("unknown bus {0}")]
    UnknownBus(String),
    #[error("injections in island {island} are imbalanced by {imbalance} MW")]
    ImbalancedInjection { island: usize, imbalance: f64 },
    #[error("expected {expected} injections, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub line: usize,
    /// local bus positions
    pub from: usize,
    pub to: usize,
    pub susceptance: f64,
}

#[derive(Debug, Clone)]
pub struct SusceptanceModel {
    pub island: usize,
    /// Global bus indices; local position `k` refers to `buses[k]`.
    pub buses: Vec<usize>,
    pub branches: Vec<Branch>,
    /// Local position of the slack bus.
    pub slack: usize,
    pub slack_id: String,
    pub bus_ids: Vec<String>,
    /// Weighted Laplacian (buses × buses).
    pub node_admittance: Vec<Vec<f64>>,
}

impl SusceptanceModel {
    /// Signed lines × buses incidence (+1 at the from end, −1 at the to end).
    pub fn incidence(&self) -> Vec<Vec<f64>> {
        let n = self.buses.len();
        self.branches
            .iter()
            .map(|br| {
                let mut row = vec![0.0; n];
                row[br.from] += 1.0;
                row[br.to] -= 1.0;
                row
            })
            .collect()
    }

    fn reduced_index(&self, local: usize) -> Option<usize> {
        match local.cmp(&self.slack) {
            std::cmp::Ordering::Less => Some(local),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(local - 1),
        }
    }

    fn reduced_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for br in &self.branches {
            let (f, to) = (self.reduced_index(br.from), self.reduced_index(br.to));
            if let Some(f) = f {
                t.push((f, f, br.susceptance));
            }
            if let Some(to) = to {
                t.push((to, to, br.susceptance));
            }
            if let (Some(f), Some(to)) = (f, to) {
                t.push((f.max(to), f.min(to), -br.susceptance));
            }
        }
        t
    }
}

/// Builds the weighted Laplacian of the given bus set.
///
/// Only lines with both endpoints inside the set take part; the set must be
/// connected through them and contain exactly one configured slack bus.
pub fn build_susceptance(
    case: &GridCase,
    island: usize,
    buses: &[usize],
) -> Result<SusceptanceModel, PtdfError> {
    let n = buses.len();
    let mut local = vec![usize::MAX; case.buses.len()];
    for (k, &b) in buses.iter().enumerate() {
        local[b] = k;
    }
    let index = case.bus_index();

    let mut branches = Vec::new();
    for (li, line) in case.lines.iter().enumerate() {
        let f = *index
            .get(line.from_bus.as_str())
            .ok_or_else(|| PtdfError::UnknownBus(line.from_bus.clone()))?;
        let t = *index
            .get(line.to_bus.as_str())
            .ok_or_else(|| PtdfError::UnknownBus(line.to_bus.clone()))?;
        if local[f] != usize::MAX && local[t] != usize::MAX {
            branches.push(Branch {
                line: li,
                from: local[f],
                to: local[t],
                susceptance: 1.0 / line.reactance_pu,
            });
        }
    }

    // connectivity through the retained branches
    let mut adj = vec![Vec::new(); n];
    for br in &branches {
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    if n > 0 {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        if count != n {
            return Err(PtdfError::SingularIsland { island });
        }
    }

    let slacks: Vec<usize> = (0..n)
        .filter(|&k| case.slack_buses.iter().any(|s| *s == case.buses[buses[k]].id))
        .collect();
    if slacks.len() != 1 {
        return Err(PtdfError::SlackCount {
            island,
            found: slacks.len(),
        });
    }
    let slack = slacks[0];

    let mut lap = vec![vec![0.0; n]; n];
    for br in &branches {
        lap[br.from][br.to] -= br.susceptance;
        lap[br.to][br.from] -= br.susceptance;
        lap[br.from][br.from] += br.susceptance;
        lap[br.to][br.to] += br.susceptance;
    }

    Ok(SusceptanceModel {
        island,
        buses: buses.to_vec(),
        branches,
        slack,
        slack_id: case.buses[buses[slack]].id.clone(),
        bus_ids: buses.iter().map(|&b| case.buses[b].id.clone()).collect(),
        node_admittance: lap,
    })
}

/// Factors of one island: `values[r][c]` is the MW change on line
/// `lines[r]` per MW injected at bus `buses[c]` and withdrawn at the slack.
#[derive(Debug, Clone, Serialize)]
pub struct PtdfMatrix {
    pub island: usize,
    pub slack_bus: String,
    pub buses: Vec<usize>,
    pub lines: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

fn factor_model(model: &SusceptanceModel) -> Result<SkylineCholesky, PtdfError> {
    let n = model.buses.len();
    SkylineCholesky::factor(n.saturating_sub(1), &model.reduced_triplets(), REL_PIVOT_TOL).map_err(
        |e| {
            let local = if e.row >= model.slack { e.row + 1 } else { e.row };
            PtdfError::NumericallySingular {
                bus: model.bus_ids[local].clone(),
                pivot: e.pivot,
            }
        },
    )
}

pub fn compute_ptdf(model: &SusceptanceModel) -> Result<PtdfMatrix, PtdfError> {
    let n = model.buses.len();
    let chol = factor_model(model)?;
    let mut values = vec![vec![0.0; n]; model.branches.len()];
    let mut theta = vec![0.0; n];
    for col in 0..n {
        let Some(r) = model.reduced_index(col) else {
            continue;
        };
        let mut rhs = vec![0.0; n - 1];
        rhs[r] = 1.0;
        chol.solve_in_place(&mut rhs);
        for k in 0..n {
            theta[k] = model.reduced_index(k).map_or(0.0, |rk| rhs[rk]);
        }
        for (row, br) in model.branches.iter().enumerate() {
            values[row][col] = (theta[br.from] - theta[br.to]) * br.susceptance;
        }
    }
    Ok(PtdfMatrix {
        island: model.island,
        slack_bus: model.slack_id.clone(),
        buses: model.buses.clone(),
        lines: model.branches.iter().map(|b| b.line).collect(),
        values,
    })
}

/// Factors for every island of a case, addressable by global line/bus index.
/// Pairs in different islands have a zero factor.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkPtdf {
    pub matrices: Vec<PtdfMatrix>,
    /// (island, row) per global line
    line_loc: Vec<(usize, usize)>,
    /// (island, column) per global bus
    bus_loc: Vec<(usize, usize)>,
}

impl NetworkPtdf {
    pub fn build(case: &GridCase) -> Result<Self, PtdfError> {
        let mut matrices = Vec::new();
        for (k, island) in islands(case).iter().enumerate() {
            let model = build_susceptance(case, k, island)?;
            let m = compute_ptdf(&model)?;
            matrices.push(m);
        }
        let mut line_loc = vec![(usize::MAX, 0); case.lines.len()];
        let mut bus_loc = vec![(usize::MAX, 0); case.buses.len()];
        for (k, m) in matrices.iter().enumerate() {
            for (r, &l) in m.lines.iter().enumerate() {
                line_loc[l] = (k, r);
            }
            for (c, &b) in m.buses.iter().enumerate() {
                bus_loc[b] = (k, c);
            }
        }
        Ok(NetworkPtdf {
            matrices,
            line_loc,
            bus_loc,
        })
    }

    pub fn num_lines(&self) -> usize {
        self.line_loc.len()
    }

    pub fn num_buses(&self) -> usize {
        self.bus_loc.len()
    }

    pub fn island_of_line(&self, line: usize) -> usize {
        self.line_loc[line].0
    }

    pub fn island_of_bus(&self, bus: usize) -> usize {
        self.bus_loc[bus].0
    }

    pub fn slack_buses(&self) -> Vec<String> {
        self.matrices.iter().map(|m| m.slack_bus.clone()).collect()
    }

    pub fn factor(&self, line: usize, bus: usize) -> f64 {
        let (li, row) = self.line_loc[line];
        let (bi, col) = self.bus_loc[bus];
        if li == bi {
            self.matrices[li].values[row][col]
        } else {
            0.0
        }
    }

    /// Column of factors for an injection at `bus`, over all lines.
    pub fn bus_column(&self, bus: usize) -> Vec<f64> {
        (0..self.num_lines()).map(|l| self.factor(l, bus)).collect()
    }

    /// Line flows for a per-bus injection vector (slack absorbs any imbalance).
    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        (0..self.num_lines())
            .map(|l| {
                let (k, row) = self.line_loc[l];
                let m = &self.matrices[k];
                m.values[row]
                    .iter()
                    .zip(&m.buses)
                    .map(|(f, &b)| f * injections[b])
                    .sum()
            })
            .collect()
    }
}

/// Per-entity factor vectors (one entry per line) for generators, loads and
/// charging stations; each equals the column of its hosting bus.
#[derive(Debug, Clone)]
pub struct EntityColumns {
    pub generators: Vec<Vec<f64>>,
    pub loads: Vec<Vec<f64>>,
    pub stations: Vec<Vec<f64>>,
}

pub fn entity_columns(
    ptdf: &NetworkPtdf,
    case: &GridCase,
    station_buses: &[usize],
) -> Result<EntityColumns, PtdfError> {
    let index = case.bus_index();
    let column = |id: &str| {
        index
            .get(id)
            .map(|&b| ptdf.bus_column(b))
            .ok_or_else(|| PtdfError::UnknownBus(id.to_string()))
    };
    let generators = case
        .generators
        .iter()
        .map(|g| column(&g.bus))
        .collect::<Result<_, _>>()?;
    let loads = case
        .loads
        .iter()
        .map(|d| column(&d.bus))
        .collect::<Result<_, _>>()?;
    let stations = station_buses
        .iter()
        .map(|&b| {
            if b < ptdf.num_buses() {
                Ok(ptdf.bus_column(b))
            } else {
                Err(PtdfError::UnknownBus(format!("#{b}")))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(EntityColumns {
        generators,
        loads,
        stations,
    })
}

/// Line flows from a direct angle solve `B_r θ = P_r`, independent of the
/// factor tables. Injections are per bus in MW and must balance per island.
pub fn dc_flows_direct(case: &GridCase, injections: &[f64]) -> Result<Vec<f64>, PtdfError> {
    if injections.len() != case.buses.len() {
        return Err(PtdfError::LengthMismatch {
            expected: case.buses.len(),
            got: injections.len(),
        });
    }
    let mut flows = vec![0.0; case.lines.len()];
    for (k, island) in islands(case).iter().enumerate() {
        let model = build_susceptance(case, k, island)?;
        let sum: f64 = island.iter().map(|&b| injections[b]).sum();
        let withdrawal: f64 = island.iter().map(|&b| (-injections[b]).max(0.0)).sum();
        if sum.abs() > 1e-6 * withdrawal.max(1.0) {
            return Err(PtdfError::ImbalancedInjection {
                island: k,
                imbalance: sum,
            });
        }
        let n = island.len();
        if n < 2 {
            continue;
        }
        // dense reduced system, Gaussian elimination with partial pivoting
        let keep: Vec<usize> = (0..n).filter(|&i| i != model.slack).collect();
        let m = keep.len();
        let mut a: Vec<Vec<f64>> = keep
            .iter()
            .map(|&i| keep.iter().map(|&j| model.node_admittance[i][j]).collect())
            .collect();
        let mut rhs: Vec<f64> = keep.iter().map(|&i| injections[island[i]]).collect();
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
                .unwrap();
            if a[p][c].abs() < 1e-14 {
                return Err(PtdfError::NumericallySingular {
                    bus: case.buses[island[keep[c]]].id.clone(),
                    pivot: a[p][c],
                });
            }
            a.swap(c, p);
            rhs.swap(c, p);
            for r in c + 1..m {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    for j in c..m {
                        a[r][j] -= f * a[c][j];
                    }
                    rhs[r] -= f * rhs[c];
                }
            }
        }
        let mut x = vec![0.0; m];
        for r in (0..m).rev() {
            let s: f64 = (r + 1..m).map(|j| a[r][j] * x[j]).sum();
            x[r] = (rhs[r] - s) / a[r][r];
        }
        let mut theta = vec![0.0; n];
        for (pos, &i) in keep.iter().enumerate() {
            theta[i] = x[pos];
        }
        for br in &model.branches {
            flows[br.line] = (theta[br.from] - theta[br.to]) * br.susceptance;
        }
    }
    Ok(flows)
}
