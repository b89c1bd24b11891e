//! Convoy simulation: coordinate maps between vehicles and edges, the
//! relative-to-individual control lift, the receding-horizon loop and logs.
//!
//! Vehicle coordinates are `[lateral, longitudinal]`; the convoy drives along
//! the second component.

use nalgebra::DVector;

use crate::convoy_graph::{incidence, ConvoyGraph, Edge};
use crate::coupled_game::SINGULAR_RCOND;
use crate::numerics::{pinv, reciprocal_condition, Matrix};
use crate::relative_game::{
    build_relative_problem, oracle_h, solvability_report, solve_relative_riccati,
    RelativeGameProblem,
};
use crate::rh_controller::{rh_step, synthesize_gains, EdgeSignature, FeedbackGain};
use crate::{Error, Result};

/// Log grid spacing in seconds; update instants are always added.
pub const LOG_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct FleetState {
    pub t: f64,
    pub q: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
}

impl FleetState {
    pub fn new(q: Vec<[f64; 2]>, v: Vec<[f64; 2]>) -> Result<Self> {
        if q.len() != v.len() {
            return Err(Error::Dimension(format!(
                "{} positions but {} velocities",
                q.len(),
                v.len()
            )));
        }
        if !q.iter().chain(&v).flatten().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("fleet state"));
        }
        Ok(Self { t: 0.0, q, v })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Exact double-integrator propagation over `dt` with constant controls.
    pub fn advance(&self, u: &[[f64; 2]], dt: f64) -> Self {
        let mut next = self.clone();
        for i in 0..self.len() {
            for a in 0..2 {
                next.q[i][a] = self.q[i][a] + dt * self.v[i][a] + 0.5 * dt * dt * u[i][a];
                next.v[i][a] = self.v[i][a] + dt * u[i][a];
            }
        }
        next.t = self.t + dt;
        next
    }
}

/// Reference vehicle attached by one edge to a real vehicle. It moves at
/// constant velocity with its lateral coordinate pinned to `boundary`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualLeader {
    pub attach_to: usize,
    pub offset: [f64; 2],
    pub velocity: [f64; 2],
    /// Lateral coordinate of the lane boundary it drives on.
    pub boundary: f64,
    pub mu: f64,
    pub omega: f64,
    pub r: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: ConvoyGraph,
    pub initial: FleetState,
    /// Control weight per edge, in edge order.
    pub r: Vec<f64>,
    pub t_f: f64,
    pub tau: f64,
    pub t_total: f64,
    pub virtual_leader: Option<VirtualLeader>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.initial.len() != self.graph.vehicle_count() {
            return Err(Error::Dimension(format!(
                "{} initial states for {} vehicles",
                self.initial.len(),
                self.graph.vehicle_count()
            )));
        }
        if self.r.len() != self.graph.edge_count() {
            return Err(Error::Dimension(format!(
                "{} control weights for {} edges",
                self.r.len(),
                self.graph.edge_count()
            )));
        }
        if !(self.tau > 0.0
            && self.tau <= self.t_f
            && self.t_f <= self.t_total
            && self.t_total.is_finite())
        {
            return Err(Error::Domain(format!(
                "need 0 < tau <= t_f <= T_total, got tau = {}, t_f = {}, T_total = {}",
                self.tau, self.t_f, self.t_total
            )));
        }
        if let Some(l) = &self.virtual_leader {
            if l.attach_to >= self.graph.vehicle_count() {
                return Err(Error::Domain(format!(
                    "virtual leader attached to unknown vehicle {}",
                    l.attach_to
                )));
            }
        }
        Ok(())
    }
}

/// Scenario with the virtual leader appended as the last vertex and its edge
/// placed first in edge order.
#[derive(Debug, Clone)]
pub struct AugmentedScenario {
    pub graph: ConvoyGraph,
    pub initial: FleetState,
    pub r: Vec<f64>,
    /// `true` for vertices that receive no control.
    pub virtual_mask: Vec<bool>,
    pub leader_velocity: Option<[f64; 2]>,
}

pub fn attach_virtual_leader(scenario: &Scenario) -> Result<AugmentedScenario> {
    scenario.validate()?;
    let m = scenario.graph.vehicle_count();
    let Some(leader) = &scenario.virtual_leader else {
        return Ok(AugmentedScenario {
            graph: scenario.graph.clone(),
            initial: scenario.initial.clone(),
            r: scenario.r.clone(),
            virtual_mask: vec![false; m],
            leader_velocity: None,
        });
    };
    let target = leader.attach_to;
    let mut edges = vec![Edge::new(m, target, leader.mu, leader.omega, leader.offset)];
    edges.extend(scenario.graph.edges().iter().cloned());
    let graph = ConvoyGraph::new(m + 1, edges)?;
    let mut r = vec![leader.r];
    r.extend(&scenario.r);
    let mut initial = scenario.initial.clone();
    let attach_long = scenario.initial.q[target][1];
    initial
        .q
        .push([leader.boundary, attach_long - leader.offset[1]]);
    initial.v.push(leader.velocity);
    let mut virtual_mask = vec![false; m];
    virtual_mask.push(true);
    Ok(AugmentedScenario {
        graph,
        initial,
        r,
        virtual_mask,
        leader_velocity: Some(leader.velocity),
    })
}

pub fn edge_signature(graph: &ConvoyGraph) -> EdgeSignature {
    graph.edges().iter().map(|e| (e.tail, e.head)).collect()
}

/// Relative state in the 4n layout: `x_k = q_j − q_i − d_k`,
/// `ẋ_k = q̇_j − q̇_i` for edge `k = (i, j)`.
pub fn relative_from_individual(state: &FleetState, graph: &ConvoyGraph) -> Result<DVector<f64>> {
    if state.len() != graph.vehicle_count() {
        return Err(Error::Dimension(format!(
            "state has {} vehicles, graph has {}",
            state.len(),
            graph.vehicle_count()
        )));
    }
    let n = graph.edge_count();
    let mut x = DVector::zeros(4 * n);
    for (k, e) in graph.edges().iter().enumerate() {
        for a in 0..2 {
            x[2 * k + a] = state.q[e.head][a] - state.q[e.tail][a] - e.offset[a];
            x[2 * (n + k) + a] = state.v[e.head][a] - state.v[e.tail][a];
        }
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct Lift {
    /// One acceleration per vertex; virtual vertices get zero.
    pub u: Vec<[f64; 2]>,
    /// `‖E u − e‖_max`.
    pub residual: f64,
}

/// Minimum-norm accelerations reproducing the relative controls:
/// `u = E⁺ e` per axis, with `E = Dᵀ` restricted to controlled vertices.
pub fn lift_controls(e: &DVector<f64>, graph: &ConvoyGraph, virtual_mask: &[bool]) -> Result<Lift> {
    let n = graph.edge_count();
    let m = graph.vehicle_count();
    if e.len() != 2 * n || virtual_mask.len() != m {
        return Err(Error::Dimension(format!(
            "expected {} relative controls and a {m}-entry mask",
            2 * n
        )));
    }
    if !e.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("relative controls"));
    }
    let controlled: Vec<usize> = (0..m).filter(|&i| !virtual_mask[i]).collect();
    let dt = incidence(graph).transpose();
    let e_mat = Matrix::from_fn(n, controlled.len(), |k, c| dt[(k, controlled[c])]);
    let e_axes = Matrix::from_fn(n, 2, |k, a| e[2 * k + a]);
    let u_axes = pinv(&e_mat)? * &e_axes;
    let residual = (&e_mat * &u_axes - &e_axes).amax();
    if residual > 1e-10 {
        log::warn!("control lift is inconsistent; least-squares residual {residual:.3e}");
    }
    let mut u = vec![[0.0; 2]; m];
    for (c, &i) in controlled.iter().enumerate() {
        u[i] = [u_axes[(c, 0)], u_axes[(c, 1)]];
    }
    Ok(Lift { u, residual })
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    /// Real vehicles only, indexed `[sample][vehicle]`.
    pub q: Vec<Vec<[f64; 2]>>,
    pub v: Vec<Vec<[f64; 2]>>,
    pub u: Vec<Vec<[f64; 2]>>,
    /// Virtual leader position per sample, when present.
    pub leader: Option<Vec<[f64; 2]>>,
    pub leader_attach: Option<usize>,
    /// Edges of the simulated (possibly augmented) graph.
    pub edges: EdgeSignature,
    pub x: Vec<DVector<f64>>,
    pub e: Vec<DVector<f64>>,
    pub pairs: Vec<(usize, usize)>,
    /// `distances[sample][pair]`.
    pub distances: Vec<Vec<f64>>,
    pub max_lift_residual: f64,
}

impl TrajectoryLog {
    pub fn vehicle_count(&self) -> usize {
        self.q.first().map_or(0, |s| s.len())
    }

    pub fn final_x_inf(&self) -> f64 {
        self.x.last().map_or(0.0, |x| x.amax())
    }

    pub fn final_e_inf(&self) -> f64 {
        self.e.last().map_or(0.0, |e| e.amax())
    }

    /// Lateral offset of the attached vehicle from the leader at the end.
    pub fn leader_lateral_offset(&self) -> Option<f64> {
        let leader = self.leader.as_ref()?.last()?;
        let attach = self.leader_attach?;
        Some(self.q.last()?[attach][0] - leader[0])
    }
}

fn log_grid(t_total: f64, tau: f64) -> Vec<f64> {
    let mut times: Vec<f64> = (0..=((t_total / LOG_STEP).round() as usize))
        .map(|j| (j as f64 * LOG_STEP).min(t_total))
        .collect();
    let steps = (t_total / tau).round() as usize;
    times.extend((0..=steps).map(|k| (k as f64 * tau).min(t_total)));
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    times
}

fn check_solvable(problem: &RelativeGameProblem) -> Result<()> {
    match solvability_report(problem) {
        Ok(r) if r.nonsingular => Ok(()),
        Ok(r) => Err(Error::Unsolvable(format!(
            "solvability matrix is singular (rcond {:.3e})",
            r.rcond
        ))),
        Err(Error::Degenerate { edge, reason }) => {
            log::warn!(
                "closed form unavailable for edge {edge} ({reason}); using the expm construction"
            );
            let rcond = reciprocal_condition(&oracle_h(problem)?);
            if rcond >= SINGULAR_RCOND {
                Ok(())
            } else {
                Err(Error::Unsolvable(format!(
                    "solvability matrix is singular (rcond {rcond:.3e})"
                )))
            }
        }
        Err(e) => Err(e),
    }
}

/// Relative problem and gains for a scenario.
pub fn synthesize(
    scenario: &Scenario,
) -> Result<(AugmentedScenario, RelativeGameProblem, FeedbackGain)> {
    let aug = attach_virtual_leader(scenario)?;
    let problem = build_relative_problem(&aug.graph, &aug.r, scenario.t_f)?;
    check_solvable(&problem)?;
    let solutions = solve_relative_riccati(&problem, 50)?;
    let gains = synthesize_gains(
        &problem,
        &solutions,
        scenario.tau,
        edge_signature(&aug.graph),
    )?;
    Ok((aug, problem, gains))
}

/// Runs the receding-horizon loop with precomputed gains.
pub fn simulate_with(
    scenario: &Scenario,
    aug: &AugmentedScenario,
    gains: &FeedbackGain,
) -> Result<TrajectoryLog> {
    let m = scenario.graph.vehicle_count();
    let signature = edge_signature(&aug.graph);
    let tau = scenario.tau;
    let steps = (scenario.t_total / tau).round() as usize;
    let grid = log_grid(scenario.t_total, tau);
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let mut log = TrajectoryLog {
        times: Vec::with_capacity(grid.len()),
        q: Vec::with_capacity(grid.len()),
        v: Vec::with_capacity(grid.len()),
        u: Vec::with_capacity(grid.len()),
        leader: aug.leader_velocity.map(|_| Vec::with_capacity(grid.len())),
        leader_attach: scenario.virtual_leader.as_ref().map(|l| l.attach_to),
        edges: signature.clone(),
        x: Vec::with_capacity(grid.len()),
        e: Vec::with_capacity(grid.len()),
        pairs: pairs.clone(),
        distances: Vec::with_capacity(grid.len()),
        max_lift_residual: 0.0,
    };
    let record = |state: &FleetState,
                  u: &[[f64; 2]],
                  e: &DVector<f64>,
                  log: &mut TrajectoryLog|
     -> Result<()> {
        log.times.push(state.t);
        log.q.push(state.q[..m].to_vec());
        log.v.push(state.v[..m].to_vec());
        log.u.push(u[..m].to_vec());
        if let Some(l) = log.leader.as_mut() {
            l.push(state.q[m]);
        }
        log.x.push(relative_from_individual(state, &aug.graph)?);
        log.e.push(e.clone());
        log.distances.push(
            pairs
                .iter()
                .map(|&(i, j)| {
                    let d = [state.q[i][0] - state.q[j][0], state.q[i][1] - state.q[j][1]];
                    d[0].hypot(d[1])
                })
                .collect(),
        );
        Ok(())
    };

    let mut state = aug.initial.clone();
    let mut g = 0;
    for k in 0..=steps {
        let x = relative_from_individual(&state, &aug.graph)?;
        let step = rh_step(&x, gains, &signature)?;
        let lift = lift_controls(&step.e, &aug.graph, &aug.virtual_mask)?;
        log.max_lift_residual = log.max_lift_residual.max(lift.residual);
        let t0 = k as f64 * tau;
        let t1 = if k == steps {
            t0
        } else {
            ((k + 1) as f64 * tau).min(scenario.t_total)
        };
        while g < grid.len() && (grid[g] < t1 - 1e-9 || (k == steps && grid[g] <= t1 + 1e-9)) {
            let mut s = state.advance(&lift.u, grid[g] - t0);
            s.t = grid[g];
            record(&s, &lift.u, &step.e, &mut log)?;
            g += 1;
        }
        if k == steps {
            break;
        }
        state = state.advance(&lift.u, t1 - t0);
        state.t = t1;
    }
    Ok(log)
}

pub fn simulate(scenario: &Scenario) -> Result<TrajectoryLog> {
    let (aug, _, gains) = synthesize(scenario)?;
    simulate_with(scenario, &aug, &gains)
}

#[derive(Debug, Clone)]
pub struct DistanceSummary {
    pub pairs: Vec<(usize, usize)>,
    /// `series[pair][sample]`.
    pub series: Vec<Vec<f64>>,
    pub min_distance: f64,
    pub min_time: f64,
    pub min_pair: (usize, usize),
}

pub fn pairwise_distances(log: &TrajectoryLog) -> DistanceSummary {
    let series: Vec<Vec<f64>> = (0..log.pairs.len())
        .map(|p| log.distances.iter().map(|row| row[p]).collect())
        .collect();
    let mut best = (f64::INFINITY, 0.0, (0, 0));
    for (s, row) in log.distances.iter().enumerate() {
        for (p, &d) in row.iter().enumerate() {
            if d < best.0 {
                best = (d, log.times[s], log.pairs[p]);
            }
        }
    }
    DistanceSummary {
        pairs: log.pairs.clone(),
        series,
        min_distance: best.0,
        min_time: best.1,
        min_pair: best.2,
    }
}

/// Minimum distance between two vehicles and the time it occurs.
pub fn min_distance_between(log: &TrajectoryLog, i: usize, j: usize) -> Option<(f64, f64)> {
    let key = (i.min(j), i.max(j));
    let p = log.pairs.iter().position(|&pair| pair == key)?;
    log.distances
        .iter()
        .zip(&log.times)
        .map(|(row, &t)| (row[p], t))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_graph() -> ConvoyGraph {
        ConvoyGraph::new(2, vec![Edge::new(0, 1, 1.0, 5.0, [0.0, -4.0])]).unwrap()
    }

    #[test]
    fn single_edge_lift() {
        let lift = lift_controls(
            &DVector::from_vec(vec![2.0, 0.0]),
            &pair_graph(),
            &[false, false],
        )
        .unwrap();
        assert!((lift.u[0][0] + 1.0).abs() < 1e-14 && (lift.u[1][0] - 1.0).abs() < 1e-14);
        assert!(lift.residual < 1e-14);
        let zero = lift_controls(&DVector::zeros(2), &pair_graph(), &[false, false]).unwrap();
        assert!(zero.u.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn formation_fixed_point() {
        let s = Scenario {
            graph: pair_graph(),
            initial: FleetState::new(vec![[1.0, 4.0], [1.0, 0.0]], vec![[0.0, 2.0]; 2]).unwrap(),
            r: vec![1.0],
            t_f: 0.3,
            tau: 0.1,
            t_total: 1.0,
            virtual_leader: None,
        };
        let log = simulate(&s).unwrap();
        assert!(log.u.iter().flatten().flatten().all(|&v| v.abs() < 1e-12));
        assert!(log.x.iter().all(|x| x.amax() < 1e-12));
        assert_eq!(log.times.len(), 101);
    }

    #[test]
    fn tau_above_horizon_rejected() {
        let s = Scenario {
            graph: pair_graph(),
            initial: FleetState::new(vec![[0.0; 2]; 2], vec![[0.0; 2]; 2]).unwrap(),
            r: vec![1.0],
            t_f: 0.3,
            tau: 0.5,
            t_total: 1.0,
            virtual_leader: None,
        };
        assert!(matches!(simulate(&s), Err(Error::Domain(_))));
    }

    #[test]
    fn coincident_vehicles_have_zero_distance() {
        let s = Scenario {
            graph: pair_graph(),
            initial: FleetState::new(vec![[0.0, 0.0]; 2], vec![[0.0; 2]; 2]).unwrap(),
            r: vec![1.0],
            t_f: 0.3,
            tau: 0.1,
            t_total: 0.3,
            virtual_leader: None,
        };
        let log = simulate(&s).unwrap();
        assert_eq!(log.distances[0][0], 0.0);
        assert_eq!(pairwise_distances(&log).min_distance, 0.0);
    }
}
