//! Individual-dynamics LQ game: stacked double integrators, coupled
//! asymmetric Riccati equations and the open-loop Nash controls.
//!
//! State layout `z = [q_1, …, q_m, 1, q̇_1, …, q̇_m] ∈ ℝ^{4m+1}`.

use nalgebra::DVector;

use crate::convoy_graph::{build_cost_matrices, ConvoyGraph, CostMatrices};
use crate::numerics::{
    expm, integrate, norm1, reciprocal_condition, Matrix, OdeOptions, OdeSolution,
};
use crate::{Error, Result};

/// `H(t_f)` is declared singular below this reciprocal condition number.
pub const SINGULAR_RCOND: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub m: usize,
    pub a: Matrix,
    pub b: Vec<Matrix>,
    pub s: Vec<Matrix>,
    pub r: Vec<Matrix>,
}

impl StackedSystem {
    pub fn dim(&self) -> usize {
        4 * self.m + 1
    }

    /// `Σ_j S_j P_j`.
    fn coupling(&self, p: &[Matrix]) -> Matrix {
        let n = self.dim();
        self.s
            .iter()
            .zip(p)
            .fold(Matrix::zeros(n, n), |acc, (s, p)| acc + s * p)
    }
}

#[derive(Debug, Clone)]
pub struct CoupledGame {
    pub system: StackedSystem,
    pub costs: Vec<CostMatrices>,
    pub t_f: f64,
}

fn is_positive_definite(r: &Matrix) -> bool {
    r.shape() == (2, 2)
        && r.iter().all(|v| v.is_finite())
        && (r - r.transpose()).amax() <= 1e-12 * r.amax().max(1.0)
        && r.clone().cholesky().is_some()
}

/// Per-vehicle `R_ii = r·I_2`, with `r` taken from the first edge the
/// vehicle owns and `default` for vehicles that own none.
pub fn vehicle_weights_from_edges(
    graph: &ConvoyGraph,
    r_edges: &[f64],
    default: f64,
) -> Vec<Matrix> {
    (0..graph.vehicle_count())
        .map(|i| {
            let r = graph
                .owned_edges(i)
                .first()
                .map(|&k| r_edges[k])
                .unwrap_or(default);
            Matrix::identity(2, 2) * r
        })
        .collect()
}

pub fn assemble_game(graph: &ConvoyGraph, r: &[Matrix], t_f: f64) -> Result<CoupledGame> {
    let m = graph.vehicle_count();
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(Error::Domain(format!(
            "horizon must be positive, got {t_f}"
        )));
    }
    if r.len() != m {
        return Err(Error::Dimension(format!(
            "{} control weights for {m} vehicles",
            r.len()
        )));
    }
    let n = 4 * m + 1;
    let mut a = Matrix::zeros(n, n);
    for k in 0..2 * m {
        a[(k, 2 * m + 1 + k)] = 1.0;
    }
    let mut bs = Vec::with_capacity(m);
    let mut ss = Vec::with_capacity(m);
    for (i, ri) in r.iter().enumerate() {
        if !is_positive_definite(ri) {
            return Err(Error::Domain(format!(
                "R for vehicle {i} is not symmetric positive definite"
            )));
        }
        let mut b = Matrix::zeros(n, 2);
        b[(2 * m + 1 + 2 * i, 0)] = 1.0;
        b[(2 * m + 2 + 2 * i, 1)] = 1.0;
        let rinv = ri.clone().try_inverse().ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        ss.push(&b * rinv * b.transpose());
        bs.push(b);
    }
    let costs = (0..m)
        .map(|i| build_cost_matrices(graph, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoupledGame {
        system: StackedSystem {
            m,
            a,
            b: bs,
            s: ss,
            r: r.to_vec(),
        },
        costs,
        t_f,
    })
}

/// Block matrix `M = [[−A, S_1, …, S_m], [Q_1, Aᵀ, 0, …], …, [Q_m, 0, …, Aᵀ]]`.
pub fn game_m(game: &CoupledGame) -> Matrix {
    let sys = &game.system;
    let n = sys.dim();
    let blocks = sys.m + 1;
    let mut big = Matrix::zeros(blocks * n, blocks * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-&sys.a));
    let at = sys.a.transpose();
    for i in 0..sys.m {
        let o = (i + 1) * n;
        big.view_mut((0, o), (n, n)).copy_from(&sys.s[i]);
        big.view_mut((o, 0), (n, n)).copy_from(&game.costs[i].q);
        big.view_mut((o, o), (n, n)).copy_from(&at);
    }
    big
}

#[derive(Debug, Clone)]
pub struct GameH {
    pub h: Matrix,
    pub rcond: f64,
    pub nonsingular: bool,
}

/// `H(t) = [I 0 … 0]·e^{tM}·[I; Q_1f; …; Q_mf]`.
pub fn game_h_at(game: &CoupledGame, t: f64) -> Result<GameH> {
    let n = game.system.dim();
    let e = expm(&(game_m(game) * t))?;
    let mut h = e.view((0, 0), (n, n)).into_owned();
    for i in 0..game.system.m {
        h += e.view((0, (i + 1) * n), (n, n)) * &game.costs[i].q_f;
    }
    let rcond = reciprocal_condition(&h);
    Ok(GameH {
        nonsingular: rcond >= SINGULAR_RCOND,
        h,
        rcond,
    })
}

pub fn game_h(game: &CoupledGame) -> Result<GameH> {
    game_h_at(game, game.t_f)
}

/// Backward solution of the coupled Riccati family.
#[derive(Debug, Clone)]
pub struct GameSolution {
    pub sample_times: Vec<f64>,
    /// `p[k][i]` is `P_i` at `sample_times[k]`.
    pub p: Vec<Vec<Matrix>>,
    ode: OdeSolution,
    m: usize,
}

fn unstack(flat: &Matrix, m: usize) -> Vec<Matrix> {
    let n = flat.nrows();
    (0..m)
        .map(|i| flat.columns(i * n, n).into_owned())
        .collect()
}

fn stack(p: &[Matrix]) -> Matrix {
    let n = p.first().map(|x| x.nrows()).unwrap_or(0);
    let mut flat = Matrix::zeros(n, n * p.len());
    for (i, pi) in p.iter().enumerate() {
        flat.columns_mut(i * n, n).copy_from(pi);
    }
    flat
}

fn riccati_rhs(game: &CoupledGame, p: &[Matrix]) -> Vec<Matrix> {
    let sys = &game.system;
    let sp = sys.coupling(p);
    let at = sys.a.transpose();
    p.iter()
        .zip(&game.costs)
        .map(|(pi, c)| -(pi * &sys.a + &at * pi - pi * &sp + &c.q))
        .collect()
}

impl GameSolution {
    pub fn at(&self, t: f64) -> Result<Vec<Matrix>> {
        Ok(unstack(&self.ode.eval(t)?, self.m))
    }

    pub fn initial(&self) -> &[Matrix] {
        &self.p[0]
    }

    /// Largest `‖Ṗ_i + P_iA + AᵀP_i − P_iΣS_jP_j + Q_i‖₁ / (1 + ‖P_i‖₁²)` at
    /// time `t`, with `Ṗ_i` from the dense interpolant.
    pub fn residual(&self, game: &CoupledGame, t: f64) -> Result<f64> {
        let p = self.at(t)?;
        let dp = unstack(&self.ode.eval_derivative(t)?, self.m);
        let rhs = riccati_rhs(game, &p);
        Ok(p.iter()
            .zip(dp.iter().zip(&rhs))
            .map(|(pi, (d, f))| norm1(&(d - f)) / (1.0 + norm1(pi).powi(2)))
            .fold(0.0, f64::max))
    }

    pub fn max_residual(&self, game: &CoupledGame) -> Result<f64> {
        self.sample_times
            .iter()
            .try_fold(0.0f64, |acc, &t| Ok(acc.max(self.residual(game, t)?)))
    }
}

pub fn solve_coupled_riccati(game: &CoupledGame, samples: usize) -> Result<GameSolution> {
    let verdict = game_h(game)?;
    if !verdict.nonsingular {
        return Err(Error::Unsolvable(format!(
            "H(t_f) is singular (rcond {:.3e}); the coupled Riccati equations have no unique solution",
            verdict.rcond
        )));
    }
    let m = game.system.m;
    let terminal: Vec<Matrix> = game.costs.iter().map(|c| c.q_f.clone()).collect();
    let grid: Vec<f64> = (0..=samples.max(1))
        .map(|k| game.t_f * k as f64 / samples.max(1) as f64)
        .collect();
    let ode = integrate(
        |_, flat| stack(&riccati_rhs(game, &unstack(flat, m))),
        &stack(&terminal),
        (game.t_f, 0.0),
        &grid,
        &crate::relative_game::riccati_options(game.t_f),
    )?;
    let p = ode.sample_states.iter().map(|f| unstack(f, m)).collect();
    Ok(GameSolution {
        sample_times: ode.sample_times.clone(),
        p,
        ode,
        m,
    })
}

#[derive(Debug, Clone)]
pub struct NashTrajectory {
    pub times: Vec<f64>,
    pub z: Vec<DVector<f64>>,
    /// `u[k][i]` is vehicle `i`'s control at `times[k]`.
    pub u: Vec<Vec<[f64; 2]>>,
}

/// Per-vehicle open-loop Nash controls `u_i = −R_ii⁻¹B_iᵀP_i(t)z`.
pub fn nash_controls(game: &CoupledGame, p: &[Matrix], z: &DVector<f64>) -> Result<Vec<[f64; 2]>> {
    let sys = &game.system;
    (0..sys.m)
        .map(|i| {
            let rinv = sys.r[i].clone().try_inverse().ok_or(Error::Singular {
                condition: f64::INFINITY,
            })?;
            let u = -(rinv * sys.b[i].transpose() * &p[i] * z);
            Ok([u[0], u[1]])
        })
        .collect()
}

/// Forward integration of `ż = (A − Σ S_j P_j(t)) z` over `[0, t_f]`.
pub fn nash_open_loop(
    game: &CoupledGame,
    solution: &GameSolution,
    z0: &DVector<f64>,
    samples: usize,
) -> Result<NashTrajectory> {
    let sys = &game.system;
    if z0.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, expected {}",
            z0.len(),
            sys.dim()
        )));
    }
    let grid: Vec<f64> = (0..=samples.max(1))
        .map(|k| game.t_f * k as f64 / samples.max(1) as f64)
        .collect();
    let x0 = Matrix::from_column_slice(z0.len(), 1, z0.as_slice());
    let ode = integrate(
        |t, z| {
            let p = solution.at(t).expect("time within the solved horizon");
            (&sys.a - sys.coupling(&p)) * z
        },
        &x0,
        (0.0, game.t_f),
        &grid,
        &OdeOptions::default(),
    )?;
    let mut z = Vec::with_capacity(ode.sample_times.len());
    let mut u = Vec::with_capacity(ode.sample_times.len());
    for (t, s) in ode.sample_times.iter().zip(&ode.sample_states) {
        let zk = s.column(0).into_owned();
        u.push(nash_controls(game, &solution.at(*t)?, &zk)?);
        z.push(zk);
    }
    Ok(NashTrajectory {
        times: ode.sample_times,
        z,
        u,
    })
}

/// `z = [q, 1, q̇]` from per-vehicle positions and velocities.
pub fn stacked_state(q: &[[f64; 2]], v: &[[f64; 2]]) -> DVector<f64> {
    let m = q.len();
    let mut z = DVector::zeros(4 * m + 1);
    for i in 0..m {
        z[2 * i] = q[i][0];
        z[2 * i + 1] = q[i][1];
        z[2 * m + 1 + 2 * i] = v[i][0];
        z[2 * m + 2 + 2 * i] = v[i][1];
    }
    z[2 * m] = 1.0;
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convoy_graph::Edge;

    fn unit_r(m: usize) -> Vec<Matrix> {
        vec![Matrix::identity(2, 2); m]
    }

    fn pair() -> ConvoyGraph {
        ConvoyGraph::new(2, vec![Edge::new(0, 1, 1.0, 5.0, [0.0, -4.0])]).unwrap()
    }

    #[test]
    fn two_vehicle_dimensions() {
        let g = assemble_game(&pair(), &unit_r(2), 0.3).unwrap();
        assert_eq!(g.system.a.shape(), (9, 9));
        assert_eq!(&g.system.a * &g.system.a, Matrix::zeros(9, 9));
        let b = &g.system.b[1];
        assert_eq!(g.system.s[1], b * b.transpose());
    }

    #[test]
    fn non_pd_weight_rejected() {
        let mut r = unit_r(2);
        r[0][(1, 1)] = -1.0;
        assert!(matches!(
            assemble_game(&pair(), &r, 0.3),
            Err(Error::Domain(_))
        ));
        assert!(assemble_game(&pair(), &unit_r(2), 0.0).is_err());
    }

    #[test]
    fn h_at_zero_is_identity() {
        let g = assemble_game(&pair(), &unit_r(2), 0.3).unwrap();
        let h = game_h_at(&g, 0.0).unwrap();
        assert!((h.h - Matrix::identity(9, 9)).amax() < 1e-15);
    }

    #[test]
    fn single_vehicle_is_trivial() {
        let g = assemble_game(&ConvoyGraph::new(1, vec![]).unwrap(), &unit_r(1), 0.5).unwrap();
        let sol = solve_coupled_riccati(&g, 4).unwrap();
        assert!(sol.initial()[0].amax() == 0.0);
        let z0 = stacked_state(&[[1.0, 2.0]], &[[0.0, 3.0]]);
        let tr = nash_open_loop(&g, &sol, &z0, 4).unwrap();
        assert!(tr.u.iter().all(|u| u[0] == [0.0, 0.0]));
        assert_eq!(tr.z.last().unwrap()[2], 1.0);
    }
}
