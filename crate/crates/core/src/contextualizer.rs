//! Dialogue-aware span embeddings.
//!
//! For each span vector `s_j` and each recent turn `u_i` of one role:
//!
//! ```text
//! a_ij = W_s s_j + W_z z + W_u u_i
//! g_ij = σ(u_iᵀ z + u_iᵀ s_j)
//! ŝ_j  = normalize( Σ_i g_ij · ReLU(a_ij) + s_j )
//! ```
//!
//! User turns produce `ŝ`, agent turns `s̃` (separate matrices), and the
//! output row is `[s_j, ŝ_j, s̃_j]`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{logistic, Graph, Tensor, Var};
use crate::corpus::Role;
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextWindow {
    pub user_turns: usize,
    pub agent_turns: usize,
}

impl Default for ContextWindow {
    fn default() -> Self {
        Self {
            user_turns: 2,
            agent_turns: 2,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BranchParams {
    pub ws: ParamId,
    pub wz: ParamId,
    pub wu: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct ContextualizerParams {
    pub user: BranchParams,
    pub agent: BranchParams,
}

impl ContextualizerParams {
    /// Uniform in `[−1/√d, 1/√d]`.
    pub fn new(d: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let mut branch = |prefix: &str| BranchParams {
            ws: params.uniform(format!("ctx.{prefix}.ws"), d, d, bound, rng),
            wz: params.uniform(format!("ctx.{prefix}.wz"), d, d, bound, rng),
            wu: params.uniform(format!("ctx.{prefix}.wu"), d, d, bound, rng),
        };
        let user = branch("user");
        let agent = branch("agent");
        Self { user, agent }
    }
}

pub fn gate(u: &[f64], z: &[f64], s: &[f64]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    logistic(dot(u, z) + dot(u, s))
}

/// Branch update over `turns` (each `1 × d`); `s` is `l × d`, `z` is `1 × d`.
pub fn contextualize_branch(
    g: &Graph,
    s: Var,
    z: Var,
    turns: &[Var],
    ws: Var,
    wz: Var,
    wu: Var,
) -> Var {
    let mut acc = s;
    if !turns.is_empty() {
        let span_part = g.matmul_t(s, ws);
        let global_part = g.matmul_t(z, wz);
        for &u in turns {
            let row = g.add(global_part, g.matmul_t(u, wu));
            let a = g.add(span_part, row);
            // l × 1 gate column: s·u + z·u
            let logit = g.add(g.matmul_t(s, u), g.matmul_t(z, u));
            let gated = g.mul(g.relu(a), g.sigmoid(logit));
            acc = g.add(acc, gated);
        }
    }
    g.l2_normalize_rows(acc)
}

/// Rows of `u` for the most recent `limit` turns having `role`.
pub fn recent_turns(roles: &[Role], role: Role, limit: usize) -> Vec<usize> {
    roles
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == role)
        .map(|(i, _)| i)
        .take(limit)
        .collect()
}

/// `l × 3d` contextualized span matrix `[S, Ŝ, S̃]`.
#[allow(clippy::too_many_arguments)]
pub fn contextualize(
    g: &Graph,
    params: &ParamStore,
    ctx: &ContextualizerParams,
    s: Var,
    z: Var,
    u: Var,
    roles: &[Role],
    window: ContextWindow,
) -> Var {
    let branch = |bp: &BranchParams, role: Role, limit: usize| {
        let turns: Vec<Var> = recent_turns(roles, role, limit)
            .into_iter()
            .map(|i| g.row(u, i))
            .collect();
        contextualize_branch(
            g,
            s,
            z,
            &turns,
            g.param(params, bp.ws),
            g.param(params, bp.wz),
            g.param(params, bp.wu),
        )
    };
    let user = branch(&ctx.user, Role::User, window.user_turns);
    let agent = branch(&ctx.agent, Role::Agent, window.agent_turns);
    g.concat_cols(&[s, user, agent])
}

/// Gate values `g_ij` for inspection: one row per selected turn of `role`,
/// one column per span.
pub fn gate_matrix(
    s: &Tensor,
    z: &Tensor,
    u: &Tensor,
    roles: &[Role],
    role: Role,
    limit: usize,
) -> Tensor {
    let rows = recent_turns(roles, role, limit);
    let zs = z.row(0).to_vec();
    Array2::from_shape_fn((rows.len(), s.nrows()), |(i, j)| {
        let ui = u.row(rows[i]).to_vec();
        gate(&ui, &zs, &s.row(j).to_vec())
    })
}
