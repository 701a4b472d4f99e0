//! Exact transportation solver: successive shortest paths with node
//! potentials on the dense bipartite source/sink graph. Supplies and demands
//! are real-valued; every augmentation exactly exhausts a source, a sink, or
//! a flow edge, so termination is guaranteed without tolerance games. The
//! final potentials are feasible dual prices (u_i = -pi_i, v_j = +pi_j with
//! u_i + v_j <= c_ij, tight on the support), which is what the caller turns
//! into a witness function.

use crate::linalg::Mat;
use crate::{Error, Result};

pub(crate) struct TransportSolution {
    /// Optimal transport cost Σ flow_ij · c_ij.
    pub cost: f64,
    /// Final node potentials at the sinks (pi_j).
    pub snk_potential: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Parent {
    None,
    /// Sink was reached from this source over a forward edge.
    FromSource(usize),
    /// Source was reached from this sink over a residual (backward) edge.
    FromSink(usize),
}

/// Solves min Σ f_ij c_ij subject to row sums = supply, column sums = demand,
/// f >= 0. `supply` and `demand` must be strictly positive and have equal
/// totals; both are consumed (zeroed) during the run.
pub(crate) fn solve(supply: &mut [f64], demand: &mut [f64], cost: &Mat) -> Result<TransportSolution> {
    let ns = supply.len();
    let nt = demand.len();
    debug_assert_eq!(cost.rows, ns);
    debug_assert_eq!(cost.cols, nt);

    let mut flow = Mat::zeros(ns, nt);
    // Potentials: indices 0..ns are sources, ns..ns+nt are sinks.
    let mut pi = vec![0.0f64; ns + nt];

    let mut dist = vec![0.0f64; ns + nt];
    let mut done = vec![false; ns + nt];
    let mut parent = vec![Parent::None; ns + nt];

    let max_iters = 50 * (ns + nt) + 1000;
    let mut iters = 0usize;

    // Supplies and demands agree only up to float dust; remainders below this
    // threshold are dropped rather than shipped (cost impact ≤ 2·threshold,
    // far inside the caller's duality-gap certificate).
    let total0: f64 = supply.iter().sum();
    let dust = 1e-13 * total0.max(f64::MIN_POSITIVE);

    while supply.iter().sum::<f64>() > dust {
        iters += 1;
        if iters > max_iters {
            return Err(Error::Solver(format!(
                "internal error: transportation solver exceeded {max_iters} augmentations"
            )));
        }

        // Dense Dijkstra on reduced costs from all sources with remaining
        // supply.
        for v in 0..ns + nt {
            dist[v] = f64::INFINITY;
            done[v] = false;
            parent[v] = Parent::None;
        }
        for i in 0..ns {
            if supply[i] > 0.0 {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..ns + nt {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < ns {
                // Forward edges source u -> every sink.
                for j in 0..nt {
                    let v = ns + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost.get(u, j) + pi[u] - pi[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        parent[v] = Parent::FromSource(u);
                    }
                }
            } else {
                // Backward residual edges sink -> source with positive flow.
                let j = u - ns;
                for i in 0..ns {
                    if done[i] || flow.get(i, j) <= 0.0 {
                        continue;
                    }
                    let rc = (-cost.get(i, j) + pi[u] - pi[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        parent[i] = Parent::FromSink(j);
                    }
                }
            }
        }

        // Cheapest reachable sink with remaining demand.
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for j in 0..nt {
            if demand[j] > 0.0 && dist[ns + j] < best {
                best = dist[ns + j];
                target = j;
            }
        }
        if target == usize::MAX {
            return Err(Error::Solver(
                "internal error: transportation problem disconnected".into(),
            ));
        }
        let dt = dist[ns + target];
        for v in 0..ns + nt {
            pi[v] += dist[v].min(dt);
        }

        // Walk the path back to a source, recording edges.
        let mut fwd_edges: Vec<(usize, usize)> = Vec::new();
        let mut bwd_edges: Vec<(usize, usize)> = Vec::new();
        let mut at_sink = target;
        let start_source = loop {
            let src = match parent[ns + at_sink] {
                Parent::FromSource(i) => i,
                _ => return Err(Error::Solver("internal error: broken path at sink".into())),
            };
            fwd_edges.push((src, at_sink));
            match parent[src] {
                Parent::None => break src,
                Parent::FromSink(j) => {
                    bwd_edges.push((src, j));
                    at_sink = j;
                }
                Parent::FromSource(_) => {
                    return Err(Error::Solver("internal error: broken path at source".into()))
                }
            }
        };

        // Bottleneck: remaining supply at the start, remaining demand at the
        // target, and flow on every backward edge.
        let mut delta = supply[start_source].min(demand[target]);
        for &(i, j) in &bwd_edges {
            delta = delta.min(flow.get(i, j));
        }
        debug_assert!(delta > 0.0);

        for &(i, j) in &fwd_edges {
            let f = flow.get(i, j) + delta;
            flow.set(i, j, f);
        }
        for &(i, j) in &bwd_edges {
            let f = flow.get(i, j) - delta;
            flow.set(i, j, if f.abs() <= f64::EPSILON * delta { 0.0 } else { f.max(0.0) });
        }
        // Zero the exhausted element exactly.
        supply[start_source] -= delta;
        demand[target] -= delta;
        if supply[start_source] <= f64::EPSILON * delta {
            supply[start_source] = 0.0;
        }
        if demand[target] <= f64::EPSILON * delta {
            demand[target] = 0.0;
        }
    }

    let mut total = 0.0;
    for i in 0..ns {
        for j in 0..nt {
            total += flow.get(i, j) * cost.get(i, j);
        }
    }
    Ok(TransportSolution { cost: total, snk_potential: pi[ns..].to_vec() })
}
