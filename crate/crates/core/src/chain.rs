//! Long-run (Cesàro) average cost of the Markov chain induced by a stationary policy.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::linalg;
use crate::mdp::Mdp;
use crate::policy::StationaryPolicy;

/// Recurrent classes (closed communicating classes) of the policy chain,
/// each sorted, ordered by smallest member.
pub fn recurrent_classes(mdp: &Mdp, policy: &StationaryPolicy) -> Result<Vec<Vec<usize>>> {
    policy.check_feasible(mdp)?;
    let n = mdp.num_states();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for x in 0..n {
        for t in mdp.actions(x)[policy.action(x)].row.targets() {
            graph.add_edge(nodes[x], nodes[t], ());
        }
    }
    let mut comp = vec![usize::MAX; n];
    let sccs = tarjan_scc(&graph);
    for (i, scc) in sccs.iter().enumerate() {
        for node in scc {
            comp[node.index()] = i;
        }
    }
    let mut classes: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(i, scc)| {
            scc.iter().all(|node| {
                let x = node.index();
                mdp.actions(x)[policy.action(x)]
                    .row
                    .targets()
                    .all(|t| comp[t] == *i)
            })
        })
        .map(|(_, scc)| {
            let mut c: Vec<usize> = scc.iter().map(|n| n.index()).collect();
            c.sort_unstable();
            c
        })
        .collect();
    classes.sort_by_key(|c| c[0]);
    Ok(classes)
}

/// Stationary distribution of the chain restricted to a closed class.
pub fn stationary_distribution(
    mdp: &Mdp,
    policy: &StationaryPolicy,
    class: &[usize],
) -> Result<Vec<f64>> {
    let m = class.len();
    let n = mdp.num_states();
    let mut pos = vec![usize::MAX; n];
    for (i, &x) in class.iter().enumerate() {
        pos[x] = i;
    }
    // πᵀ(P − I) = 0 with the last balance equation replaced by Σπ = 1.
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &x) in class.iter().enumerate() {
        a[(i, i)] -= 1.0;
        for &(t, p) in mdp.actions(x)[policy.action(x)].row.entries() {
            a[(pos[t], i)] += p;
        }
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let pi = linalg::solve(&a, &b, 2)
        .ok_or_else(|| Error::InvalidArgument("singular stationary system".into()))?;
    Ok(pi.iter().map(|&p| p.max(0.0)).collect())
}

/// `w^φ(x) = limsup_T (1/T) E_x^φ Σ_{t<T} c(x_t, φ(x_t))`, computed exactly:
/// stationary averages on recurrent classes, absorption into them from
/// transient states. States that reach an infinite-cost state get `+∞`.
pub fn long_run_average(mdp: &Mdp, policy: &StationaryPolicy) -> Result<Vec<ExtReal>> {
    let classes = recurrent_classes(mdp, policy)?;
    let n = mdp.num_states();
    let chosen = |x: usize| &mdp.actions(x)[policy.action(x)];

    // Reverse reachability from infinite-cost states.
    let mut preds = vec![Vec::new(); n];
    for x in 0..n {
        for t in chosen(x).row.targets() {
            preds[t].push(x);
        }
    }
    let mut infinite = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&x| chosen(x).cost.is_infinite()).collect();
    for &x in &stack {
        infinite[x] = true;
    }
    while let Some(y) = stack.pop() {
        for &x in &preds[y] {
            if !infinite[x] {
                infinite[x] = true;
                stack.push(x);
            }
        }
    }

    let mut avg = vec![f64::NAN; n];
    let mut recurrent = vec![false; n];
    for class in &classes {
        for &x in class {
            recurrent[x] = true;
        }
        if infinite[class[0]] {
            continue;
        }
        let pi = stationary_distribution(mdp, policy, class)?;
        let g: f64 = class
            .iter()
            .zip(&pi)
            .map(|(&x, &p)| p * chosen(x).cost.value())
            .sum();
        for &x in class {
            avg[x] = g;
        }
    }

    // Transient, finite states: g = Q g + (one-step mass into recurrent states)·g_rec.
    let transient: Vec<usize> = (0..n).filter(|&x| !recurrent[x] && !infinite[x]).collect();
    if !transient.is_empty() {
        let m = transient.len();
        let mut pos = vec![usize::MAX; n];
        for (i, &x) in transient.iter().enumerate() {
            pos[x] = i;
        }
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (i, &x) in transient.iter().enumerate() {
            for &(t, p) in chosen(x).row.entries() {
                if recurrent[t] {
                    b[i] += p * avg[t];
                } else {
                    a[(i, pos[t])] -= p;
                }
            }
        }
        let g = linalg::solve(&a, &b, 2)
            .ok_or_else(|| Error::InvalidArgument("singular absorption system".into()))?;
        for (i, &x) in transient.iter().enumerate() {
            avg[x] = g[i];
        }
    }

    Ok((0..n)
        .map(|x| {
            if infinite[x] {
                ExtReal::INFINITY
            } else {
                ExtReal::clamped(avg[x])
            }
        })
        .collect())
}
