//! Exact bottleneck distance between two persistence diagrams: binary search
//! over the finite set of candidate radii, each tested with a Hopcroft-Karp
//! perfect-matching check on the diagonal-augmented bipartite graph.

use std::collections::VecDeque;

use super::PersistenceDiagram;

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn diag_cost(p: (f64, f64)) -> f64 {
    (p.0 - p.1).abs() / 2.0
}

/// Finite (birth, death) points of both diagrams. Essential pairs get their
/// death clamped to the lowest finite value seen in either diagram; points on
/// the diagonal are dropped.
fn finite_points(a: &PersistenceDiagram, b: &PersistenceDiagram) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let floor = a
        .pairs
        .iter()
        .chain(&b.pairs)
        .flat_map(|p| [p.birth, p.death])
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let conv = |d: &PersistenceDiagram| -> Vec<(f64, f64)> {
        d.pairs
            .iter()
            .map(|p| (p.birth, if p.death.is_finite() { p.death } else { floor }))
            .filter(|p| p.0 != p.1)
            .collect()
    };
    (conv(a), conv(b))
}

struct Bipartite {
    adj: Vec<Vec<usize>>,
    n_right: usize,
}

impl Bipartite {
    fn has_perfect_matching(&self) -> bool {
        let n_left = self.adj.len();
        if n_left != self.n_right {
            return false;
        }
        const NIL: usize = usize::MAX;
        let mut match_l = vec![NIL; n_left];
        let mut match_r = vec![NIL; self.n_right];
        let mut dist = vec![0usize; n_left];
        let mut matched = 0;
        loop {
            // BFS layering from free left vertices
            let mut queue = VecDeque::new();
            let mut found = false;
            for u in 0..n_left {
                if match_l[u] == NIL {
                    dist[u] = 0;
                    queue.push_back(u);
                } else {
                    dist[u] = usize::MAX;
                }
            }
            while let Some(u) = queue.pop_front() {
                for &v in &self.adj[u] {
                    let w = match_r[v];
                    if w == NIL {
                        found = true;
                    } else if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                }
            }
            if !found {
                break;
            }
            for u in 0..n_left {
                if match_l[u] == NIL && self.augment(u, &mut match_l, &mut match_r, &mut dist) {
                    matched += 1;
                }
            }
        }
        matched == n_left
    }

    fn augment(&self, u: usize, match_l: &mut [usize], match_r: &mut [usize], dist: &mut [usize]) -> bool {
        for &v in &self.adj[u] {
            let w = match_r[v];
            let ok = w == usize::MAX || (dist[w] == dist[u].wrapping_add(1) && self.augment(w, match_l, match_r, dist));
            if ok {
                match_l[u] = v;
                match_r[v] = u;
                return true;
            }
        }
        dist[u] = usize::MAX;
        false
    }
}

/// Left side: points of `a` then diagonal copies of `b`. Right side: points of
/// `b` then diagonal copies of `a`.
fn graph_at(a: &[(f64, f64)], b: &[(f64, f64)], r: f64) -> Bipartite {
    let (p, q) = (a.len(), b.len());
    let mut adj = vec![Vec::new(); p + q];
    for (i, &pa) in a.iter().enumerate() {
        for (j, &pb) in b.iter().enumerate() {
            if linf(pa, pb) <= r {
                adj[i].push(j);
            }
        }
        if diag_cost(pa) <= r {
            adj[i].push(q + i);
        }
    }
    for (j, &pb) in b.iter().enumerate() {
        if diag_cost(pb) <= r {
            adj[p + j].push(j);
        }
        adj[p + j].extend((0..p).map(|i| q + i));
    }
    Bipartite { adj, n_right: q + p }
}

/// Bottleneck distance under the L-infinity ground metric.
pub fn bottleneck_distance(a: &PersistenceDiagram, b: &PersistenceDiagram) -> f64 {
    let (pa, pb) = finite_points(a, b);
    if pa.is_empty() && pb.is_empty() {
        return 0.0;
    }
    let mut cand: Vec<f64> = Vec::with_capacity(pa.len() * pb.len() + pa.len() + pb.len() + 1);
    cand.push(0.0);
    for &x in &pa {
        cand.push(diag_cost(x));
        for &y in &pb {
            cand.push(linf(x, y));
        }
    }
    cand.extend(pb.iter().map(|&y| diag_cost(y)));
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    // the largest candidate always admits a matching (everything to the diagonal)
    let (mut lo, mut hi) = (0usize, cand.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if graph_at(&pa, &pb, cand[mid]).has_perfect_matching() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    cand[lo]
}
