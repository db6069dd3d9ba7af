use super::NetworkError;
use serde::Serialize;
use std::collections::VecDeque;

/// Tree structure of a radial network, computed once at load time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RadialOrder {
    /// Branch indices in breadth-first order from the root.
    pub branch_order: Vec<usize>,
    /// `(parent, child)` bus indices per branch.
    pub oriented: Vec<(usize, usize)>,
    /// Branch feeding each bus; `None` for the root.
    pub parent_branch: Vec<Option<usize>>,
    /// Number of branches between each bus and the root.
    pub depth: Vec<usize>,
}

impl RadialOrder {
    /// Branches on the path root → `bus`, root first.
    pub fn path_to(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.depth[bus]);
        let mut cur = bus;
        while let Some(b) = self.parent_branch[cur] {
            path.push(b);
            cur = self.oriented[b].0;
        }
        path.reverse();
        path
    }

    /// Child branches of each bus.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.depth.len()];
        for &b in &self.branch_order {
            ch[self.oriented[b].0].push(b);
        }
        ch
    }
}

/// Checks that `edges` form a spanning tree over `n` buses rooted at `root`
/// and orients each edge away from the root.
///
/// Disconnected buses are reported by index.
pub fn analyze_radial(
    n: usize,
    root: usize,
    edges: &[(usize, usize)],
    names: &[String],
) -> Result<RadialOrder, NetworkError> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, &(a, b)) in edges.iter().enumerate() {
        for bus in [a, b] {
            if bus >= n {
                return Err(NetworkError::UnknownBus { branch: names[k].clone(), bus: bus as u32 });
            }
        }
        if a == b {
            return Err(NetworkError::Cycle(names[k].clone()));
        }
        adj[a].push((b, k));
        adj[b].push((a, k));
    }
    let mut parent_branch = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut oriented = vec![(usize::MAX, usize::MAX); edges.len()];
    let mut used = vec![false; edges.len()];
    let mut branch_order = Vec::with_capacity(edges.len());
    let mut queue = VecDeque::from([root]);
    depth[root] = 0;
    while let Some(u) = queue.pop_front() {
        for &(v, k) in &adj[u] {
            if used[k] {
                continue;
            }
            used[k] = true;
            if depth[v] != usize::MAX {
                return Err(NetworkError::Cycle(names[k].clone()));
            }
            depth[v] = depth[u] + 1;
            parent_branch[v] = Some(k);
            oriented[k] = (u, v);
            branch_order.push(k);
            queue.push_back(v);
        }
    }
    if let Some(k) = used.iter().position(|&u| !u) {
        // An edge that was never reached lies in a component without the root.
        let bus = edges[k].0;
        return Err(NetworkError::Disconnected(bus as u32));
    }
    if let Some(bus) = depth.iter().position(|&d| d == usize::MAX) {
        return Err(NetworkError::Disconnected(bus as u32));
    }
    Ok(RadialOrder { branch_order, oriented, parent_branch, depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("b{i}")).collect()
    }

    #[test]
    fn chain_orders_root_first() {
        let r = analyze_radial(3, 0, &[(0, 1), (1, 2)], &names(2)).unwrap();
        assert_eq!(r.branch_order, vec![0, 1]);
        assert_eq!(r.depth, vec![0, 1, 2]);
        assert_eq!(r.path_to(2), vec![0, 1]);
    }

    #[test]
    fn reversed_edges_are_oriented() {
        let r = analyze_radial(3, 0, &[(2, 1), (1, 0)], &names(2)).unwrap();
        assert_eq!(r.oriented, vec![(1, 2), (0, 1)]);
        assert_eq!(r.branch_order, vec![1, 0]);
    }

    #[test]
    fn star_of_three_feeders() {
        let r = analyze_radial(4, 0, &[(0, 1), (0, 2), (0, 3)], &names(3)).unwrap();
        assert_eq!(r.depth, vec![0, 1, 1, 1]);
        assert_eq!(r.children()[0], vec![0, 1, 2]);
    }

    #[test]
    fn cross_tie_closes_cycle() {
        let e = analyze_radial(4, 0, &[(0, 1), (0, 2), (0, 3), (1, 3)], &names(4)).unwrap_err();
        assert!(matches!(e, NetworkError::Cycle(ref n) if n == "b4"));
    }

    #[test]
    fn unreachable_bus_reported() {
        let e = analyze_radial(3, 0, &[(0, 1)], &names(1)).unwrap_err();
        assert!(matches!(e, NetworkError::Disconnected(2)));
        let e = analyze_radial(5, 0, &[(0, 1), (2, 3), (3, 4), (4, 2)], &names(4)).unwrap_err();
        assert!(matches!(e, NetworkError::Disconnected(_)));
    }
}
