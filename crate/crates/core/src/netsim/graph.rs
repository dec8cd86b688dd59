use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use super::{NetError, Nanos};

/// Ordered so that ties in the event queue break deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Sdc,
    Wfcc,
    Switch(u16),
    Turbine(u16),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Sdc => write!(f, "sdc"),
            Node::Wfcc => write!(f, "wfcc"),
            Node::Switch(i) => write!(f, "s{i}"),
            Node::Turbine(i) => write!(f, "wt{i}"),
        }
    }
}

impl std::str::FromStr for Node {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |rest: &str| rest.parse::<u16>().map_err(|_| NetError::UnknownNode(s.into()));
        match s {
            "sdc" => Ok(Node::Sdc),
            "wfcc" => Ok(Node::Wfcc),
            _ if s.starts_with("wt") => Ok(Node::Turbine(num(&s[2..])?)),
            _ if s.starts_with('s') => Ok(Node::Switch(num(&s[1..])?)),
            _ => Err(NetError::UnknownNode(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: Node,
    pub b: Node,
    pub latency: Nanos,
    pub up: bool,
    /// `(down_at, up_at)` intervals; an open interval has `up_at = None`.
    outages: Vec<(Nanos, Option<Nanos>)>,
}

impl Edge {
    fn other(&self, n: Node) -> Option<Node> {
        if self.a == n {
            Some(self.b)
        } else if self.b == n {
            Some(self.a)
        } else {
            None
        }
    }

    /// Whether the edge was down at any instant of `[from, to]`.
    pub fn was_down(&self, from: Nanos, to: Nanos) -> bool {
        self.outages
            .iter()
            .any(|&(d, u)| d <= to && u.is_none_or(|u| u > from))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkGraph {
    edges: Vec<Edge>,
}

impl LinkGraph {
    pub fn add_edge(&mut self, a: Node, b: Node, latency: Nanos) -> Result<usize, NetError> {
        if latency == 0 {
            return Err(NetError::InvalidLatency(format!("{a}-{b}")));
        }
        self.edges.push(Edge {
            a,
            b,
            latency,
            up: true,
            outages: Vec::new(),
        });
        Ok(self.edges.len() - 1)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    pub fn find(&self, a: Node, b: Node) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
    }

    pub fn set_up(&mut self, i: usize, up: bool, now: Nanos) {
        let e = &mut self.edges[i];
        if e.up == up {
            return;
        }
        e.up = up;
        if up {
            if let Some(last) = e.outages.last_mut() {
                last.1 = Some(now);
            }
        } else {
            e.outages.push((now, None));
        }
    }

    pub fn path_latency(&self, path: &[usize]) -> Nanos {
        path.iter().map(|&i| self.edges[i].latency).sum()
    }

    pub fn path_up(&self, path: &[usize]) -> bool {
        path.iter().all(|&i| self.edges[i].up)
    }

    /// Minimum-latency path over `up` edges. Ties prefer the smaller node,
    /// then the lower edge index, so the result is deterministic.
    pub fn shortest_path(&self, src: Node, dst: Node) -> Option<Vec<usize>> {
        let mut nodes: Vec<Node> = self.edges.iter().flat_map(|e| [e.a, e.b]).collect();
        nodes.sort();
        nodes.dedup();
        let idx = |n: Node| nodes.binary_search(&n).ok();
        let (s, d) = (idx(src)?, idx(dst)?);
        let mut dist = vec![Nanos::MAX; nodes.len()];
        let mut via: Vec<Option<usize>> = vec![None; nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[s] = 0;
        heap.push(Reverse((0, s)));
        while let Some(Reverse((du, u))) = heap.pop() {
            if du > dist[u] {
                continue;
            }
            if u == d {
                break;
            }
            for (ei, e) in self.edges.iter().enumerate() {
                if !e.up {
                    continue;
                }
                let Some(v) = e.other(nodes[u]).and_then(idx) else {
                    continue;
                };
                let dv = du + e.latency;
                if dv < dist[v] {
                    dist[v] = dv;
                    via[v] = Some(ei);
                    heap.push(Reverse((dv, v)));
                }
            }
        }
        if dist[d] == Nanos::MAX {
            return None;
        }
        let mut path = Vec::new();
        let mut at = d;
        while at != s {
            let ei = via[at]?;
            path.push(ei);
            at = idx(self.edges[ei].other(nodes[at])?)?;
        }
        path.reverse();
        Some(path)
    }
}
