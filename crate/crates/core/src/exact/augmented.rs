//! The derived chain as an explicit finite Markov chain on reachable stacks.

use std::collections::HashMap;

use crate::chain::{ChainSpec, CtmcSpec, DtmcSpec};
use crate::cycle::{Cycle, DerivedState};
use crate::error::{Error, Result};

/// Safety limit on the number of reachable stacks.
const MAX_NODES: usize = 2_000_000;

/// Uniformization rate relative to the largest exit rate.
pub const UNIFORMIZATION_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AugEdge {
    pub to: usize,
    pub prob: f64,
    pub popped: Option<Cycle>,
}

#[derive(Debug, Clone)]
pub struct AugmentedChain {
    nodes: Vec<DerivedState>,
    edges: Vec<Vec<AugEdge>>,
    /// Uniformization rate when built from a CTMC.
    rate: Option<f64>,
}

impl AugmentedChain {
    /// Derived chain of a DTMC started at `[start]`. A self-loop pops the
    /// one-state cycle `(i)`.
    pub fn from_dtmc(chain: &DtmcSpec, start: usize) -> Result<Self> {
        build(chain.size(), start, |i, j| chain.p(i, j), false, None)
    }

    /// Derived chain of the uniformized CTMC `I + Q / rate`. Uniformization
    /// self-loops are not jumps, so they leave the stack alone.
    pub fn uniformized(chain: &CtmcSpec, start: usize, rate: f64) -> Result<Self> {
        let kernel = chain.uniformized(rate)?;
        let n = chain.size();
        build(n, start, |i, j| kernel[i * n + j], true, Some(rate))
    }

    /// DTMC derived chain, or the uniformized one at the default rate.
    pub fn for_chain(chain: &ChainSpec, start: usize) -> Result<Self> {
        match chain {
            ChainSpec::Dtmc(d) => Self::from_dtmc(d, start),
            ChainSpec::Ctmc(c) => {
                Self::uniformized(c, start, UNIFORMIZATION_FACTOR * c.max_exit_rate())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node 0 is always the start stack.
    pub fn node(&self, k: usize) -> &DerivedState {
        &self.nodes[k]
    }

    pub fn edges(&self, k: usize) -> &[AugEdge] {
        &self.edges[k]
    }

    pub fn rate(&self) -> Option<f64> {
        self.rate
    }

    /// For every edge, the position in `family` of the cycle it pops.
    pub fn watch_index(&self, family: &[Cycle]) -> Vec<Vec<Option<usize>>> {
        self.edges
            .iter()
            .map(|es| {
                es.iter()
                    .map(|e| {
                        e.popped
                            .as_ref()
                            .and_then(|c| family.iter().position(|f| f == c))
                    })
                    .collect()
            })
            .collect()
    }
}

fn build(
    n: usize,
    start: usize,
    kernel: impl Fn(usize, usize) -> f64,
    fictitious_loops: bool,
    rate: Option<f64>,
) -> Result<AugmentedChain> {
    if start >= n {
        return Err(Error::StateOutOfRange {
            index: start,
            size: n,
        });
    }
    let first = DerivedState::new(start)?;
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    index.insert(first.stack().to_vec(), 0);
    let mut nodes = vec![first];
    let mut edges: Vec<Vec<AugEdge>> = Vec::new();
    let mut k = 0;
    while k < nodes.len() {
        let y = nodes[k].clone();
        let top = y.top();
        let mut out = Vec::new();
        for j in 0..n {
            let p = kernel(top, j);
            if p <= 0.0 {
                continue;
            }
            if j == top && fictitious_loops {
                out.push(AugEdge {
                    to: k,
                    prob: p,
                    popped: None,
                });
                continue;
            }
            let mut next = y.clone();
            let popped = next.push(j)?;
            let to = match index.get(next.stack()) {
                Some(&t) => t,
                None => {
                    let t = nodes.len();
                    if t >= MAX_NODES {
                        return Err(Error::InvalidArgument(format!(
                            "derived chain exceeds {MAX_NODES} reachable stacks"
                        )));
                    }
                    index.insert(next.stack().to_vec(), t);
                    nodes.push(next);
                    t
                }
            };
            out.push(AugEdge {
                to,
                prob: p,
                popped,
            });
        }
        edges.push(out);
        k += 1;
    }
    Ok(AugmentedChain { nodes, edges, rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{validate_chain, ChainKind};

    #[test]
    fn complete_graph_reaches_every_stack() {
        let p = vec![vec![0.25; 4]; 4];
        let c = validate_chain(&p, ChainKind::Dtmc).unwrap();
        let a = AugmentedChain::from_dtmc(c.as_dtmc().unwrap(), 0).unwrap();
        // stacks start with 0: 1 + 3 + 6 + 6
        assert_eq!(a.len(), 16);
        for k in 0..a.len() {
            let total: f64 = a.edges(k).iter().map(|e| e.prob).sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert_eq!(a.node(k).stack()[0], 0);
        }
        let self_pops = a.edges(0).iter().filter(|e| e.to == 0).count();
        assert_eq!(self_pops, 1);
        assert_eq!(a.edges(0)[0].popped, Some(Cycle::new(&[0]).unwrap()));
    }

    #[test]
    fn uniformized_loops_do_not_pop() {
        let q = vec![
            vec![-1.0, 1.0, 0.0],
            vec![0.0, -2.0, 2.0],
            vec![3.0, 0.0, -3.0],
        ];
        let c = validate_chain(&q, ChainKind::Ctmc).unwrap();
        let a = AugmentedChain::for_chain(&c, 0).unwrap();
        assert_eq!(a.len(), 3);
        assert!((a.rate().unwrap() - 3.15).abs() < 1e-12);
        for k in 0..a.len() {
            let total: f64 = a.edges(k).iter().map(|e| e.prob).sum();
            assert!((total - 1.0).abs() < 1e-14);
            for e in a.edges(k).iter().filter(|e| e.to == k) {
                assert!(e.popped.is_none());
            }
        }
        let w = a.watch_index(&[Cycle::new(&[0, 1, 2]).unwrap()]);
        let hits = w.iter().flatten().filter(|x| x.is_some()).count();
        assert_eq!(hits, 1);
    }
}
