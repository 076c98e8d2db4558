//! Cycles as rotation classes of directed circuits, and the derived chain
//! that pops completed cycles off a trajectory.
//!
//! A trajectory is folded into a stack of distinct states. Visiting a state
//! that is not on the stack pushes it; revisiting a state already on the
//! stack truncates the stack back to that state and emits the cycle formed by
//! the discarded segment.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain::StateSpace;
use crate::error::{Error, Result};

/// Largest state space the derived-chain bitmask can address.
pub const MAX_STATES: usize = 64;

/// A cycle stored in canonical rotation (smallest state index first).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Cycle(Vec<usize>);

impl Cycle {
    pub fn new(states: &[usize]) -> Result<Self> {
        canonicalize(states)
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.0.contains(&state)
    }

    pub fn reversed(&self) -> Cycle {
        reversed_cycle(self)
    }

    pub fn is_similar(&self, other: &Cycle) -> bool {
        is_similar(self, other)
    }

    /// Directed edges `i_1 -> i_2 -> ... -> i_s -> i_1`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let s = self.0.len();
        (0..s).map(move |k| (self.0[k], self.0[(k + 1) % s]))
    }

    /// Labelled text form, e.g. `(E,ES,EP)`.
    pub fn format(&self, states: &StateSpace) -> String {
        let labels: Vec<&str> = self.0.iter().map(|&i| states.label(i)).collect();
        format!("({})", labels.join(","))
    }
}

impl fmt::Display for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

impl TryFrom<Vec<usize>> for Cycle {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        canonicalize(&v)
    }
}

impl From<Cycle> for Vec<usize> {
    fn from(c: Cycle) -> Self {
        c.0
    }
}

/// Rotates a circuit of distinct states so that its minimum comes first.
pub fn canonicalize(states: &[usize]) -> Result<Cycle> {
    if states.is_empty() {
        return Err(Error::EmptyCycle);
    }
    for (k, s) in states.iter().enumerate() {
        if states[..k].contains(s) {
            return Err(Error::DuplicateState(*s));
        }
    }
    let pos = states
        .iter()
        .enumerate()
        .min_by_key(|&(_, s)| *s)
        .map(|(k, _)| k)
        .unwrap();
    let mut v = Vec::with_capacity(states.len());
    v.extend_from_slice(&states[pos..]);
    v.extend_from_slice(&states[..pos]);
    Ok(Cycle(v))
}

/// `(i_1, i_2, ..., i_s) -> (i_1, i_s, ..., i_2)`.
pub fn reversed_cycle(c: &Cycle) -> Cycle {
    let mut v = Vec::with_capacity(c.len());
    v.push(c.0[0]);
    v.extend(c.0[1..].iter().rev());
    Cycle(v)
}

/// Same length and same set of states.
pub fn is_similar(a: &Cycle, b: &Cycle) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut x = a.0.clone();
    let mut y = b.0.clone();
    x.sort_unstable();
    y.sort_unstable();
    x == y
}

/// Parses `(A,B,C)` against a labelled state space.
pub fn parse_cycle(text: &str, states: &StateSpace) -> Result<Cycle> {
    let t = text.trim();
    let inner = t
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::BadCycle(t.to_string()))?;
    if inner.trim().is_empty() {
        return Err(Error::EmptyCycle);
    }
    let idx = inner
        .split(',')
        .map(|l| states.index_of(l.trim()))
        .collect::<Result<Vec<_>>>()?;
    canonicalize(&idx)
}

/// Parses a comma-separated list of parenthesised cycles:
/// `(E,ES,EP),(E,EP,ES)`.
pub fn parse_cycle_list(text: &str, states: &StateSpace) -> Result<Vec<Cycle>> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        if !rest.starts_with('(') {
            return Err(Error::BadCycle(rest.to_string()));
        }
        let close = rest
            .find(')')
            .ok_or_else(|| Error::BadCycle(rest.to_string()))?;
        out.push(parse_cycle(&rest[..=close], states)?);
        rest = rest[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        } else if !rest.is_empty() {
            return Err(Error::BadCycle(rest.to_string()));
        }
    }
    Ok(out)
}

/// State of the derived chain: a stack of distinct states.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivedState {
    stack: Vec<usize>,
    members: u64,
}

/// Outcome of feeding one state into the derived chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopResult {
    pub next: DerivedState,
    pub popped: Option<Cycle>,
}

impl DerivedState {
    pub fn new(start: usize) -> Result<Self> {
        check_index(start)?;
        Ok(Self {
            stack: vec![start],
            members: 1 << start,
        })
    }

    /// Builds a stack directly; entries must be distinct.
    pub fn from_stack(stack: &[usize]) -> Result<Self> {
        if stack.is_empty() {
            return Err(Error::InvalidArgument(
                "derived state cannot be empty".into(),
            ));
        }
        let mut members = 0u64;
        for &s in stack {
            check_index(s)?;
            if members & (1 << s) != 0 {
                return Err(Error::DuplicateState(s));
            }
            members |= 1 << s;
        }
        Ok(Self {
            stack: stack.to_vec(),
            members,
        })
    }

    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    pub fn top(&self) -> usize {
        *self.stack.last().unwrap()
    }

    pub fn contains(&self, state: usize) -> bool {
        state < MAX_STATES && self.members & (1 << state) != 0
    }

    /// Advances in place; returns the popped cycle, if any.
    pub fn push(&mut self, state: usize) -> Result<Option<Cycle>> {
        check_index(state)?;
        if self.members & (1 << state) == 0 {
            self.stack.push(state);
            self.members |= 1 << state;
            return Ok(None);
        }
        let k = self.stack.iter().rposition(|&s| s == state).unwrap();
        let popped = canonicalize(&self.stack[k..])?;
        for &s in &self.stack[k + 1..] {
            self.members &= !(1 << s);
        }
        self.stack.truncate(k + 1);
        Ok(Some(popped))
    }
}

fn check_index(state: usize) -> Result<()> {
    if state >= MAX_STATES {
        Err(Error::StateOutOfRange {
            index: state,
            size: MAX_STATES,
        })
    } else {
        Ok(())
    }
}

pub fn derived_step(y: &DerivedState, next_state: usize) -> Result<PopResult> {
    let mut next = y.clone();
    let popped = next.push(next_state)?;
    Ok(PopResult { next, popped })
}

/// Folds the derived chain over a trajectory and returns `(step, cycle)` for
/// every popped cycle.
pub fn run_derived(trajectory: &[usize]) -> Result<Vec<(usize, Cycle)>> {
    let (&first, rest) = trajectory
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("trajectory is empty".into()))?;
    let mut y = DerivedState::new(first)?;
    let mut out = Vec::new();
    for (k, &s) in rest.iter().enumerate() {
        if let Some(c) = y.push(s)? {
            out.push((k + 1, c));
        }
    }
    Ok(out)
}
