//! Persistent environments and the per-particle store.

use alloc::collections::btree_map::{self, BTreeMap};
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::RangeFrom;

use super::Trace;
use crate::syntax::{Address, Symbol};
use crate::values::{ProcessState, StochasticProcess, Value};

/// A copy-on-write ordered map. Cloning is O(1); the first write after a
/// clone copies the backing tree.
pub struct PMap<K, V>(Option<Rc<BTreeMap<K, V>>>);

impl<K, V> Clone for PMap<K, V> {
    fn clone(&self) -> Self {
        PMap(self.0.clone())
    }
}

impl<K, V> Default for PMap<K, V> {
    fn default() -> Self {
        PMap(None)
    }
}

impl<K: Ord + Clone, V: Clone> PMap<K, V> {
    pub fn new() -> Self {
        PMap(None)
    }

    pub fn get(&self, k: &K) -> Option<&V> {
        self.0.as_ref()?.get(k)
    }

    pub fn contains_key(&self, k: &K) -> bool {
        self.get(k).is_some()
    }

    pub fn insert(&mut self, k: K, v: V) -> Option<V> {
        Rc::make_mut(self.0.get_or_insert_with(Default::default)).insert(k, v)
    }

    pub fn len(&self) -> usize {
        self.0.as_ref().map_or(0, |m| m.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &V)> {
        self.0.iter().flat_map(|m| m.iter())
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.iter().map(|(k, _)| k)
    }

    pub fn values(&self) -> impl Iterator<Item = &V> {
        self.iter().map(|(_, v)| v)
    }

    pub fn range_from(&self, from: RangeFrom<&K>) -> impl Iterator<Item = (&K, &V)> {
        let from = from.start.clone();
        self.0.iter().flat_map(move |m| m.range(from.clone()..))
    }

    /// True when both maps share the same backing tree (or are both empty).
    pub fn ptr_eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Some(a), Some(b)) => Rc::ptr_eq(a, b),
            (a, b) => a.as_ref().is_none_or(|m| m.is_empty()) && b.as_ref().is_none_or(|m| m.is_empty()),
        }
    }

    /// Union of two maps. `same` decides whether two values under one key are
    /// compatible; the first incompatible key is returned as the error.
    pub fn union(&self, other: &Self, same: impl Fn(&V, &V) -> bool) -> Result<Self, K> {
        if other.is_empty() || self.ptr_eq(other) {
            return Ok(self.clone());
        }
        if self.is_empty() {
            return Ok(other.clone());
        }
        let (mut big, small) = if self.len() >= other.len() {
            (self.clone(), other)
        } else {
            (other.clone(), self)
        };
        let map = Rc::make_mut(big.0.get_or_insert_with(Default::default));
        for (k, v) in small.iter() {
            match map.entry(k.clone()) {
                btree_map::Entry::Vacant(e) => {
                    e.insert(v.clone());
                }
                btree_map::Entry::Occupied(e) => {
                    if !same(e.get(), v) {
                        return Err(k.clone());
                    }
                }
            }
        }
        Ok(big)
    }
}

impl<K: fmt::Debug, V: fmt::Debug> fmt::Debug for PMap<K, V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Some(m) => m.fmt(f),
            None => f.write_str("{}"),
        }
    }
}

/// The global environment: assumed names bound to their traces.
#[derive(Clone, Default)]
pub struct GlobalEnv(PMap<Symbol, Rc<Trace>>);

impl GlobalEnv {
    pub fn new() -> GlobalEnv {
        GlobalEnv::default()
    }

    pub fn get(&self, name: &str) -> Option<&Rc<Trace>> {
        self.0.get(&Symbol::from(name))
    }

    pub fn lookup(&self, name: &Symbol) -> Option<&Rc<Trace>> {
        self.0.get(name)
    }

    pub fn bind(&mut self, name: Symbol, trace: Rc<Trace>) {
        self.0.insert(name, trace);
    }

    pub fn contains(&self, name: &Symbol) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, &Rc<Trace>)> {
        self.0.iter()
    }
}

struct Frame {
    name: Symbol,
    trace: Rc<Trace>,
    next: LocalEnv,
}

/// Local bindings of compound procedure parameters, as an immutable linked list.
#[derive(Clone, Default)]
pub struct LocalEnv(Option<Rc<Frame>>);

impl LocalEnv {
    pub fn empty() -> LocalEnv {
        LocalEnv(None)
    }

    pub fn bind(&self, name: Symbol, trace: Rc<Trace>) -> LocalEnv {
        LocalEnv(Some(Rc::new(Frame {
            name,
            trace,
            next: self.clone(),
        })))
    }

    pub fn lookup(&self, name: &str) -> Option<&Rc<Trace>> {
        let mut cur = self.0.as_ref();
        while let Some(frame) = cur {
            if &*frame.name == name {
                return Some(&frame.trace);
            }
            cur = frame.next.0.as_ref();
        }
        None
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    /// All frames, innermost first, shadowed ones included.
    pub fn bindings(&self) -> Vec<(Symbol, Rc<Trace>)> {
        let mut out = Vec::new();
        let mut cur = self.0.as_ref();
        while let Some(frame) = cur {
            out.push((frame.name.clone(), frame.trace.clone()));
            cur = frame.next.0.as_ref();
        }
        out
    }
}

/// Cache key of a memoized call.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct MemoKey {
    pub id: Address,
    pub args: Rc<[Value]>,
}

/// Mutable per-particle state: memoized call results and the sufficient
/// statistics of exchangeable processes. Copy-on-write, so forking is O(1).
#[derive(Clone, Default)]
pub struct Store {
    memo: PMap<MemoKey, Rc<Trace>>,
    processes: PMap<Address, ProcessState>,
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn memo_get(&self, key: &MemoKey) -> Option<&Rc<Trace>> {
        self.memo.get(key)
    }

    pub fn memo_insert(&mut self, key: MemoKey, trace: Rc<Trace>) {
        self.memo.insert(key, trace);
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    pub fn memo_entries(&self) -> impl Iterator<Item = (&MemoKey, &Rc<Trace>)> {
        self.memo.iter()
    }

    /// The process with its current state: exchangeable processes take the
    /// state recorded here, if any.
    pub fn current(&self, sp: &StochasticProcess) -> StochasticProcess {
        match sp.id() {
            Some(id) if sp.is_exchangeable() => match self.processes.get(id) {
                Some(state) => sp.with_state(state.clone()),
                None => sp.clone(),
            },
            _ => sp.clone(),
        }
    }

    /// Records the successor of an exchangeable process.
    pub fn update(&mut self, successor: &StochasticProcess) {
        if let (Some(id), true) = (successor.id(), successor.is_exchangeable()) {
            self.processes.insert(id.clone(), successor.state().clone());
        }
    }

    pub fn process_state(&self, id: &Address) -> Option<&ProcessState> {
        self.processes.get(id)
    }

    /// True when both stores share their backing maps.
    pub fn ptr_eq(&self, other: &Store) -> bool {
        self.memo.ptr_eq(&other.memo) && self.processes.ptr_eq(&other.processes)
    }
}
