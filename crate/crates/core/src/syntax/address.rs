//! Evaluation addresses.
//!
//! Every evaluation is identified by the path of `(tag, position)` steps that
//! leads to it from the top-level statement it belongs to. Addresses are
//! persistent linked paths: extending one allocates a single node and shares the
//! parent, so sibling evaluations share their common prefix.

use alloc::rc::Rc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::hash::{Hash, Hasher};

/// Kind of the parent form an address step descends through.
///
/// The declaration order matters: it makes the lexicographic address order agree
/// with evaluation order (operator `a` before primitive operands `p`, arguments
/// before the procedure body `b`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    /// Operator and compound-procedure arguments.
    Apply,
    /// Compound procedure body.
    Body,
    /// Predicate and branches of an `if`.
    If,
    Lambda,
    /// Stochastic argument of an `observe`.
    Observe,
    /// Primitive operands and vector literal elements.
    Primitive,
    Quote,
    /// Stochastic argument of a `sample`.
    Sample,
}

impl Tag {
    pub const ALL: [Tag; 8] = [
        Tag::Apply,
        Tag::Body,
        Tag::If,
        Tag::Lambda,
        Tag::Observe,
        Tag::Primitive,
        Tag::Quote,
        Tag::Sample,
    ];

    pub fn code(self) -> char {
        match self {
            Tag::Apply => 'a',
            Tag::Body => 'b',
            Tag::If => 'i',
            Tag::Lambda => 'l',
            Tag::Observe => 'o',
            Tag::Primitive => 'p',
            Tag::Quote => 'q',
            Tag::Sample => 's',
        }
    }

    pub fn from_code(code: char) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.code() == code)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Step {
    Statement(u32),
    Sub(Tag, u32),
}

struct Node {
    parent: Option<Address>,
    step: Step,
    depth: u32,
    statement: u32,
    hash: u64,
}

/// A run-time evaluation address rooted at a top-level statement ordinal.
#[derive(Clone)]
pub struct Address(Rc<Node>);

fn mix(h: u64, v: u64) -> u64 {
    let mut z = (h ^ v).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Address {
    /// Root address of the statement with the given ordinal.
    pub fn statement(ordinal: u32) -> Address {
        Address(Rc::new(Node {
            parent: None,
            step: Step::Statement(ordinal),
            depth: 0,
            statement: ordinal,
            hash: mix(0x5157_a7e3, ordinal as u64),
        }))
    }

    /// Child address `self::(tag, position)`.
    pub fn extend(&self, tag: Tag, position: u32) -> Address {
        let code = ((tag as u64) << 32) | position as u64;
        Address(Rc::new(Node {
            parent: Some(self.clone()),
            step: Step::Sub(tag, position),
            depth: self.0.depth + 1,
            statement: self.0.statement,
            hash: mix(self.0.hash, code),
        }))
    }

    /// Ordinal of the top-level statement this address belongs to.
    pub fn statement_ordinal(&self) -> u32 {
        self.0.statement
    }

    /// Number of `(tag, position)` steps below the statement root.
    pub fn depth(&self) -> usize {
        self.0.depth as usize
    }

    pub fn parent(&self) -> Option<&Address> {
        self.0.parent.as_ref()
    }

    /// Last step of the path, `None` for a statement root.
    pub fn last(&self) -> Option<(Tag, u32)> {
        match self.0.step {
            Step::Statement(_) => None,
            Step::Sub(tag, pos) => Some((tag, pos)),
        }
    }

    /// Steps from the root downwards.
    pub fn path(&self) -> Vec<(Tag, u32)> {
        let mut out = Vec::with_capacity(self.depth());
        let mut cur = self;
        while let Some((tag, pos)) = cur.last() {
            out.push((tag, pos));
            cur = cur.parent().expect("non-root address has a parent");
        }
        out.reverse();
        out
    }

    fn ancestor_at(&self, depth: u32) -> &Address {
        let mut cur = self;
        while cur.0.depth > depth {
            cur = cur.0.parent.as_ref().expect("depth bookkeeping");
        }
        cur
    }

    /// True when `prefix` equals this address or one of its ancestors.
    pub fn starts_with(&self, prefix: &Address) -> bool {
        self.0.depth >= prefix.0.depth && self.ancestor_at(prefix.0.depth) == prefix
    }

    fn cmp_same_depth(a: &Address, b: &Address) -> Ordering {
        if Rc::ptr_eq(&a.0, &b.0) {
            return Ordering::Equal;
        }
        let up = match (&a.0.parent, &b.0.parent) {
            (Some(pa), Some(pb)) => Address::cmp_same_depth(pa, pb),
            _ => Ordering::Equal,
        };
        up.then_with(|| a.0.step.cmp(&b.0.step))
    }
}

impl PartialEq for Address {
    fn eq(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
            || (self.0.hash == other.0.hash
                && self.0.depth == other.0.depth
                && Address::cmp_same_depth(self, other) == Ordering::Equal)
    }
}

impl Eq for Address {}

impl Ord for Address {
    fn cmp(&self, other: &Self) -> Ordering {
        let (da, db) = (self.0.depth, other.0.depth);
        match da.cmp(&db) {
            Ordering::Equal => Address::cmp_same_depth(self, other),
            Ordering::Greater => {
                Address::cmp_same_depth(self.ancestor_at(db), other).then(Ordering::Greater)
            }
            Ordering::Less => {
                Address::cmp_same_depth(self, other.ancestor_at(da)).then(Ordering::Less)
            }
        }
    }
}

impl PartialOrd for Address {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Hash for Address {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.statement)?;
        for (tag, pos) in self.path() {
            write!(f, "/{}{}", tag.code(), pos)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}
