//! Group elements in canonical form.
//!
//! Each context kind has one canonical representation per element, so equality
//! and hashing are structural: lattice points as coordinate vectors, free
//! group elements as freely reduced words, Heisenberg elements as upper
//! triangular matrix coordinates, lamplighter elements as (sorted lit-lamp
//! set, head), graph vertices as ids.

use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

use crate::rng::StableHasher;

pub type Coords = SmallVec<[i64; 4]>;
///// Letters of a reduced word: generator i is `i+1`, its inverse `-(i+1)`.
pub type Word = SmallVec<[i8; 16]>;
pub type Lamps = SmallVec<[i64; 4]>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GroupElement {
    Lattice(Coords),
    Free(Word),
    /// Matrix coordinates: (a, b, c) is the unitriangular matrix with a above
    /// the diagonal left, b right, c in the corner. Product rule
    /// (a1,b1,c1)(a2,b2,c2) = (a1+a2, b1+b2, c1+c2+a1*b2).
    Heisenberg {
        a: i64,
        b: i64,
        c: i64,
    },
    /// `lamps` is strictly increasing.
    Lamplighter {
        head: i64,
        lamps: Lamps,
    },
    Vertex(u64),
    /// Canopy vertex: `node` is a heap index (1 = the spine vertex x_spine,
    /// children 2m and 2m+1) into the binary tree hanging at x_spine.
    Canopy {
        spine: u16,
        node: u64,
    },
}

/// Order key for a signed integer: 0, +1, -1, +2, -2, ... so that ties between
/// g and g^-1 resolve to the "positive" representative first.
#[inline]
fn sign_key(x: i64) -> u64 {
    let m = x.unsigned_abs() << 1;
    if x < 0 {
        m | 1
    } else {
        m
    }
}

/// Order key for a word letter: a < A < b < B < ...
#[inline]
fn letter_key(l: i8) -> u8 {
    let idx = (l.unsigned_abs() - 1) << 1;
    if l < 0 {
        idx | 1
    } else {
        idx
    }
}

fn cmp_keyed_ints(a: &[i64], b: &[i64]) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match sign_key(*x).cmp(&sign_key(*y)) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

impl GroupElement {
    fn rank(&self) -> u8 {
        match self {
            GroupElement::Lattice(_) => 0,
            GroupElement::Free(_) => 1,
            GroupElement::Heisenberg { .. } => 2,
            GroupElement::Lamplighter { .. } => 3,
            GroupElement::Vertex(_) => 4,
            GroupElement::Canopy { .. } => 5,
        }
    }

    /// Stable 64-bit identity, independent of process and platform.
    pub fn stable_hash(&self) -> u64 {
        let mut h = StableHasher::new();
        h.write_u8(self.rank());
        match self {
            GroupElement::Lattice(c) => {
                for x in c {
                    h.write_i64(*x);
                }
            }
            GroupElement::Free(w) => {
                for l in w {
                    h.write_u8(*l as u8);
                }
                h.write_u8(0x80); // length terminator, letters are never 0x80
            }
            GroupElement::Heisenberg { a, b, c } => {
                h.write_i64(*a);
                h.write_i64(*b);
                h.write_i64(*c);
            }
            GroupElement::Lamplighter { head, lamps } => {
                h.write_i64(*head);
                for l in lamps {
                    h.write_i64(*l);
                }
            }
            GroupElement::Vertex(v) => h.write_u64(*v),
            GroupElement::Canopy { spine, node } => {
                h.write_u64(*spine as u64);
                h.write_u64(*node);
            }
        }
        h.finish()
    }
}

impl Ord for GroupElement {
    /// Canonical order. Within a kind: lattice and Heisenberg compare
    /// component-wise with positives before negatives of equal magnitude
    /// (so the tie {+1, -1} on the line resolves to +1); free words compare by
    /// length then a < A < b < B; lamplighter by lamp count, head, lamps;
    /// graph vertices by id.
    fn cmp(&self, other: &Self) -> Ordering {
        use GroupElement::*;
        match (self, other) {
            (Lattice(a), Lattice(b)) => cmp_keyed_ints(a, b),
            (Free(a), Free(b)) => a.len().cmp(&b.len()).then_with(|| {
                a.iter()
                    .map(|l| letter_key(*l))
                    .cmp(b.iter().map(|l| letter_key(*l)))
            }),
            (
                Heisenberg { a, b, c },
                Heisenberg {
                    a: a2,
                    b: b2,
                    c: c2,
                },
            ) => cmp_keyed_ints(&[*a, *b, *c], &[*a2, *b2, *c2]),
            (
                Lamplighter { head, lamps },
                Lamplighter {
                    head: h2,
                    lamps: l2,
                },
            ) => lamps
                .len()
                .cmp(&l2.len())
                .then_with(|| sign_key(*head).cmp(&sign_key(*h2)))
                .then_with(|| cmp_keyed_ints(lamps, l2)),
            (Vertex(a), Vertex(b)) => a.cmp(b),
            (
                Canopy { spine, node },
                Canopy {
                    spine: s2,
                    node: n2,
                },
            ) => spine.cmp(s2).then_with(|| node.cmp(n2)),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn write_letter(f: &mut fmt::Formatter<'_>, l: i8) -> fmt::Result {
    let base = b'a' + (l.unsigned_abs() - 1);
    let ch = if l < 0 {
        (base as char).to_ascii_uppercase()
    } else {
        base as char
    };
    write!(f, "{ch}")
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Lattice(c) => {
                for (i, x) in c.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
            GroupElement::Free(w) => {
                if w.is_empty() {
                    write!(f, "e")
                } else {
                    for l in w {
                        write_letter(f, *l)?;
                    }
                    Ok(())
                }
            }
            GroupElement::Heisenberg { a, b, c } => write!(f, "{a},{b},{c}"),
            GroupElement::Lamplighter { head, lamps } => {
                write!(f, "{head}|")?;
                for (i, l) in lamps.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{l}")?;
                }
                Ok(())
            }
            GroupElement::Vertex(v) => write!(f, "{v}"),
            GroupElement::Canopy { spine, node } => write!(f, "{spine}.{node}"),
        }
    }
}
