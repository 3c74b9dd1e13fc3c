use std::fmt;
use std::sync::Arc;

use super::trace::Frame;
use super::StlError;

/// Margin function of a user-registered atom. Positive means satisfied.
pub type MarginFn = Arc<dyn Fn(&Frame) -> Result<f64, StlError> + Send + Sync>;

/// How an atom computes its margin from a single state.
#[derive(Clone)]
pub enum PredicateKind {
    /// `threshold - ||pos(a) - pos(b)||_2`.
    Distance { a: String, b: String, threshold: f64 },
    Custom(MarginFn),
}

/// A named atomic proposition, satisfied iff its margin is strictly positive.
#[derive(Clone)]
pub struct Predicate {
    name: String,
    kind: PredicateKind,
}

impl Predicate {
    pub fn distance(a: impl Into<String>, b: impl Into<String>, threshold: f64) -> Self {
        let (a, b) = (a.into(), b.into());
        Predicate {
            name: format!("dist({a}, {b}) < {threshold:?}"),
            kind: PredicateKind::Distance { a, b, threshold },
        }
    }

    pub fn custom<F>(name: impl Into<String>, margin: F) -> Self
    where
        F: Fn(&Frame) -> Result<f64, StlError> + Send + Sync + 'static,
    {
        Predicate { name: name.into(), kind: PredicateKind::Custom(Arc::new(margin)) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &PredicateKind {
        &self.kind
    }

    pub fn margin(&self, frame: &Frame) -> Result<f64, StlError> {
        match &self.kind {
            PredicateKind::Distance { a, b, threshold } => {
                let pa = frame.position(a)?;
                let pb = frame.position(b)?;
                let (dx, dy) = (pa[0] - pb[0], pa[1] - pb[1]);
                Ok(threshold - (dx * dx + dy * dy).sqrt())
            }
            PredicateKind::Custom(f) => f(frame),
        }
    }
}

impl PartialEq for Predicate {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (
                PredicateKind::Distance { a, b, threshold },
                PredicateKind::Distance { a: a2, b: b2, threshold: t2 },
            ) => a == a2 && b == b2 && threshold.to_bits() == t2.to_bits(),
            (PredicateKind::Custom(_), PredicateKind::Custom(_)) => self.name == other.name,
            _ => false,
        }
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Formula of the supported fragment: true, atoms, negation, conjunction,
/// disjunction and bounded eventually over integer step windows.
#[derive(Clone, Debug, PartialEq)]
pub enum Spec {
    True,
    Atom(Predicate),
    Not(Box<Spec>),
    And(Box<Spec>, Box<Spec>),
    Or(Box<Spec>, Box<Spec>),
    Eventually { lo: usize, hi: usize, child: Box<Spec> },
}

impl Spec {
    pub fn atom(p: Predicate) -> Spec {
        Spec::Atom(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Spec) -> Spec {
        Spec::Not(Box::new(child))
    }

    pub fn and(l: Spec, r: Spec) -> Spec {
        Spec::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Spec, r: Spec) -> Spec {
        Spec::Or(Box::new(l), Box::new(r))
    }

    /// Bounded eventually over `[lo, hi]`; fails when `lo > hi`.
    pub fn eventually(lo: usize, hi: usize, child: Spec) -> Result<Spec, StlError> {
        if lo > hi {
            return Err(StlError::InvertedWindow { lo: lo as i64, hi: hi as i64, pos: None });
        }
        Ok(Spec::Eventually { lo, hi, child: Box::new(child) })
    }

    /// Number of steps past `t` the formula needs to look at.
    pub fn horizon(&self) -> usize {
        match self {
            Spec::True | Spec::Atom(_) => 0,
            Spec::Not(c) => c.horizon(),
            Spec::And(l, r) | Spec::Or(l, r) => l.horizon().max(r.horizon()),
            Spec::Eventually { hi, child, .. } => hi + child.horizon(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Spec::True | Spec::Atom(_) => 0,
            Spec::Not(c) | Spec::Eventually { child: c, .. } => 1 + c.depth(),
            Spec::And(l, r) | Spec::Or(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    fn is_binary(&self) -> bool {
        matches!(self, Spec::And(..) | Spec::Or(..))
    }
}

/// Left-folded conjunction of a nonempty list.
pub fn conjoin(specs: impl IntoIterator<Item = Spec>) -> Result<Spec, StlError> {
    let mut it = specs.into_iter();
    let first = it.next().ok_or(StlError::EmptyConjunction)?;
    Ok(it.fold(first, Spec::and))
}

struct Operand<'a>(&'a Spec);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_binary() {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spec::True => f.write_str("true"),
            Spec::Atom(p) => match &p.kind {
                PredicateKind::Distance { a, b, threshold } => {
                    write!(f, "dist({a}, {b}) < {threshold:?}")
                }
                PredicateKind::Custom(_) => f.write_str(&p.name),
            },
            Spec::Not(c) => write!(f, "not {}", Operand(c)),
            Spec::And(l, r) => write!(f, "{} and {}", Operand(l), Operand(r)),
            Spec::Or(l, r) => write!(f, "{} or {}", Operand(l), Operand(r)),
            Spec::Eventually { lo, hi, child } => write!(f, "F[{lo},{hi}] {}", Operand(child)),
        }
    }
}
