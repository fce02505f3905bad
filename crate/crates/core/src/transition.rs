//! The eleven joint transitions and their textual `KIND[:param]` form.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Transition kinds in canonical order. The order is used for tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransitionKind {
    SShift,
    SReduce,
    SRight,
    SLeft,
    MShift,
    MReduce,
    MRight,
    MLeft,
    MSwap,
    MPred,
    MSelf,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 11] = [
        TransitionKind::SShift,
        TransitionKind::SReduce,
        TransitionKind::SRight,
        TransitionKind::SLeft,
        TransitionKind::MShift,
        TransitionKind::MReduce,
        TransitionKind::MRight,
        TransitionKind::MLeft,
        TransitionKind::MSwap,
        TransitionKind::MPred,
        TransitionKind::MSelf,
    ];

    pub fn name(self) -> &'static str {
        use TransitionKind::*;
        match self {
            SShift => "S-Shift",
            SReduce => "S-Reduce",
            SRight => "S-Right",
            SLeft => "S-Left",
            MShift => "M-Shift",
            MReduce => "M-Reduce",
            MRight => "M-Right",
            MLeft => "M-Left",
            MSwap => "M-Swap",
            MPred => "M-Pred",
            MSelf => "M-Self",
        }
    }

    pub fn is_syntactic(self) -> bool {
        self <= TransitionKind::SLeft
    }

    pub fn takes_parameter(self) -> bool {
        use TransitionKind::*;
        matches!(self, SRight | SLeft | MRight | MLeft | MPred | MSelf)
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A transition together with its label, role or sense.
///
/// The derived ordering sorts by kind first, then parameter, which gives the
/// canonical action order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transition {
    SShift,
    SReduce,
    SRight(String),
    SLeft(String),
    MShift,
    MReduce,
    MRight(String),
    MLeft(String),
    MSwap,
    MPred(String),
    MSelf(String),
}

impl Transition {
    pub fn kind(&self) -> TransitionKind {
        use Transition::*;
        match self {
            SShift => TransitionKind::SShift,
            SReduce => TransitionKind::SReduce,
            SRight(_) => TransitionKind::SRight,
            SLeft(_) => TransitionKind::SLeft,
            MShift => TransitionKind::MShift,
            MReduce => TransitionKind::MReduce,
            MRight(_) => TransitionKind::MRight,
            MLeft(_) => TransitionKind::MLeft,
            MSwap => TransitionKind::MSwap,
            MPred(_) => TransitionKind::MPred,
            MSelf(_) => TransitionKind::MSelf,
        }
    }

    pub fn param(&self) -> Option<&str> {
        use Transition::*;
        match self {
            SRight(p) | SLeft(p) | MRight(p) | MLeft(p) | MPred(p) | MSelf(p) => Some(p),
            _ => None,
        }
    }

    /// Builds a transition of `kind`; `param` must be present exactly when
    /// the kind takes one.
    pub fn from_parts(kind: TransitionKind, param: Option<&str>) -> Result<Self, Error> {
        use TransitionKind as K;
        let p = || param.map(str::to_owned);
        let t = match (kind, kind.takes_parameter(), param) {
            (_, true, None) | (_, false, Some(_)) => None,
            (K::SShift, ..) => Some(Transition::SShift),
            (K::SReduce, ..) => Some(Transition::SReduce),
            (K::MShift, ..) => Some(Transition::MShift),
            (K::MReduce, ..) => Some(Transition::MReduce),
            (K::MSwap, ..) => Some(Transition::MSwap),
            (K::SRight, ..) => p().map(Transition::SRight),
            (K::SLeft, ..) => p().map(Transition::SLeft),
            (K::MRight, ..) => p().map(Transition::MRight),
            (K::MLeft, ..) => p().map(Transition::MLeft),
            (K::MPred, ..) => p().map(Transition::MPred),
            (K::MSelf, ..) => p().map(Transition::MSelf),
        };
        t.ok_or_else(|| {
            Error::BadTransition(match param {
                Some(p) => format!("{kind}:{p}"),
                None => kind.to_string(),
            })
        })
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.param() {
            Some(p) => write!(f, "{}:{}", self.kind(), p),
            None => write!(f, "{}", self.kind()),
        }
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let kind = TransitionKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::BadTransition(s.to_owned()))?;
        Transition::from_parts(kind, param)
    }
}

/// The rule that forbids a transition in a given state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    Terminal,
    EmptyBuffer,
    EmptySyntacticStack,
    EmptySemanticStack,
    SemanticStackTooShort,
    WrongPhase,
    DisabledInMode,
    DuplicateDependency,
    DuplicatePredicate,
    RepeatedSwap,
    AlreadyHasHead,
    NoHead,
    RootRestriction,
    NotPredicate,
    StackNotEmptyForRoot,
    BufferExhausted,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Constraint::*;
        let s = match self {
            Terminal => "the state is terminal",
            EmptyBuffer => "the buffer is empty",
            EmptySyntacticStack => "the syntactic stack is empty",
            EmptySemanticStack => "the semantic stack is empty",
            SemanticStackTooShort => "the semantic stack holds fewer than two items",
            WrongPhase => "the transition belongs to the other phase",
            DisabledInMode => "the transition is disabled in this parser mode",
            DuplicateDependency => "the dependency already exists",
            DuplicatePredicate => "the token is already a disambiguated predicate",
            RepeatedSwap => "the same pair was just swapped",
            AlreadyHasHead => "the top of the syntactic stack already has a head",
            NoHead => "the top of the syntactic stack has no head yet",
            RootRestriction => "the root cannot take part in this transition",
            NotPredicate => "the semantic head is not a predicate",
            StackNotEmptyForRoot => "the root can only be shifted onto an empty stack",
            BufferExhausted => "the buffer is empty and only reductions remain",
        };
        f.write_str(s)
    }
}
