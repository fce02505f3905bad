//! Static oracle: gold joint parse to transition sequence.
//!
//! The oracle simulates the parser left to right and at each step takes the
//! first legal transition consistent with the gold parse, in the priority
//! order S-Left, S-Right, S-Reduce, S-Shift for syntax and M-Pred, M-Self,
//! M-Left, M-Right, M-Swap, M-Reduce, M-Shift for semantics. Crossing
//! semantic arcs are recovered only when a single swap of the top two
//! semantic stack items exposes the needed item; otherwise the sequence is
//! flagged as inexact.

mod projective;

use std::collections::HashMap;

pub use projective::{deprojectivize, is_projective, projectivize, Lift};

use crate::corpus::{Sentence, ROOT};
use crate::error::{Error, Result};
use crate::state::{transition_cap, Mode, ParserState, Phase, Symbolic};
use crate::transition::{Transition, TransitionKind as K};

/// Gold annotation indexed for oracle queries.
#[derive(Clone, Debug)]
pub struct GoldParse {
    n: usize,
    heads: Vec<Option<(usize, String)>>,
    children: Vec<Vec<usize>>,
    sem: HashMap<(usize, usize), String>,
    partners: Vec<Vec<usize>>,
    senses: Vec<Option<String>>,
}

impl GoldParse {
    pub fn new(sentence: &Sentence) -> Self {
        let n = sentence.len();
        let mut heads = vec![None; n + 1];
        let mut children = vec![Vec::new(); n + 1];
        for arc in &sentence.syn_arcs {
            heads[arc.dep] = Some((arc.head, arc.label.clone()));
            children[arc.head].push(arc.dep);
        }
        let mut sem = HashMap::new();
        let mut partners = vec![Vec::new(); n + 1];
        for arc in &sentence.sem_arcs {
            sem.insert((arc.pred, arc.arg), arc.role.clone());
            if arc.pred != arc.arg {
                partners[arc.pred].push(arc.arg);
                partners[arc.arg].push(arc.pred);
            }
        }
        let mut senses = vec![None; n + 1];
        for t in &sentence.tokens {
            senses[t.index] = t.sense.clone();
        }
        GoldParse {
            n,
            heads,
            children,
            sem,
            partners,
            senses,
        }
    }

    /// Linear position with the root after the last token.
    fn position(&self, token: usize) -> usize {
        if token == ROOT {
            self.n + 1
        } else {
            token
        }
    }

    fn head(&self, dep: usize) -> Option<(usize, &str)> {
        self.heads
            .get(dep)
            .and_then(|h| h.as_ref().map(|(h, l)| (*h, l.as_str())))
    }

    fn role(&self, pred: usize, arg: usize) -> Option<&str> {
        self.sem.get(&(pred, arg)).map(String::as_str)
    }

    fn pending_syn<R>(&self, state: &ParserState<R>, u: usize, from: usize) -> bool {
        u != ROOT
            && self.children[u]
                .iter()
                .any(|&d| self.position(d) >= from && state.syn_head(d).is_none())
    }

    fn missing_sem<R>(&self, state: &ParserState<R>, a: usize, b: usize) -> bool {
        (self.sem.contains_key(&(a, b)) && !state.has_sem_arc(a, b))
            || (self.sem.contains_key(&(b, a)) && !state.has_sem_arc(b, a))
    }

    fn pending_sem<R>(&self, state: &ParserState<R>, u: usize, from: usize) -> bool {
        u != ROOT
            && self.partners[u]
                .iter()
                .any(|&x| self.position(x) >= from && self.missing_sem(state, u, x))
    }
}

/// Next syntactic transition for `state` under `gold`.
pub fn next_syntactic<R: Clone>(state: &ParserState<R>, gold: &GoldParse) -> Result<Transition> {
    let front = state.front();
    let top = state.syn_top();
    if let (Some(u), Some(v)) = (top, front) {
        if let Some((h, label)) = gold.head(u) {
            if h == v && state.is_allowed(K::SLeft) {
                return Ok(Transition::SLeft(label.to_owned()));
            }
        }
        if let Some((h, label)) = gold.head(v) {
            if h == u && state.is_allowed(K::SRight) {
                return Ok(Transition::SRight(label.to_owned()));
            }
        }
    }
    if let Some(u) = top {
        let from = front.map_or(gold.n + 2, |v| gold.position(v));
        if !gold.pending_syn(state, u, from) && state.is_allowed(K::SReduce) {
            return Ok(Transition::SReduce);
        }
    }
    if state.is_allowed(K::SShift) {
        return Ok(Transition::SShift);
    }
    if state.is_allowed(K::SReduce) {
        return Ok(Transition::SReduce);
    }
    if state.is_allowed(K::SLeft) {
        let label = top
            .and_then(|u| gold.head(u))
            .map_or("dep", |(_, l)| l)
            .to_owned();
        return Ok(Transition::SLeft(label));
    }
    Err(Error::Deadlock(format!(
        "oracle found no syntactic transition; allowed {:?}",
        state.allowed()
    )))
}

/// Next semantic transition for `state` under `gold`.
pub fn next_semantic<R: Clone>(state: &ParserState<R>, gold: &GoldParse) -> Result<Transition> {
    let front = state.front();
    if let Some(v) = front.filter(|&v| v != ROOT) {
        if let Some(sense) = &gold.senses[v] {
            if state.sense(v).is_none() && state.is_allowed(K::MPred) {
                return Ok(Transition::MPred(sense.clone()));
            }
        }
        if let Some(role) = gold.role(v, v) {
            if !state.has_sem_arc(v, v) && state.is_allowed(K::MSelf) {
                return Ok(Transition::MSelf(role.to_owned()));
            }
        }
    }
    if let Some(u) = state.sem_top() {
        if let Some(v) = front {
            if let Some(role) = gold.role(v, u) {
                if !state.has_sem_arc(v, u) && state.is_allowed(K::MLeft) {
                    return Ok(Transition::MLeft(role.to_owned()));
                }
            }
            if let Some(role) = gold.role(u, v) {
                if !state.has_sem_arc(u, v) && state.is_allowed(K::MRight) {
                    return Ok(Transition::MRight(role.to_owned()));
                }
            }
        }
        let from = front.map_or(gold.n + 2, |v| gold.position(v));
        let reducible = !gold.pending_sem(state, u, from);
        if !reducible {
            if let (Some(w), Some(v)) = (state.sem_second(), front) {
                if gold.missing_sem(state, w, v) && state.is_allowed(K::MSwap) {
                    return Ok(Transition::MSwap);
                }
            }
        }
        if reducible && state.is_allowed(K::MReduce) {
            return Ok(Transition::MReduce);
        }
    }
    if state.is_allowed(K::MShift) {
        return Ok(Transition::MShift);
    }
    if state.is_allowed(K::MReduce) {
        return Ok(Transition::MReduce);
    }
    Err(Error::Deadlock(format!(
        "oracle found no semantic transition; allowed {:?}",
        state.allowed()
    )))
}

/// Next transition in whichever phase and mode `state` is in.
pub fn next_transition<R: Clone>(state: &ParserState<R>, gold: &GoldParse) -> Result<Transition> {
    let syntactic = match state.mode() {
        Mode::SyntaxOnly => true,
        Mode::SemanticsOnly => false,
        Mode::Joint | Mode::Hybrid => state.phase() == Phase::Syntactic,
    };
    if syntactic {
        next_syntactic(state, gold)
    } else {
        next_semantic(state, gold)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleOutput {
    pub transitions: Vec<Transition>,
    /// Whether replaying the transitions reproduces the gold parse.
    pub exact: bool,
}

/// Converts a gold sentence (with projective syntax) into the transition
/// sequence that builds it. Predicates are the gold-marked tokens.
pub fn to_transitions(sentence: &Sentence, mode: Mode) -> Result<OracleOutput> {
    let gold = GoldParse::new(sentence);
    let n = sentence.len();
    let mut state = ParserState::new(n, &sentence.predicate_mask(), mode, &mut Symbolic);
    let cap = transition_cap(n);
    while !state.is_terminal() {
        if state.history().len() >= cap {
            return Err(Error::TransitionCap { cap, tokens: n });
        }
        let t = next_transition(&state, &gold)?;
        state.apply(t, &mut Symbolic)?;
    }
    let exact = recovers(&state, sentence, mode);
    Ok(OracleOutput {
        transitions: state.history().to_vec(),
        exact,
    })
}

fn recovers(state: &ParserState<()>, gold: &Sentence, mode: Mode) -> bool {
    if mode.has_syntax() && state.syn_arcs() != gold.syn_arcs {
        return false;
    }
    if mode.has_semantics() {
        let arcs: std::collections::BTreeSet<_> = state.sem_arcs().iter().cloned().collect();
        if arcs != gold.sem_arcs {
            return false;
        }
        if gold
            .tokens
            .iter()
            .any(|t| t.sense.is_some() && state.sense(t.index) != t.sense.as_deref())
        {
            return false;
        }
    }
    true
}

/// Replays `transitions` from the initial state of `sentence`.
pub fn replay(sentence: &Sentence, mode: Mode, transitions: &[Transition]) -> Result<ParserState<()>> {
    let mut state = ParserState::new(sentence.len(), &sentence.predicate_mask(), mode, &mut Symbolic);
    for t in transitions {
        state.apply(t.clone(), &mut Symbolic)?;
    }
    Ok(state)
}

/// The sentence a terminal (or partial) state encodes, with the tokens of
/// `sentence` and the arcs and senses built so far.
pub fn recovered_parse<R>(sentence: &Sentence, state: &ParserState<R>) -> Sentence {
    let mut out = sentence.unannotated();
    out.syn_arcs = state.syn_arcs();
    out.sem_arcs = state.sem_arcs().iter().cloned().collect();
    for t in &mut out.tokens {
        if let Some(s) = state.sense(t.index) {
            t.is_predicate = true;
            t.sense = Some(s.to_owned());
        } else if sentence.token(t.index).is_predicate {
            t.is_predicate = true;
        }
    }
    out
}

/// One dump block: a transition per line.
pub fn format_transitions(transitions: &[Transition]) -> String {
    let mut out = String::new();
    for t in transitions {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

/// Parses a dump of blank-line separated blocks.
pub fn parse_transitions(text: &str) -> Result<Vec<Vec<Transition>>> {
    let mut blocks = Vec::new();
    let mut cur = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            if !cur.is_empty() {
                blocks.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(line.parse()?);
        }
    }
    if !cur.is_empty() {
        blocks.push(cur);
    }
    Ok(blocks)
}

/// Step-by-step trace: the initial row followed by one row per transition.
pub fn trace(sentence: &Sentence, mode: Mode, transitions: &[Transition]) -> Result<Vec<String>> {
    let forms: Vec<String> = std::iter::once("root".to_owned())
        .chain(sentence.tokens.iter().map(|t| t.form.clone()))
        .collect();
    let mut state = ParserState::new(sentence.len(), &sentence.predicate_mask(), mode, &mut Symbolic);
    let mut rows = vec![state.trace_row(&forms)];
    for t in transitions {
        state.apply(t.clone(), &mut Symbolic)?;
        rows.push(state.trace_row(&forms));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_conll_str, Format, SemArc, SynArc, Token};

    const EXAMPLE: &str = include_str!("../../tests/fixtures/example.conll09");
    const EXAMPLE_TRANSITIONS: &str = include_str!("../../tests/fixtures/example.transitions");

    fn example() -> Sentence {
        read_conll_str(EXAMPLE, Format::Conll2009).unwrap().remove(0)
    }

    #[test]
    fn example_yields_printed_sequence() {
        let out = to_transitions(&example(), Mode::Joint).unwrap();
        let expected = parse_transitions(EXAMPLE_TRANSITIONS).unwrap().remove(0);
        assert_eq!(out.transitions, expected);
        assert_eq!(out.transitions.len(), 32);
        assert!(out.exact);
    }

    #[test]
    fn example_is_projective() {
        let s = example();
        assert!(is_projective(&s));
        assert_eq!(deprojectivize(&s), s);
    }

    #[test]
    fn self_arc_uses_m_self() {
        // "the problem persists": problem.01 fills its own A2 role
        let mut s = Sentence::new(vec![
            Token::new(1, "the", "the", "DT"),
            Token::new(2, "problem", "problem", "NN").with_sense("problem.01"),
            Token::new(3, "persists", "persist", "VBZ").with_sense("persist.01"),
        ]);
        s.syn_arcs = [
            SynArc::new(2, 1, "nmod"),
            SynArc::new(3, 2, "sbj"),
            SynArc::new(0, 3, "root"),
        ]
        .into();
        s.sem_arcs = [SemArc::new(2, 2, "A2"), SemArc::new(3, 2, "A1")].into();
        let out = to_transitions(&s, Mode::Joint).unwrap();
        assert!(out.transitions.contains(&Transition::MSelf("A2".into())));
        assert!(out.exact);
    }

    #[test]
    fn single_swap_crossing_is_exact() {
        // arcs 1->3 and 2->4 cross; when 3 is at the front, 2 still waits
        // for 4, so 1 must be swapped above it.
        let mut s = Sentence::new(vec![
            Token::new(1, "a", "a", "V").with_sense("a.01"),
            Token::new(2, "b", "b", "V").with_sense("b.01"),
            Token::new(3, "c", "c", "N"),
            Token::new(4, "d", "d", "N"),
        ]);
        s.syn_arcs = [
            SynArc::new(0, 1, "root"),
            SynArc::new(1, 2, "x"),
            SynArc::new(2, 3, "x"),
            SynArc::new(3, 4, "x"),
        ]
        .into();
        s.sem_arcs = [SemArc::new(1, 3, "A0"), SemArc::new(2, 4, "A1")].into();
        let out = to_transitions(&s, Mode::Joint).unwrap();
        assert!(out.transitions.contains(&Transition::MSwap));
        assert!(out.exact);
        let state = replay(&s, Mode::Joint, &out.transitions).unwrap();
        assert_eq!(recovered_parse(&s, &state), s);
    }

    #[test]
    fn deep_crossing_is_flagged() {
        // 1->4 with both 2 and 3 waiting for 5 above it
        let mut s = Sentence::new(vec![
            Token::new(1, "a", "a", "V").with_sense("a.01"),
            Token::new(2, "b", "b", "V").with_sense("b.01"),
            Token::new(3, "c", "c", "V").with_sense("c.01"),
            Token::new(4, "d", "d", "N"),
            Token::new(5, "e", "e", "N"),
        ]);
        s.syn_arcs = (1..=5).map(|d| SynArc::new(d - 1, d, "x")).collect();
        s.sem_arcs = [
            SemArc::new(1, 4, "A0"),
            SemArc::new(2, 5, "A1"),
            SemArc::new(3, 5, "A1"),
        ]
        .into();
        let out = to_transitions(&s, Mode::Joint).unwrap();
        assert!(!out.exact);
        let state = replay(&s, Mode::Joint, &out.transitions).unwrap();
        assert!(state.is_terminal());
    }

    #[test]
    fn deterministic() {
        let a = to_transitions(&example(), Mode::Joint).unwrap();
        let b = to_transitions(&example(), Mode::Joint).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_mode_sequences() {
        let s = example();
        let syn = to_transitions(&s, Mode::SyntaxOnly).unwrap();
        assert!(syn.exact);
        assert!(syn.transitions.iter().all(|t| t.kind().is_syntactic()));
        let sem = to_transitions(&s, Mode::SemanticsOnly).unwrap();
        assert!(sem.exact);
        assert!(sem.transitions.iter().all(|t| !t.kind().is_syntactic()));
    }

    #[test]
    fn dump_round_trip() {
        let out = to_transitions(&example(), Mode::Joint).unwrap();
        let text = format_transitions(&out.transitions) + "\n" + &format_transitions(&out.transitions);
        let blocks = parse_transitions(&text).unwrap();
        assert_eq!(blocks, vec![out.transitions.clone(), out.transitions]);
    }
}
