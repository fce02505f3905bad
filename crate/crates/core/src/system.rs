//! Legality and state-update rules for the joint transitions.

use crate::corpus::{SemArc, ROOT};
use crate::error::{Error, Result};
use crate::state::{Created, Fragment, Layer, Mode, ParserState, Phase, Representation, StackId};
use crate::transition::{Constraint, Transition, TransitionKind};

impl<R: Clone> ParserState<R> {
    /// Checks whether a transition of `kind` may be taken. Parameters never
    /// affect legality.
    pub fn check(&self, kind: TransitionKind) -> std::result::Result<(), Constraint> {
        use Constraint as C;
        use TransitionKind as K;

        if self.is_terminal() {
            return Err(C::Terminal);
        }
        match self.mode {
            Mode::SyntaxOnly if !kind.is_syntactic() => return Err(C::DisabledInMode),
            Mode::SemanticsOnly if kind.is_syntactic() => return Err(C::DisabledInMode),
            Mode::Joint | Mode::Hybrid => {
                let phase_ok = match self.phase {
                    Phase::Syntactic => kind.is_syntactic(),
                    Phase::Semantic => !kind.is_syntactic(),
                };
                if !phase_ok {
                    return Err(C::WrongPhase);
                }
            }
            _ => {}
        }
        let front = self.front();
        if front.is_none() && !matches!(kind, K::SReduce | K::MReduce | K::MSwap) {
            return Err(C::BufferExhausted);
        }
        let front = || front.ok_or(C::EmptyBuffer);
        let syn_top = || self.syn_top().ok_or(C::EmptySyntacticStack);
        let sem_top = || self.sem_top().ok_or(C::EmptySemanticStack);
        let not_root = |t: usize| if t == ROOT { Err(C::RootRestriction) } else { Ok(()) };
        let predicate = |t: usize| {
            if self.eligible[t] {
                Ok(())
            } else {
                Err(C::NotPredicate)
            }
        };
        let fresh_sem = |h: usize, d: usize| {
            if self.sem_pairs.contains(&(h, d)) {
                Err(C::DuplicateDependency)
            } else {
                Ok(())
            }
        };

        match kind {
            K::SShift => {
                if front()? == ROOT && !self.syn.is_empty() {
                    return Err(C::StackNotEmptyForRoot);
                }
            }
            K::SReduce => {
                let u = syn_top()?;
                not_root(u)?;
                if self.syn_heads[u].is_none() {
                    return Err(C::NoHead);
                }
            }
            K::SRight => {
                let v = front()?;
                let u = syn_top()?;
                not_root(v)?;
                not_root(u)?;
                if self.syn_heads[v].is_some() {
                    return Err(C::DuplicateDependency);
                }
            }
            K::SLeft => {
                front()?;
                let u = syn_top()?;
                not_root(u)?;
                if self.syn_heads[u].is_some() {
                    return Err(C::AlreadyHasHead);
                }
            }
            K::MShift => {
                if front()? == ROOT && !self.sem.is_empty() {
                    return Err(C::StackNotEmptyForRoot);
                }
            }
            K::MReduce => {
                sem_top()?;
            }
            K::MRight => {
                let v = front()?;
                let u = sem_top()?;
                not_root(v)?;
                not_root(u)?;
                predicate(u)?;
                fresh_sem(u, v)?;
            }
            K::MLeft => {
                let v = front()?;
                let u = sem_top()?;
                not_root(v)?;
                not_root(u)?;
                predicate(v)?;
                fresh_sem(v, u)?;
            }
            K::MSwap => {
                let (Some(u), Some(w)) = (self.sem_top(), self.sem_second()) else {
                    return Err(C::SemanticStackTooShort);
                };
                if let Some((a, b)) = self.last_swapped {
                    if (a, b) == (u, w) || (a, b) == (w, u) {
                        return Err(C::RepeatedSwap);
                    }
                }
            }
            K::MPred => {
                let v = front()?;
                not_root(v)?;
                predicate(v)?;
                if self.senses[v].is_some() {
                    return Err(C::DuplicatePredicate);
                }
            }
            K::MSelf => {
                let v = front()?;
                not_root(v)?;
                predicate(v)?;
                fresh_sem(v, v)?;
            }
        }
        Ok(())
    }

    /// Transition kinds allowed in this state, in canonical order.
    pub fn allowed(&self) -> Result<Vec<TransitionKind>> {
        if self.is_terminal() {
            return Err(Error::Terminal);
        }
        Ok(TransitionKind::ALL
            .into_iter()
            .filter(|&k| self.check(k).is_ok())
            .collect())
    }

    pub fn is_allowed(&self, kind: TransitionKind) -> bool {
        self.check(kind).is_ok()
    }

    /// Applies `transition`, forwarding every composition and stack update
    /// to `repr`.
    pub fn apply<P: Representation<Repr = R>>(
        &mut self,
        transition: Transition,
        repr: &mut P,
    ) -> Result<()> {
        self.check(transition.kind())
            .map_err(|constraint| Error::IllegalTransition {
                transition: transition.clone(),
                constraint,
            })?;
        let joint = matches!(self.mode, Mode::Joint | Mode::Hybrid);
        let moves = self.mode == Mode::SyntaxOnly;
        let mut created = None;
        let mut swapped = None;

        match &transition {
            Transition::SShift => {
                let v = self.front_fragment().clone();
                if moves {
                    self.pop_buffer(repr);
                }
                self.push_syn(v, repr);
                if joint {
                    self.phase = Phase::Semantic;
                }
            }
            Transition::SReduce => {
                self.pop_syn(repr);
            }
            Transition::SRight(label) => {
                let u = self.pop_syn(repr);
                let v = self.front_fragment().clone();
                let r = repr.compose_syn(&u.repr, &v.repr, label);
                self.push_syn(Fragment::attach(&u, &v, label, Layer::Syntactic, r), repr);
                if moves {
                    self.pop_buffer(repr);
                }
                self.syn_heads[v.token] = Some((u.token, label.clone()));
                created = Some(Created::RightArc {
                    left: u.token,
                    right: v.token,
                    label: label.clone(),
                    semantic: false,
                });
                self.push_syn(v, repr);
                if joint {
                    self.phase = Phase::Semantic;
                }
            }
            Transition::SLeft(label) => {
                let u = self.pop_syn(repr);
                let v = self.pop_buffer(repr);
                let r = repr.compose_syn(&v.repr, &u.repr, label);
                self.push_buffer(Fragment::attach(&v, &u, label, Layer::Syntactic, r), repr);
                self.syn_heads[u.token] = Some((v.token, label.clone()));
                created = Some(Created::LeftArc {
                    left: u.token,
                    right: v.token,
                    label: label.clone(),
                    semantic: false,
                });
            }
            Transition::MShift => {
                let v = self.pop_buffer(repr);
                repr.push(StackId::Semantic, &v.repr);
                self.sem.push(v);
                if joint {
                    self.phase = Phase::Syntactic;
                }
            }
            Transition::MReduce => {
                self.sem.pop();
                repr.pop(StackId::Semantic);
            }
            Transition::MRight(role) => {
                let u = self.sem.pop().expect("checked non-empty");
                repr.pop(StackId::Semantic);
                let v = self.front_fragment();
                let r = repr.compose_sem(&u.repr, &v.repr, role);
                let composed = Fragment::attach(&u, v, role, Layer::Semantic, r);
                let v_token = v.token;
                repr.push(StackId::Semantic, &composed.repr);
                self.sem.push(composed);
                self.add_sem(u.token, v_token, role);
                created = Some(Created::RightArc {
                    left: u.token,
                    right: v_token,
                    label: role.clone(),
                    semantic: true,
                });
            }
            Transition::MLeft(role) => {
                let v = self.pop_buffer(repr);
                let u = self.sem.last().expect("checked non-empty");
                let r = repr.compose_sem(&v.repr, &u.repr, role);
                let composed = Fragment::attach(&v, u, role, Layer::Semantic, r);
                let u_token = u.token;
                self.push_buffer(composed, repr);
                self.add_sem(v.token, u_token, role);
                created = Some(Created::LeftArc {
                    left: u_token,
                    right: v.token,
                    label: role.clone(),
                    semantic: true,
                });
            }
            Transition::MSwap => {
                let u = self.sem.pop().expect("checked length");
                let w = self.sem.pop().expect("checked length");
                repr.pop(StackId::Semantic);
                repr.pop(StackId::Semantic);
                repr.push(StackId::Semantic, &u.repr);
                repr.push(StackId::Semantic, &w.repr);
                swapped = Some((w.token, u.token));
                self.sem.push(u);
                self.sem.push(w);
            }
            Transition::MPred(sense) => {
                let v = self.pop_buffer(repr);
                let r = repr.compose_pred(&v.repr, sense);
                let tree = std::sync::Arc::new(crate::state::FragmentTree::Attach {
                    head: v.tree.clone(),
                    dep: std::sync::Arc::new(crate::state::FragmentTree::Atom(v.token)),
                    label: sense.clone(),
                    layer: Layer::Predicate,
                });
                self.senses[v.token] = Some(sense.clone());
                self.push_buffer(
                    Fragment {
                        token: v.token,
                        tree,
                        repr: r,
                    },
                    repr,
                );
            }
            Transition::MSelf(role) => {
                let v = self.pop_buffer(repr);
                let r = repr.compose_sem(&v.repr, &v.repr, role);
                let composed = Fragment::attach(&v, &v, role, Layer::Semantic, r);
                self.push_buffer(composed, repr);
                self.add_sem(v.token, v.token, role);
                created = Some(Created::SelfArc {
                    token: v.token,
                    label: role.clone(),
                });
            }
        }

        self.last_swapped = swapped;
        self.last_created = created;
        repr.record(&transition);
        self.history.push(transition);
        Ok(())
    }

    fn front_fragment(&self) -> &Fragment<R> {
        self.buffer.last().expect("checked non-empty buffer")
    }

    fn pop_buffer<P: Representation<Repr = R>>(&mut self, repr: &mut P) -> Fragment<R> {
        repr.pop(StackId::Buffer);
        self.buffer.pop().expect("checked non-empty buffer")
    }

    fn push_buffer<P: Representation<Repr = R>>(&mut self, f: Fragment<R>, repr: &mut P) {
        repr.push(StackId::Buffer, &f.repr);
        self.buffer.push(f);
    }

    fn pop_syn<P: Representation<Repr = R>>(&mut self, repr: &mut P) -> Fragment<R> {
        repr.pop(StackId::Syntactic);
        self.syn.pop().expect("checked non-empty stack")
    }

    fn push_syn<P: Representation<Repr = R>>(&mut self, f: Fragment<R>, repr: &mut P) {
        repr.push(StackId::Syntactic, &f.repr);
        self.syn.push(f);
    }

    fn add_sem(&mut self, pred: usize, arg: usize, role: &str) {
        self.sem_pairs.insert((pred, arg));
        self.sem_arcs.push(SemArc::new(pred, arg, role));
    }
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::{is_tree, Sentence, Token};
    use crate::state::{transition_cap, Symbolic};
    use TransitionKind as K;

    fn joint(n: usize, preds: &[usize]) -> ParserState<()> {
        let mut eligible = vec![false; n + 1];
        for &p in preds {
            eligible[p] = true;
        }
        ParserState::new(n, &eligible, Mode::Joint, &mut Symbolic)
    }

    fn run(state: &mut ParserState<()>, seq: &[&str]) {
        for t in seq {
            state.apply(t.parse().unwrap(), &mut Symbolic).unwrap();
        }
    }

    #[test]
    fn initial_state_allows_only_shift() {
        let s = joint(6, &[3, 5]);
        assert_eq!(s.allowed().unwrap(), vec![K::SShift]);
    }

    #[test]
    fn after_first_shift_semantic_phase() {
        let mut s = joint(6, &[3, 5]);
        run(&mut s, &["S-Shift"]);
        assert_eq!(s.phase(), Phase::Semantic);
        // "all" is not a predicate: M-Pred and M-Self need an eligible front.
        assert_eq!(s.allowed().unwrap(), vec![K::MShift]);
        let mut s = joint(6, &[1, 3, 5]);
        run(&mut s, &["S-Shift"]);
        assert_eq!(s.allowed().unwrap(), vec![K::MShift, K::MPred, K::MSelf]);
    }

    #[test]
    fn repeated_swap_rejected() {
        let mut s = joint(3, &[]);
        run(&mut s, &["S-Shift", "M-Shift", "S-Shift", "M-Shift", "S-Shift", "M-Swap"]);
        let err = s.apply(Transition::MSwap, &mut Symbolic).unwrap_err();
        assert!(matches!(
            err,
            Error::IllegalTransition { constraint: Constraint::RepeatedSwap, .. }
        ));
        // any other transition clears the record
        run(&mut s, &["M-Reduce"]);
        assert!(s.last_swapped().is_none());
    }

    #[test]
    fn one_token_sequence() {
        let mut s = joint(1, &[]);
        run(
            &mut s,
            &["S-Shift", "M-Shift", "S-Left:root", "S-Shift", "M-Reduce", "M-Shift"],
        );
        assert!(s.is_terminal());
        let arcs: Vec<_> = s.syn_arcs().into_iter().collect();
        assert_eq!(arcs, vec![crate::corpus::SynArc::new(ROOT, 1, "root")]);
        assert!(matches!(s.allowed(), Err(Error::Terminal)));
    }

    #[test]
    fn illegal_transition_names_constraint() {
        let s0 = joint(2, &[]);
        let mut s = s0.clone();
        let err = s.apply(Transition::SReduce, &mut Symbolic).unwrap_err();
        assert!(matches!(
            err,
            Error::IllegalTransition { constraint: Constraint::EmptySyntacticStack, .. }
        ));
        let err = s.apply(Transition::MShift, &mut Symbolic).unwrap_err();
        assert!(err.to_string().contains("other phase"));
    }

    #[test]
    fn syntax_only_moves_items() {
        let mut s: ParserState<()> =
            ParserState::new(2, &[false; 3], Mode::SyntaxOnly, &mut Symbolic);
        run(&mut s, &["S-Shift", "S-Right:obj"]);
        assert_eq!(s.front(), Some(ROOT));
        run(&mut s, &["S-Reduce", "S-Left:root", "S-Shift"]);
        assert!(s.is_terminal());
    }

    #[test]
    fn semantics_only_has_no_syntax() {
        let mut s: ParserState<()> =
            ParserState::new(1, &[false, true], Mode::SemanticsOnly, &mut Symbolic);
        assert_eq!(s.allowed().unwrap(), vec![K::MShift, K::MPred, K::MSelf]);
        run(&mut s, &["M-Pred:go.01", "M-Self:A1", "M-Shift", "M-Reduce", "M-Shift"]);
        assert!(s.is_terminal());
        assert!(s.syn_arcs().is_empty());
    }

    /// Random walk: takes a uniformly random allowed transition with random
    /// parameters until terminal.
    fn random_walk(rng: &mut ChaCha8Rng, n: usize, mode: Mode) -> ParserState<()> {
        let eligible: Vec<bool> = (0..=n).map(|i| i > 0 && rng.gen_bool(0.4)).collect();
        let mut s = ParserState::new(n, &eligible, mode, &mut Symbolic);
        let labels = ["a", "b"];
        while !s.is_terminal() {
            assert!(s.history().len() <= transition_cap(n), "cap exceeded");
            let allowed = s.allowed().unwrap();
            assert!(!allowed.is_empty(), "deadlock");
            // every disallowed kind is rejected by apply
            for k in TransitionKind::ALL {
                if !allowed.contains(&k) {
                    let t = Transition::from_parts(k, k.takes_parameter().then_some("x")).unwrap();
                    assert!(s.clone().apply(t, &mut Symbolic).is_err());
                }
            }
            let k = *allowed.choose(rng).unwrap();
            let p = labels.choose(rng).copied();
            let t = Transition::from_parts(k, k.takes_parameter().then_some(p.unwrap())).unwrap();
            s.apply(t, &mut Symbolic).unwrap();
        }
        s
    }

    #[test]
    fn random_walks_terminate_with_valid_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(1..=25);
            for mode in [Mode::Joint, Mode::SyntaxOnly, Mode::SemanticsOnly] {
                let s = random_walk(&mut rng, n, mode);
                if mode.has_syntax() {
                    let mut sent = Sentence::new(
                        (1..=n).map(|i| Token::new(i, "w", "w", "X")).collect(),
                    );
                    sent.syn_arcs = s.syn_arcs();
                    assert!(is_tree(&sent));
                } else {
                    assert!(s.syn_arcs().is_empty());
                }
                for a in s.sem_arcs() {
                    assert!(s.is_eligible(a.pred));
                }
            }
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..=12);
            let s = random_walk(&mut rng, n, Mode::Joint);
            let mut eligible = s.eligible.clone();
            eligible[0] = false;
            let mut r = ParserState::new(n, &eligible, Mode::Joint, &mut Symbolic);
            for t in s.history() {
                r.apply(t.clone(), &mut Symbolic).unwrap();
            }
            assert_eq!(r.syn_arcs(), s.syn_arcs());
            assert_eq!(r.sem_arcs(), s.sem_arcs());
            assert_eq!(r.senses(), s.senses());
            assert!(r.is_terminal());
        }
    }

    #[test]
    fn every_token_is_semantically_shifted_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(1..=15);
            let s = random_walk(&mut rng, n, Mode::Joint);
            let shifts = s.history().iter().filter(|t| **t == Transition::MShift).count();
            assert_eq!(shifts, n + 1);
        }
    }
}
