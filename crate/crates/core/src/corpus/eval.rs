use std::collections::HashSet;

use serde::Serialize;

use super::Sentence;
use crate::error::{Error, Result};

/// Attachment and semantic scores for a predicted corpus.
///
/// Semantic precision and recall pool every `(predicate, argument, role)`
/// arc with one item per predicate sense. Sets that are empty on both sides
/// score 1.0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub las: f64,
    pub sem_precision: f64,
    pub sem_recall: f64,
    pub sem_f1: f64,
    pub macro_f1: f64,
}

#[derive(Hash, PartialEq, Eq)]
enum Item<'a> {
    Arc(usize, usize, &'a str),
    Sense(usize, &'a str),
}

fn items(s: &Sentence) -> HashSet<Item<'_>> {
    let arcs = s
        .sem_arcs
        .iter()
        .map(|a| Item::Arc(a.pred, a.arg, a.role.as_str()));
    let senses = s
        .tokens
        .iter()
        .filter_map(|t| t.sense.as_deref().map(|p| Item::Sense(t.index, p)));
    arcs.chain(senses).collect()
}

fn ratio(num: usize, den: usize, vacuous: f64) -> f64 {
    if den == 0 {
        vacuous
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(gold: &[Sentence], pred: &[Sentence]) -> Result<Metrics> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch(format!(
            "{} gold sentences, {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let (mut tokens, mut attached) = (0usize, 0usize);
    let (mut gold_items, mut pred_items, mut correct) = (0usize, 0usize, 0usize);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::LengthMismatch(format!(
                "sentence {}: {} gold tokens, {} predicted",
                i + 1,
                g.len(),
                p.len()
            )));
        }
        let gh = g.heads();
        let ph = p.heads();
        for d in 1..=g.len() {
            if let Some(gold_head) = gh[d] {
                tokens += 1;
                if ph[d] == Some(gold_head) {
                    attached += 1;
                }
            }
        }
        let gi = items(g);
        let pi = items(p);
        gold_items += gi.len();
        pred_items += pi.len();
        correct += gi.intersection(&pi).count();
    }
    let las = ratio(attached, tokens, 1.0);
    let both_empty = if gold_items == 0 { 1.0 } else { 0.0 };
    let sem_precision = ratio(correct, pred_items, both_empty);
    let sem_recall = ratio(correct, gold_items, if pred_items == 0 { 1.0 } else { 0.0 });
    let sem_f1 = if sem_precision + sem_recall == 0.0 {
        0.0
    } else {
        2.0 * sem_precision * sem_recall / (sem_precision + sem_recall)
    };
    Ok(Metrics {
        las,
        sem_precision,
        sem_recall,
        sem_f1,
        macro_f1: (las + sem_f1) / 2.0,
    })
}
