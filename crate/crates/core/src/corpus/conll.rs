use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{reaches_root, SemArc, Sentence, SynArc, Token, ROOT};
use crate::error::{Error, Result};

/// Column layout of a shared-task file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Format {
    Conll2008,
    Conll2009,
}

struct Layout {
    fixed: usize,
    form: usize,
    lemma: usize,
    pos: usize,
    head: usize,
    phead: Option<usize>,
    deprel: usize,
    pdeprel: Option<usize>,
    pred: usize,
    fillpred: Option<usize>,
}

impl Format {
    fn layout(self) -> Layout {
        match self {
            // ID FORM LEMMA GPOS PPOS SPLIT_FORM SPLIT_LEMMA PPOSS HEAD DEPREL PRED ARG*
            Format::Conll2008 => Layout {
                fixed: 11,
                form: 1,
                lemma: 2,
                pos: 4,
                head: 8,
                phead: None,
                deprel: 9,
                pdeprel: None,
                pred: 10,
                fillpred: None,
            },
            // ID FORM LEMMA PLEMMA POS PPOS FEAT PFEAT HEAD PHEAD DEPREL PDEPREL FILLPRED PRED APRED*
            Format::Conll2009 => Layout {
                fixed: 14,
                form: 1,
                lemma: 3,
                pos: 5,
                head: 8,
                phead: Some(9),
                deprel: 10,
                pdeprel: Some(11),
                pred: 13,
                fillpred: Some(12),
            },
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2008" | "conll2008" => Ok(Format::Conll2008),
            "2009" | "conll2009" => Ok(Format::Conll2009),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

pub fn read_conll(path: impl AsRef<Path>, format: Format) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path)?;
    read_conll_str(&text, format)
}

pub fn read_conll_str(text: &str, format: Format) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, Vec<&str>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !block.is_empty() {
                sentences.push(parse_block(&block, format)?);
                block.clear();
            }
            continue;
        }
        let cols: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else {
            line.split_whitespace().collect()
        };
        block.push((line_no, cols));
    }
    if !block.is_empty() {
        sentences.push(parse_block(&block, format)?);
    }
    Ok(sentences)
}

fn parse_block(rows: &[(usize, Vec<&str>)], format: Format) -> Result<Sentence> {
    let layout = format.layout();
    let n = rows.len();
    let last_line = rows.last().map(|r| r.0).unwrap_or(0);
    let n_args = rows[0].1.len().saturating_sub(layout.fixed);

    let mut tokens = Vec::with_capacity(n);
    let mut heads: Vec<Option<(usize, String)>> = Vec::with_capacity(n);
    for (pos, (line, cols)) in rows.iter().enumerate() {
        let line = *line;
        if cols.len() < layout.fixed {
            return Err(Error::Malformed {
                line,
                message: format!(
                    "expected at least {} columns, found {}",
                    layout.fixed,
                    cols.len()
                ),
            });
        }
        if cols.len() != layout.fixed + n_args {
            return Err(Error::Malformed {
                line,
                message: format!(
                    "expected {} columns like the first row of the sentence, found {}",
                    layout.fixed + n_args,
                    cols.len()
                ),
            });
        }
        let id: usize = cols[0].parse().map_err(|_| Error::Malformed {
            line,
            message: format!("token id {:?} is not a positive integer", cols[0]),
        })?;
        if id != pos + 1 {
            if id >= 1 && id <= pos {
                return Err(Error::MultipleHeads { line, token: id });
            }
            return Err(Error::Malformed {
                line,
                message: format!("expected token id {}, found {}", pos + 1, id),
            });
        }

        let head_col = pick(cols, layout.head, layout.phead);
        let label_col = pick(cols, layout.deprel, layout.pdeprel);
        let head = if head_col == "_" {
            None
        } else {
            let h: usize = head_col.parse().map_err(|_| Error::Malformed {
                line,
                message: format!("head {head_col:?} is not an integer"),
            })?;
            if h > n {
                return Err(Error::HeadOutOfRange { line, head: h, len: n });
            }
            if h == id {
                return Err(Error::Malformed {
                    line,
                    message: "token is its own syntactic head".to_owned(),
                });
            }
            Some((h, label_col.to_owned()))
        };
        heads.push(head);

        let pred_col = cols[layout.pred];
        let sense = (pred_col != "_").then(|| pred_col.to_owned());
        let is_predicate = match layout.fillpred {
            Some(c) => cols[c] == "Y",
            None => sense.is_some(),
        };
        if sense.is_some() && !is_predicate {
            return Err(Error::Malformed {
                line,
                message: "sense given for a token not marked as predicate".to_owned(),
            });
        }
        tokens.push(Token {
            index: id,
            form: cols[layout.form].to_owned(),
            lemma: cols[layout.lemma].to_owned(),
            pos: cols[layout.pos].to_owned(),
            is_predicate,
            sense,
        });
    }

    let mut sentence = Sentence::new(tokens);
    let annotated = heads.iter().filter(|h| h.is_some()).count();
    if annotated > 0 {
        if annotated != n {
            let line = rows[heads.iter().position(|h| h.is_none()).unwrap()].0;
            return Err(Error::Malformed {
                line,
                message: "missing head in an otherwise annotated sentence".to_owned(),
            });
        }
        let mut plain = vec![ROOT];
        for (d, h) in heads.into_iter().enumerate() {
            let (h, label) = h.unwrap();
            plain.push(h);
            sentence.syn_arcs.insert(SynArc { head: h, dep: d + 1, label });
        }
        if !reaches_root(&plain) {
            return Err(Error::Cycle { line: last_line });
        }
    }

    let predicates: Vec<usize> = sentence
        .tokens
        .iter()
        .filter(|t| t.is_predicate)
        .map(|t| t.index)
        .collect();
    if n_args != 0 && n_args != predicates.len() {
        return Err(Error::Malformed {
            line: rows[0].0,
            message: format!(
                "{} argument columns for {} predicates",
                n_args,
                predicates.len()
            ),
        });
    }
    for (row, (_, cols)) in rows.iter().enumerate() {
        for (k, &pred) in predicates.iter().enumerate().take(n_args) {
            let role = cols[layout.fixed + k];
            if role != "_" {
                sentence.sem_arcs.insert(SemArc {
                    pred,
                    arg: row + 1,
                    role: role.to_owned(),
                });
            }
        }
    }
    Ok(sentence)
}

fn pick<'a>(cols: &[&'a str], primary: usize, fallback: Option<usize>) -> &'a str {
    match (cols[primary], fallback) {
        ("_", Some(f)) => cols[f],
        (v, _) => v,
    }
}

pub fn write_conll(path: impl AsRef<Path>, sentences: &[Sentence], format: Format) -> Result<()> {
    fs::write(path, write_conll_string(sentences, format))?;
    Ok(())
}

pub fn write_conll_string(sentences: &[Sentence], format: Format) -> String {
    let mut out = String::new();
    for s in sentences {
        write_block(&mut out, s, format);
        out.push('\n');
    }
    out
}

fn write_block(out: &mut String, s: &Sentence, format: Format) {
    let heads = s.heads();
    let predicates: Vec<usize> = s
        .tokens
        .iter()
        .filter(|t| t.is_predicate)
        .map(|t| t.index)
        .collect();
    for t in &s.tokens {
        let (head, label) = match heads[t.index] {
            Some((h, l)) => (h.to_string(), l.to_owned()),
            None => ("_".to_owned(), "_".to_owned()),
        };
        let sense = t.sense.as_deref().unwrap_or("_");
        let mut cols: Vec<&str> = match format {
            Format::Conll2008 => vec![
                &t.form, &t.lemma, &t.pos, &t.pos, &t.form, &t.lemma, &t.pos, &head, &label, sense,
            ],
            Format::Conll2009 => vec![
                &t.form,
                &t.lemma,
                &t.lemma,
                &t.pos,
                &t.pos,
                "_",
                "_",
                &head,
                &head,
                &label,
                &label,
                if t.is_predicate { "Y" } else { "_" },
                sense,
            ],
        };
        let roles: Vec<&str> = predicates
            .iter()
            .map(|&p| {
                s.sem_arcs
                    .range(SemArc::new(p, t.index, "")..)
                    .next()
                    .filter(|a| a.pred == p && a.arg == t.index)
                    .map_or("_", |a| a.role.as_str())
            })
            .collect();
        cols.extend(roles);
        let _ = write!(out, "{}", t.index);
        for c in cols {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../../tests/fixtures/example.conll09");

    #[test]
    fn reads_joint_parse() {
        let s = &read_conll_str(EXAMPLE, Format::Conll2009).unwrap()[0];
        assert_eq!(s.len(), 6);
        assert!(s.syn_arcs.contains(&SynArc::new(2, 1, "sbj")));
        assert!(s.sem_arcs.contains(&SemArc::new(3, 1, "A1")));
        assert_eq!(s.token(3).sense.as_deref(), Some("expect.01"));
        s.validate().unwrap();
    }

    #[test]
    fn empty_input() {
        assert!(read_conll_str("", Format::Conll2009).unwrap().is_empty());
        assert_eq!(write_conll_string(&[], Format::Conll2008), "");
    }

    #[test]
    fn one_token_block() {
        let text = "1\tgo\tgo\tgo\tVB\tVB\t_\t_\t0\t0\tROOT\tROOT\t_\t_\n";
        let s = &read_conll_str(text, Format::Conll2009).unwrap()[0];
        assert_eq!(s.tokens, vec![Token::new(1, "go", "go", "VB")]);
        assert_eq!(
            s.syn_arcs.iter().cloned().collect::<Vec<_>>(),
            vec![SynArc::new(0, 1, "ROOT")]
        );
        assert!(s.sem_arcs.is_empty());
    }

    #[test]
    fn predicted_columns_are_selected() {
        let text = "1\tgoes\tgo\tgoo\tVBZ\tNN\t_\t_\t0\t0\tROOT\tROOT\t_\t_\n";
        let s = &read_conll_str(text, Format::Conll2009).unwrap()[0];
        assert_eq!(s.token(1).lemma, "goo");
        assert_eq!(s.token(1).pos, "NN");
    }

    #[test]
    fn round_trip_both_formats() {
        let sentences = read_conll_str(EXAMPLE, Format::Conll2009).unwrap();
        for format in [Format::Conll2008, Format::Conll2009] {
            let text = write_conll_string(&sentences, format);
            assert_eq!(read_conll_str(&text, format).unwrap(), sentences);
        }
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = "1\tgo\tgo\n";
        match read_conll_str(text, Format::Conll2009) {
            Err(Error::Malformed { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let text = "1\tgo\tgo\tgo\tVB\tVB\t_\t_\tx\t0\tROOT\tROOT\t_\t_\n";
        assert!(matches!(
            read_conll_str(text, Format::Conll2009),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn head_out_of_range() {
        let text = "\n\n1\tgo\tgo\tgo\tVB\tVB\t_\t_\t5\t5\tROOT\tROOT\t_\t_\n";
        assert!(matches!(
            read_conll_str(text, Format::Conll2009),
            Err(Error::HeadOutOfRange { line: 3, head: 5, .. })
        ));
    }

    #[test]
    fn duplicate_token_means_multiple_heads() {
        let text = "1\ta\ta\ta\tX\tX\t_\t_\t0\t0\tROOT\tROOT\t_\t_\n\
                    1\ta\ta\ta\tX\tX\t_\t_\t0\t0\tROOT\tROOT\t_\t_\n";
        assert!(matches!(
            read_conll_str(text, Format::Conll2009),
            Err(Error::MultipleHeads { line: 2, token: 1 })
        ));
    }

    #[test]
    fn cycle_rejected() {
        let text = "1\ta\ta\ta\tX\tX\t_\t_\t2\t2\tx\tx\t_\t_\n\
                    2\tb\tb\tb\tX\tX\t_\t_\t1\t1\tx\tx\t_\t_\n";
        assert!(matches!(
            read_conll_str(text, Format::Conll2009),
            Err(Error::Cycle { .. })
        ));
    }

    #[test]
    fn unannotated_heads_give_no_syntax() {
        let text = "1\ta\ta\ta\tX\tX\t_\t_\t_\t_\t_\t_\tY\t_\n";
        let s = &read_conll_str(text, Format::Conll2009).unwrap()[0];
        assert!(s.syn_arcs.is_empty());
        assert!(s.token(1).is_predicate);
        assert_eq!(s.token(1).sense, None);
    }
}
