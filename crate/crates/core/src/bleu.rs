//! Corpus-level BLEU with a shortest-reference brevity penalty and no smoothing.

use std::collections::HashMap;

use crate::error::{Error, Result};

fn ngrams(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for g in toks.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

fn tokenize(s: &str, fold: bool) -> Vec<String> {
    s.split_whitespace()
        .map(|t| if fold { t.to_lowercase() } else { t.to_string() })
        .collect()
}

/// BLEU in `[0, 1]` over whitespace-tokenized segments; `refs[i]` holds the references of
/// `hyps[i]`.
pub fn bleu<H, R>(hyps: &[H], refs: &[Vec<R>], max_n: usize, case_insensitive: bool) -> Result<f64>
where
    H: AsRef<str>,
    R: AsRef<str>,
{
    if hyps.is_empty() {
        return Err(Error::Empty("hypotheses"));
    }
    if hyps.len() != refs.len() {
        return Err(Error::Dimension {
            expected: hyps.len(),
            found: refs.len(),
        });
    }
    if max_n == 0 {
        return Err(Error::Config("max n-gram order must be >= 1".into()));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rs) in hyps.iter().zip(refs) {
        if rs.is_empty() {
            return Err(Error::Empty("reference set"));
        }
        let h = tokenize(h.as_ref(), case_insensitive);
        let rs: Vec<Vec<String>> = rs.iter().map(|x| tokenize(x.as_ref(), case_insensitive)).collect();
        c += h.len();
        r += rs.iter().map(Vec::len).min().unwrap_or(0);
        for n in 1..=max_n {
            let hg = ngrams(&h, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for rt in &rs {
                for (g, k) in ngrams(rt, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in &hg {
                matched[n - 1] += (*k).min(max_ref.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / max_n as f64;
    let bp = (1.0 - r as f64 / c as f64).min(0.0);
    Ok((log_p + bp).exp())
}
