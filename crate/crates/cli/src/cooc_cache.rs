//! Text snapshot of co-occurrence statistics.
//!
//! Records are emitted in sorted order so identical statistics always
//! produce identical bytes, and a reloaded cache reproduces every NPMI
//! score bit for bit.

use ntm_core::corpus::CooccurrenceStats;

use crate::CliError;

const FORMAT_LINE: &str = "cooc 1";

pub fn cooc_cache_to_string(stats: &CooccurrenceStats, vocab_hash: u64) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_LINE);
    out.push('\n');
    out.push_str(&format!("window {}\n", stats.window_size()));
    out.push_str(&format!("vocab_len {}\n", stats.vocab_len()));
    out.push_str(&format!("vocab_hash {vocab_hash:016x}\n"));
    out.push_str(&format!("total_windows {}\n", stats.total_windows()));
    let unigrams: Vec<(usize, u64)> = stats.unigrams().collect();
    out.push_str(&format!("unigrams {}\n", unigrams.len()));
    for (i, c) in unigrams {
        out.push_str(&format!("{i} {c}\n"));
    }
    let pairs: Vec<((u32, u32), u64)> = stats.pairs().collect();
    out.push_str(&format!("pairs {}\n", pairs.len()));
    for ((i, j), c) in pairs {
        out.push_str(&format!("{i} {j} {c}\n"));
    }
    out
}

fn bad(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Io(format!("co-occurrence cache line {line}: {}", msg.into()))
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    at: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), CliError> {
        let line = self.at + 1;
        let l = *self.lines.get(self.at).ok_or_else(|| bad(line, format!("missing {what}")))?;
        self.at += 1;
        Ok((line, l))
    }

    fn kv(&mut self, key: &str) -> Result<(usize, String), CliError> {
        let (n, l) = self.next(&format!("{key} line"))?;
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if k == key => Ok((n, v.to_string())),
            _ => Err(bad(n, format!("expected \"{key} <value>\", got {l:?}"))),
        }
    }
}

pub fn parse_cooc_cache(text: &str) -> Result<(CooccurrenceStats, u64), CliError> {
    let mut cur = Cursor { lines: text.lines().collect(), at: 0 };

    let (n, first) = cur.next("signature")?;
    if first.trim() != FORMAT_LINE {
        return Err(bad(n, format!("expected {FORMAT_LINE:?} signature")));
    }
    let (n, window) = cur.kv("window")?;
    let window: usize = window.parse().map_err(|_| bad(n, "bad window"))?;
    let (n, vocab_len) = cur.kv("vocab_len")?;
    let vocab_len: usize = vocab_len.parse().map_err(|_| bad(n, "bad vocab_len"))?;
    let (n, hash) = cur.kv("vocab_hash")?;
    let vocab_hash = u64::from_str_radix(&hash, 16).map_err(|_| bad(n, "bad vocab_hash"))?;
    let (n, total) = cur.kv("total_windows")?;
    let total: u64 = total.parse().map_err(|_| bad(n, "bad total_windows"))?;

    let (n, ucount) = cur.kv("unigrams")?;
    let ucount: usize = ucount.parse().map_err(|_| bad(n, "bad unigram count"))?;
    let mut unigrams = Vec::with_capacity(ucount);
    for _ in 0..ucount {
        let (n, l) = cur.next("unigram record")?;
        let mut parts = l.split_whitespace();
        let (i, c) = match (parts.next(), parts.next(), parts.next()) {
            (Some(i), Some(c), None) => (i, c),
            _ => return Err(bad(n, "expected \"<word> <count>\"")),
        };
        let i: usize = i.parse().map_err(|_| bad(n, "bad word index"))?;
        let c: u64 = c.parse().map_err(|_| bad(n, "bad count"))?;
        unigrams.push((i, c));
    }

    let (n, pcount) = cur.kv("pairs")?;
    let pcount: usize = pcount.parse().map_err(|_| bad(n, "bad pair count"))?;
    let mut pairs = Vec::with_capacity(pcount);
    for _ in 0..pcount {
        let (n, l) = cur.next("pair record")?;
        let mut parts = l.split_whitespace();
        let (i, j, c) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(i), Some(j), Some(c), None) => (i, j, c),
            _ => return Err(bad(n, "expected \"<word> <word> <count>\"")),
        };
        let i: u32 = i.parse().map_err(|_| bad(n, "bad word index"))?;
        let j: u32 = j.parse().map_err(|_| bad(n, "bad word index"))?;
        let c: u64 = c.parse().map_err(|_| bad(n, "bad count"))?;
        pairs.push(((i, j), c));
    }
    while cur.at < cur.lines.len() {
        let (n, l) = cur.next("")?;
        if !l.trim().is_empty() {
            return Err(bad(n, format!("trailing content {l:?}")));
        }
    }

    let stats = CooccurrenceStats::from_parts(window, vocab_len, total, unigrams, pairs)
        .map_err(|e| CliError::Io(format!("co-occurrence cache: {e}")))?;
    Ok((stats, vocab_hash))
}
