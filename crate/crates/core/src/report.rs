//! Check records and report rendering shared by every verifier: one record
//! per checked identity, with a machine-readable line format and a
//! human-readable text block.

use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Error => "error",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckRecord {
    pub check: String,
    pub item: String,
    pub verdict: Verdict,
    pub witness: Option<String>,
}

impl CheckRecord {
    pub fn pass(check: impl Into<String>, item: impl Into<String>) -> Self {
        CheckRecord {
            check: check.into(),
            item: item.into(),
            verdict: Verdict::Pass,
            witness: None,
        }
    }

    pub fn fail(
        check: impl Into<String>,
        item: impl Into<String>,
        witness: impl Into<String>,
    ) -> Self {
        CheckRecord {
            check: check.into(),
            item: item.into(),
            verdict: Verdict::Fail,
            witness: Some(witness.into()),
        }
    }

    pub fn error(
        check: impl Into<String>,
        item: impl Into<String>,
        witness: impl Into<String>,
    ) -> Self {
        CheckRecord {
            check: check.into(),
            item: item.into(),
            verdict: Verdict::Error,
            witness: Some(witness.into()),
        }
    }

    /// One `key=value` line; the witness is quoted since items and
    /// witnesses may contain spaces.
    pub fn record_line(&self) -> String {
        let mut line = format!(
            "check={} item=\"{}\" verdict={}",
            self.check, self.item, self.verdict
        );
        if let Some(w) = &self.witness {
            line.push_str(&format!(" witness=\"{w}\""));
        }
        line
    }
}

/// Split into digit and non-digit chunks so `e2` sorts before `e10`.
fn natural_key(s: &str) -> Vec<(String, Option<u64>)> {
    let mut key = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_ascii_digit() {
            let mut n = 0u64;
            while let Some(&d) = chars.peek() {
                if let Some(v) = d.to_digit(10) {
                    n = n.saturating_mul(10).saturating_add(v as u64);
                    chars.next();
                } else {
                    break;
                }
            }
            key.push((String::new(), Some(n)));
        } else {
            let mut chunk = String::new();
            while let Some(&d) = chars.peek() {
                if d.is_ascii_digit() {
                    break;
                }
                chunk.push(d);
                chars.next();
            }
            key.push((chunk, None));
        }
    }
    key
}

fn natural_cmp(a: &str, b: &str) -> Ordering {
    natural_key(a).cmp(&natural_key(b))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub records: Vec<CheckRecord>,
}

impl Report {
    pub fn new() -> Self {
        Report {
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, r: CheckRecord) {
        self.records.push(r);
    }

    pub fn extend(&mut self, other: Report) {
        self.records.extend(other.records);
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.verdict == Verdict::Pass)
    }

    pub fn any_error(&self) -> bool {
        self.records.iter().any(|r| r.verdict == Verdict::Error)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records
            .iter()
            .filter(|r| r.verdict != Verdict::Pass)
    }

    /// Stable deterministic order: by check name, then item, digits
    /// compared numerically.
    pub fn sorted(mut self) -> Self {
        self.records.sort_by(|a, b| {
            natural_cmp(&a.check, &b.check)
                .then_with(|| natural_cmp(&a.item, &b.item))
                .then_with(|| a.record_line().cmp(&b.record_line()))
        });
        self
    }

    pub fn record_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.record_line());
            out.push('\n');
        }
        out
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let passes = self
            .records
            .iter()
            .filter(|r| r.verdict == Verdict::Pass)
            .count();
        for r in &self.records {
            let mark = match r.verdict {
                Verdict::Pass => "ok  ",
                Verdict::Fail => "FAIL",
                Verdict::Error => "ERR ",
            };
            out.push_str(&format!("{mark} {:<24} {}", r.check, r.item));
            if let Some(w) = &r.witness {
                out.push_str(&format!("  [{w}]"));
            }
            out.push('\n');
        }
        out.push_str(&format!("{passes}/{} checks passed\n", self.records.len()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_order_sorts_indices_numerically() {
        assert_eq!(natural_cmp("e2", "e10"), Ordering::Less);
        assert_eq!(natural_cmp("e10", "e2"), Ordering::Greater);
        assert_eq!(natural_cmp("e2", "e2"), Ordering::Equal);
        assert_eq!(natural_cmp("ck-v2", "ck-v11"), Ordering::Less);
        assert_eq!(natural_cmp("alpha", "beta"), Ordering::Less);
    }

    #[test]
    fn record_lines_are_stable_and_quoted() {
        let r = CheckRecord::fail("s-domain", "e2", "basis point 5/2 depth 2");
        assert_eq!(
            r.record_line(),
            "check=s-domain item=\"e2\" verdict=fail witness=\"basis point 5/2 depth 2\""
        );
        let mut rep = Report::new();
        rep.push(CheckRecord::pass("a", "e10"));
        rep.push(CheckRecord::pass("a", "e9"));
        let rep = rep.sorted();
        assert_eq!(rep.records[0].item, "e9");
        assert!(rep.all_pass());
    }
}
