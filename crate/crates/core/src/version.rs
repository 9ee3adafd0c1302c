//! Dotted release numbers and runtime constraint strings such as
//! `>=3.8, <4`.

use std::cmp::Ordering;

/// Numeric release segments; trailing zeros are insignificant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Version(Vec<u64>);

impl Version {
    /// Parses the leading numeric release part (`1.2.3rc1` -> `1.2.3`).
    pub fn parse(raw: &str) -> Option<Version> {
        let raw = raw.trim().trim_start_matches(['v', 'V']);
        let mut parts = Vec::new();
        for seg in raw.split('.') {
            let digits: String = seg.chars().take_while(char::is_ascii_digit).collect();
            if digits.is_empty() {
                break;
            }
            parts.push(digits.parse().ok()?);
            if digits.len() != seg.len() {
                break;
            }
        }
        if parts.is_empty() {
            return None;
        }
        while parts.len() > 1 && parts.last() == Some(&0) {
            parts.pop();
        }
        Some(Version(parts))
    }

    fn segments(&self) -> &[u64] {
        &self.0
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.0.len().max(other.0.len());
        for i in 0..n {
            let a = self.0.get(i).copied().unwrap_or(0);
            let b = other.0.get(i).copied().unwrap_or(0);
            match a.cmp(&b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

/// Whether `runtime` satisfies a comma-separated constraint list. Clauses
/// that cannot be parsed are ignored; an empty constraint admits everything.
pub fn satisfies(constraint: &str, runtime: &str) -> bool {
    let Some(rt) = Version::parse(runtime) else {
        return true;
    };
    constraint
        .split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .all(|clause| clause_holds(clause, &rt))
}

fn clause_holds(clause: &str, rt: &Version) -> bool {
    let ops = ["~=", "==", "!=", ">=", "<=", ">", "<"];
    let Some(op) = ops.iter().find(|op| clause.starts_with(**op)) else {
        return true;
    };
    let rest = clause[op.len()..].trim();
    let wildcard = rest.ends_with(".*");
    let Some(v) = Version::parse(rest.trim_end_matches(".*")) else {
        return true;
    };
    match *op {
        ">=" => rt >= &v,
        "<=" => rt <= &v,
        ">" => rt > &v,
        "<" => rt < &v,
        "==" if wildcard => prefix_match(rt, &v),
        "==" => rt == &v,
        "!=" if wildcard => !prefix_match(rt, &v),
        "!=" => rt != &v,
        "~=" => {
            let segs = v.segments();
            if rt < &v {
                return false;
            }
            if segs.len() < 2 {
                return true;
            }
            prefix_match(rt, &Version(segs[..segs.len() - 1].to_vec()))
        }
        _ => true,
    }
}

fn prefix_match(rt: &Version, prefix: &Version) -> bool {
    prefix
        .segments()
        .iter()
        .enumerate()
        .all(|(i, p)| rt.segments().get(i).copied().unwrap_or(0) == *p)
}
