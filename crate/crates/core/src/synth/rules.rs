//! Zone rules. A rule file is a JSON array of
//! `{"category": "person", "kind": "private_forbidden", "mask": [[0,1,...],...]}`
//! where `mask` has one row per grid row and one 0/1 entry per grid column.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ObjectCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    PrivateForbidden,
    PublicForbidden,
    Rare,
}

impl RuleKind {
    pub fn name(self) -> &'static str {
        match self {
            RuleKind::PrivateForbidden => "private_forbidden",
            RuleKind::PublicForbidden => "public_forbidden",
            RuleKind::Rare => "rare",
        }
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [RuleKind::PrivateForbidden, RuleKind::PublicForbidden, RuleKind::Rare]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown rule kind `{s}`")))
    }
}

/// Anomaly scenario 1, 2 or 3: breaking a site rule, breaking a public
/// rule, or a rare-but-legal placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Scenario(u8);

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario(1), Scenario(2), Scenario(3)];

    pub fn new(id: u8) -> Result<Self> {
        if (1..=3).contains(&id) {
            Ok(Scenario(id))
        } else {
            Err(Error::Argument(format!("scenario must be 1, 2 or 3, got {id}")))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn kind(self) -> RuleKind {
        match self.0 {
            1 => RuleKind::PrivateForbidden,
            2 => RuleKind::PublicForbidden,
            _ => RuleKind::Rare,
        }
    }
}

impl TryFrom<u8> for Scenario {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        Scenario::new(id)
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s.0
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scenario {}", self.0)
    }
}

/// Spatial mask over the grid's rows x cols, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneRule {
    pub category: ObjectCategory,
    pub kind: RuleKind,
    pub rows: usize,
    pub cols: usize,
    pub mask: Vec<bool>,
}

impl ZoneRule {
    pub fn new(category: ObjectCategory, kind: RuleKind, rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != rows * cols {
            return Err(Error::config(format!(
                "mask needs {} entries, got {}",
                rows * cols,
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::config(format!(
                "{} rule for {category} has an empty mask",
                kind.name()
            )));
        }
        Ok(ZoneRule {
            category,
            kind,
            rows,
            cols,
            mask,
        })
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols + col]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows * self.cols)
            .filter(|&i| self.mask[i])
            .map(|i| (i / self.cols, i % self.cols))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    category: String,
    kind: String,
    mask: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedRules {
    pub rules: Vec<ZoneRule>,
    pub warnings: Vec<String>,
}

/// Parses rule JSON against `spec`; rules sharing (category, kind) are merged
/// by mask union and the result is ordered by kind, then category.
pub fn parse_rules(text: &str, spec: &GridSpec) -> Result<LoadedRules> {
    let mut warnings = Vec::new();
    let raw: Vec<RawRule> = if text.trim().is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(text).map_err(|e| Error::config(format!("rule file: {e}")))?
    };
    if raw.is_empty() {
        warnings.push("rule file contains no rules".to_string());
        log::warn!("rule file contains no rules");
    }
    let mut merged: BTreeMap<(RuleKind, ObjectCategory), Vec<bool>> = BTreeMap::new();
    for (i, r) in raw.into_iter().enumerate() {
        let category: ObjectCategory = r.category.parse()?;
        let kind: RuleKind = r.kind.parse()?;
        if r.mask.len() != spec.rows || r.mask.iter().any(|row| row.len() != spec.cols) {
            return Err(Error::config(format!(
                "rule {i} ({category}, {}): mask is not {}x{}",
                kind.name(),
                spec.rows,
                spec.cols
            )));
        }
        let flat = r
            .mask
            .iter()
            .flatten()
            .map(|&v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::config(format!("rule {i}: mask value {other} is not 0/1"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        match merged.get_mut(&(kind, category)) {
            Some(existing) => {
                for (e, f) in existing.iter_mut().zip(flat) {
                    *e |= f;
                }
            }
            None => {
                merged.insert((kind, category), flat);
            }
        }
    }
    let rules = merged
        .into_iter()
        .map(|((kind, category), mask)| ZoneRule::new(category, kind, spec.rows, spec.cols, mask))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedRules { rules, warnings })
}

pub fn load_rules(path: &Path, spec: &GridSpec) -> Result<LoadedRules> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rules(&text, spec)
}

pub fn rules_to_json(rules: &[ZoneRule]) -> String {
    let mut out = String::from("[\n");
    for (i, r) in rules.iter().enumerate() {
        let rows: Vec<String> = (0..r.rows)
            .map(|row| {
                let vals: Vec<&str> = (0..r.cols).map(|c| if r.allows(row, c) { "1" } else { "0" }).collect();
                format!("[{}]", vals.join(","))
            })
            .collect();
        out.push_str(&format!(
            "  {{\"category\": \"{}\", \"kind\": \"{}\", \"mask\": [\n    {}\n  ]}}{}\n",
            r.category,
            r.kind.name(),
            rows.join(",\n    "),
            if i + 1 < rules.len() { "," } else { "" }
        ));
    }
    out.push_str("]\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new(2, 3, 300, 200).unwrap()
    }

    #[test]
    fn empty_file_warns() {
        for text in ["", "[]"] {
            let r = parse_rules(text, &spec()).unwrap();
            assert!(r.rules.is_empty());
            assert_eq!(r.warnings.len(), 1);
        }
    }

    #[test]
    fn duplicates_merge_by_union() {
        let text = r#"[
            {"category": "person", "kind": "private_forbidden", "mask": [[1,0,0],[0,0,0]]},
            {"category": "bike", "kind": "public_forbidden", "mask": [[0,0,0],[1,1,1]]},
            {"category": "person", "kind": "private_forbidden", "mask": [[0,0,1],[0,0,0]]}
        ]"#;
        let r = parse_rules(text, &spec()).unwrap();
        assert_eq!(r.rules.len(), 2);
        assert_eq!(r.rules[0].kind, RuleKind::PrivateForbidden);
        assert_eq!(r.rules[0].mask, vec![true, false, true, false, false, false]);
        let reparsed = parse_rules(&rules_to_json(&r.rules), &spec()).unwrap();
        assert_eq!(reparsed.rules, r.rules);
    }

    #[test]
    fn bad_rules() {
        let unknown = r#"[{"category": "tank", "kind": "rare", "mask": [[1,0,0],[0,0,0]]}]"#;
        assert!(parse_rules(unknown, &spec()).is_err());
        let shape = r#"[{"category": "car", "kind": "rare", "mask": [[1,0],[0,0]]}]"#;
        assert!(matches!(parse_rules(shape, &spec()), Err(Error::Config(_))));
        let empty = r#"[{"category": "car", "kind": "rare", "mask": [[0,0,0],[0,0,0]]}]"#;
        assert!(parse_rules(empty, &spec()).is_err());
        let kind = r#"[{"category": "car", "kind": "odd", "mask": [[1,0,0],[0,0,0]]}]"#;
        assert!(parse_rules(kind, &spec()).is_err());
    }

    #[test]
    fn scenario_ids() {
        assert_eq!(Scenario::new(2).unwrap().kind(), RuleKind::PublicForbidden);
        assert!(Scenario::new(0).is_err());
        assert!(matches!(Scenario::new(4), Err(Error::Argument(_))));
    }
}
