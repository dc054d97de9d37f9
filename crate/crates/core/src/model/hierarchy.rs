//! Two-level fashion taxonomy: six super-categories, 32 sub-categories.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_TSV: &str = include_str!("../../data/hierarchy.tsv");

/// Number of sub-categories a valid hierarchy carries.
pub const SUB_CATEGORY_COUNT: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuperCategory {
    Top,
    Bottom,
    Outer,
    Dress,
    Shoes,
    Bag,
}

impl SuperCategory {
    pub const ALL: [SuperCategory; 6] = [
        SuperCategory::Top,
        SuperCategory::Bottom,
        SuperCategory::Outer,
        SuperCategory::Dress,
        SuperCategory::Shoes,
        SuperCategory::Bag,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuperCategory::Top => "top",
            SuperCategory::Bottom => "bottom",
            SuperCategory::Outer => "outer",
            SuperCategory::Dress => "dress",
            SuperCategory::Shoes => "shoes",
            SuperCategory::Bag => "bag",
        }
    }

    /// Sub-category count this super-category must hold.
    pub fn expected_sub_count(self) -> usize {
        match self {
            SuperCategory::Outer | SuperCategory::Top | SuperCategory::Bottom => 6,
            SuperCategory::Dress => 2,
            SuperCategory::Shoes => 7,
            SuperCategory::Bag => 5,
        }
    }
}

impl fmt::Display for SuperCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuperCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuperCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::contract(format!("unknown super-category '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HierarchyViolation {
    SubCategoryCount { expected: usize, found: usize },
    SuperCount { category: SuperCategory, expected: usize, found: usize },
    NonUniqueMapping { sub: String, supers: Vec<SuperCategory> },
    DuplicateName(String),
    EmptyName,
}

impl fmt::Display for HierarchyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyViolation::SubCategoryCount { expected, found } => {
                write!(f, "sub-category count: expected {expected}, found {found}")
            }
            HierarchyViolation::SuperCount { category, expected, found } => write!(
                f,
                "sub-category count for {category}: expected {expected}, found {found}"
            ),
            HierarchyViolation::NonUniqueMapping { sub, supers } => {
                let names: Vec<_> = supers.iter().map(|s| s.as_str()).collect();
                write!(f, "non-unique mapping: '{sub}' maps to {}", names.join(", "))
            }
            HierarchyViolation::DuplicateName(name) => write!(f, "duplicate name '{name}'"),
            HierarchyViolation::EmptyName => f.write_str("empty sub-category name"),
        }
    }
}

/// Sub-category to super-category mapping.
///
/// Entries are kept exactly as supplied (duplicates included) so that
/// [`CategoryHierarchy::validate`] can report them; lookups use the first
/// mapping seen for a name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryHierarchy {
    entries: Vec<(String, SuperCategory)>,
    lookup: BTreeMap<String, SuperCategory>,
}

impl Default for CategoryHierarchy {
    fn default() -> Self {
        Self::from_tsv(DEFAULT_TSV, Path::new("<builtin hierarchy>"))
            .expect("builtin hierarchy parses")
    }
}

impl CategoryHierarchy {
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, SuperCategory)>,
        S: Into<String>,
    {
        let entries: Vec<(String, SuperCategory)> =
            entries.into_iter().map(|(s, c)| (s.into(), c)).collect();
        let mut lookup = BTreeMap::new();
        for (sub, sup) in &entries {
            lookup.entry(sub.clone()).or_insert(*sup);
        }
        Self { entries, lookup }
    }

    /// Parses `sub_name<TAB>super_name` lines. Blank lines and `#` comments are skipped.
    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (sub, sup) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, idx as u64 + 1, "expected sub<TAB>super"))?;
            let sup = sup
                .parse::<SuperCategory>()
                .map_err(|e| Error::parse(origin, idx as u64 + 1, e.to_string()))?;
            entries.push((sub.trim().to_string(), sup));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tsv(&text, path)
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|(sub, sup)| format!("{sub}\t{sup}\n"))
            .collect()
    }

    pub fn super_of(&self, sub: &str) -> Option<SuperCategory> {
        self.lookup.get(sub).copied()
    }

    pub fn require_super(&self, sub: &str) -> Result<SuperCategory> {
        self.super_of(sub)
            .ok_or_else(|| Error::UnknownSubCategory(sub.to_string()))
    }

    pub fn subs_of(&self, sup: SuperCategory) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, s)| *s == sup)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn sub_categories(&self) -> impl Iterator<Item = (&str, SuperCategory)> {
        self.entries.iter().map(|(n, s)| (n.as_str(), *s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns every broken invariant; an empty list means the hierarchy is valid.
    pub fn validate(&self) -> Vec<HierarchyViolation> {
        let mut out = Vec::new();
        if self.entries.len() != SUB_CATEGORY_COUNT {
            out.push(HierarchyViolation::SubCategoryCount {
                expected: SUB_CATEGORY_COUNT,
                found: self.entries.len(),
            });
        }
        for category in SuperCategory::ALL {
            let found = self.entries.iter().filter(|(_, s)| *s == category).count();
            let expected = category.expected_sub_count();
            if found != expected {
                out.push(HierarchyViolation::SuperCount { category, expected, found });
            }
        }
        let mut by_name: BTreeMap<&str, Vec<SuperCategory>> = BTreeMap::new();
        for (sub, sup) in &self.entries {
            if sub.is_empty() {
                out.push(HierarchyViolation::EmptyName);
            }
            by_name.entry(sub.as_str()).or_default().push(*sup);
        }
        for (sub, mut supers) in by_name {
            if supers.len() < 2 {
                continue;
            }
            supers.sort();
            supers.dedup();
            if supers.len() > 1 {
                out.push(HierarchyViolation::NonUniqueMapping { sub: sub.to_string(), supers });
            } else {
                out.push(HierarchyViolation::DuplicateName(sub.to_string()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hierarchy_is_valid() {
        let h = CategoryHierarchy::default();
        assert!(h.validate().is_empty(), "{:?}", h.validate());
        assert_eq!(h.len(), 32);
        let counts: Vec<usize> = SuperCategory::ALL.iter().map(|c| h.subs_of(*c).len()).collect();
        // top, bottom, outer, dress, shoes, bag
        assert_eq!(counts, vec![6, 6, 6, 2, 7, 5]);
    }

    #[test]
    fn missing_sub_is_reported() {
        let h = CategoryHierarchy::default();
        let trimmed = CategoryHierarchy::from_entries(
            h.sub_categories().skip(1).map(|(n, s)| (n.to_string(), s)),
        );
        let violations = trimmed.validate();
        assert!(violations
            .iter()
            .any(|v| v.to_string().starts_with("sub-category count")));
    }

    #[test]
    fn double_mapping_is_reported() {
        let h = CategoryHierarchy::default();
        let mut entries: Vec<(String, SuperCategory)> =
            h.sub_categories().map(|(n, s)| (n.to_string(), s)).collect();
        entries.push(("sneakers".into(), SuperCategory::Top));
        let violations = CategoryHierarchy::from_entries(entries).validate();
        assert!(violations
            .iter()
            .any(|v| v.to_string().starts_with("non-unique mapping")));
    }

    #[test]
    fn round_trip_sub_super_sub() {
        let h = CategoryHierarchy::default();
        for (sub, _) in h.sub_categories() {
            let sup = h.super_of(sub).unwrap();
            assert!(h.subs_of(sup).contains(&sub));
        }
        let reparsed = CategoryHierarchy::from_tsv(&h.to_tsv(), Path::new("mem")).unwrap();
        assert_eq!(reparsed, h);
    }

    #[test]
    fn tsv_errors_carry_line_numbers() {
        let err = CategoryHierarchy::from_tsv("coat\touter\nbad line\n", Path::new("h.tsv"))
            .unwrap_err();
        assert!(err.to_string().contains("h.tsv:2"), "{err}");
        let err = CategoryHierarchy::from_tsv("coat\tpants\n", Path::new("h.tsv")).unwrap_err();
        assert!(err.to_string().contains("unknown super-category"));
    }
}
