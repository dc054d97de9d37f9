use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use super::hierarchy::CategoryHierarchy;
use crate::error::{Error, Result};

macro_rules! numeric_id {
    ($name:ident) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;
            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                s.trim().parse().map($name)
            }
        }
    };
}

numeric_id!(ItemId);
numeric_id!(OotdId);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(s: impl Into<String>) -> Self {
        UserId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Dimensions of the three representations concatenated into an item vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingLayout {
    pub classifier_dim: usize,
    pub tagger_dim: usize,
    pub search_dim: usize,
}

impl Default for EmbeddingLayout {
    fn default() -> Self {
        Self {
            classifier_dim: 32,
            tagger_dim: 32,
            search_dim: 128,
        }
    }
}

impl EmbeddingLayout {
    pub fn total(&self) -> usize {
        self.classifier_dim + self.tagger_dim + self.search_dim
    }

    /// Splits a concatenated `[classifier | tagger | search]` block.
    pub fn split(&self, block: &[f32]) -> Result<ItemEmbeddings> {
        if block.len() != self.total() {
            return Err(Error::DimensionMismatch {
                expected: self.total(),
                found: block.len(),
            });
        }
        let (c, rest) = block.split_at(self.classifier_dim);
        let (a, s) = rest.split_at(self.tagger_dim);
        Ok(ItemEmbeddings {
            classifier: c.to_vec(),
            tagger: a.to_vec(),
            search: s.to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemEmbeddings {
    pub classifier: Vec<f32>,
    pub tagger: Vec<f32>,
    pub search: Vec<f32>,
}

impl ItemEmbeddings {
    pub fn concat_f32(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.classifier.len() + self.tagger.len() + self.search.len());
        v.extend_from_slice(&self.classifier);
        v.extend_from_slice(&self.tagger);
        v.extend_from_slice(&self.search);
        v
    }

    pub fn item_vector(&self) -> ItemVector {
        ItemVector(self.concat_f32().into_iter().map(f64::from).collect())
    }
}

/// `concat(f_C, f_A, f_S)` for one item.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemVector(pub Vec<f64>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttributeKind {
    Categorical,
    MultiLabel,
}

/// The 18 attribute groups produced by the tagger: 11 categorical, 7 multi-label.
pub const ATTRIBUTE_GROUPS: [(&str, AttributeKind); 18] = [
    ("color", AttributeKind::Categorical),
    ("pattern", AttributeKind::Categorical),
    ("length", AttributeKind::Categorical),
    ("sleeve_length", AttributeKind::Categorical),
    ("neckline", AttributeKind::Categorical),
    ("fit", AttributeKind::Categorical),
    ("material", AttributeKind::Categorical),
    ("closure", AttributeKind::Categorical),
    ("waist", AttributeKind::Categorical),
    ("heel_height", AttributeKind::Categorical),
    ("silhouette", AttributeKind::Categorical),
    ("style", AttributeKind::MultiLabel),
    ("detail", AttributeKind::MultiLabel),
    ("print", AttributeKind::MultiLabel),
    ("occasion", AttributeKind::MultiLabel),
    ("season", AttributeKind::MultiLabel),
    ("texture", AttributeKind::MultiLabel),
    ("decoration", AttributeKind::MultiLabel),
];

pub fn attribute_kind(group: &str) -> Option<AttributeKind> {
    ATTRIBUTE_GROUPS
        .iter()
        .find(|(g, _)| *g == group)
        .map(|(_, k)| *k)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeTag {
    pub group: String,
    pub value: String,
}

impl AttributeTag {
    pub fn new(group: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            group: group.into(),
            value: value.into(),
        }
    }
}

/// Item metadata without its embedding block, as stored in JSON-lines files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub item_id: ItemId,
    pub sub_category: String,
    #[serde(default)]
    pub color_tag: Option<String>,
    #[serde(default)]
    pub attribute_tags: BTreeSet<AttributeTag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: ItemId,
    pub sub_category: String,
    pub color_tag: Option<String>,
    pub attribute_tags: BTreeSet<AttributeTag>,
    pub embeddings: ItemEmbeddings,
}

impl ItemRecord {
    pub fn new(
        meta: ItemMeta,
        embeddings: ItemEmbeddings,
        layout: &EmbeddingLayout,
        hierarchy: &CategoryHierarchy,
    ) -> Result<Self> {
        hierarchy.require_super(&meta.sub_category)?;
        for (name, got, want) in [
            ("classifier", embeddings.classifier.len(), layout.classifier_dim),
            ("tagger", embeddings.tagger.len(), layout.tagger_dim),
            ("search", embeddings.search.len(), layout.search_dim),
        ] {
            if got != want {
                return Err(Error::Schema(format!(
                    "item {}: {name} embedding has dimension {got}, expected {want}",
                    meta.item_id
                )));
            }
        }
        if embeddings.concat_f32().iter().any(|x| !x.is_finite()) {
            return Err(Error::Schema(format!("item {}: non-finite embedding", meta.item_id)));
        }
        validate_attributes(meta.item_id, &meta.attribute_tags)?;
        Ok(Self {
            item_id: meta.item_id,
            sub_category: meta.sub_category,
            color_tag: meta.color_tag,
            attribute_tags: meta.attribute_tags,
            embeddings,
        })
    }

    pub fn meta(&self) -> ItemMeta {
        ItemMeta {
            item_id: self.item_id,
            sub_category: self.sub_category.clone(),
            color_tag: self.color_tag.clone(),
            attribute_tags: self.attribute_tags.clone(),
        }
    }
}

fn validate_attributes(item: ItemId, tags: &BTreeSet<AttributeTag>) -> Result<()> {
    let mut categorical_seen = BTreeSet::new();
    for tag in tags {
        match attribute_kind(&tag.group) {
            None => {
                return Err(Error::Schema(format!(
                    "item {item}: unknown attribute group '{}'",
                    tag.group
                )))
            }
            Some(AttributeKind::Categorical) => {
                if !categorical_seen.insert(tag.group.as_str()) {
                    return Err(Error::Schema(format!(
                        "item {item}: categorical group '{}' has several values",
                        tag.group
                    )));
                }
            }
            Some(AttributeKind::MultiLabel) => {}
        }
    }
    Ok(())
}

pub fn normalize_tag(tag: &str) -> String {
    tag.trim().trim_start_matches('#').to_lowercase()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OotdPost {
    pub ootd_id: OotdId,
    pub uploader_id: UserId,
    pub item_ids: Vec<ItemId>,
    #[serde(default)]
    pub hashtags: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
}

impl OotdPost {
    pub fn new(
        ootd_id: OotdId,
        uploader_id: UserId,
        item_ids: Vec<ItemId>,
        hashtags: impl IntoIterator<Item = impl AsRef<str>>,
        created_at: DateTime<Utc>,
    ) -> Result<Self> {
        let post = Self {
            ootd_id,
            uploader_id,
            item_ids,
            hashtags: hashtags.into_iter().map(|t| normalize_tag(t.as_ref())).collect(),
            created_at,
        };
        post.validate()?;
        Ok(post)
    }

    /// Checks the at-least-one-item rule and re-normalizes hashtags.
    pub fn normalized(mut self) -> Result<Self> {
        self.hashtags = self.hashtags.iter().map(|t| normalize_tag(t)).collect();
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.item_ids.is_empty() {
            return Err(Error::contract(format!("ootd {} has no items", self.ootd_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub birth_year: i32,
}

/// Demographic segment: gender and decade age bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub gender: Gender,
    pub age_decade: i32,
}

impl Demographics {
    pub fn segment(&self, now: DateTime<Utc>) -> Segment {
        let age = (now.year() - self.birth_year).max(0);
        Segment {
            gender: self.gender,
            age_decade: age / 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    View,
    Like,
    Upload,
    Follow,
}

impl InteractionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::View => "view",
            InteractionKind::Like => "like",
            InteractionKind::Upload => "upload",
            InteractionKind::Follow => "follow",
        }
    }

    /// View and like are the implicit-feedback signals for style and TF-IDF.
    pub fn is_feedback(self) -> bool {
        matches!(self, InteractionKind::View | InteractionKind::Like)
    }
}

impl FromStr for InteractionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "view" => Ok(InteractionKind::View),
            "like" => Ok(InteractionKind::Like),
            "upload" => Ok(InteractionKind::Upload),
            "follow" => Ok(InteractionKind::Follow),
            other => Err(Error::contract(format!("unknown interaction kind '{other}'"))),
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "lowercase")]
pub enum Target {
    Ootd(OotdId),
    User(UserId),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Ootd(o) => write!(f, "{o}"),
            Target::User(u) => write!(f, "{u}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub timestamp: DateTime<Utc>,
    pub user_id: UserId,
    pub kind: InteractionKind,
    pub target: Target,
}

impl InteractionEvent {
    /// Builds an event, checking that follows target users and everything else targets OOTDs.
    pub fn new(
        timestamp: DateTime<Utc>,
        user_id: UserId,
        kind: InteractionKind,
        target_id: &str,
    ) -> Result<Self> {
        let target = match kind {
            InteractionKind::Follow => Target::User(UserId::new(target_id.trim())),
            _ => Target::Ootd(target_id.parse().map_err(|_| {
                Error::contract(format!("'{target_id}' is not an ootd id"))
            })?),
        };
        if target == Target::User(user_id.clone()) {
            return Err(Error::contract(format!("user '{user_id}' cannot follow themselves")));
        }
        Ok(Self {
            timestamp,
            user_id,
            kind,
            target,
        })
    }

    pub fn ootd(&self) -> Option<OotdId> {
        match &self.target {
            Target::Ootd(o) => Some(*o),
            Target::User(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecentInteraction {
    pub ootd_id: OotdId,
    pub kind: InteractionKind,
    pub timestamp: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub demographics: Demographics,
    #[serde(default)]
    pub preference_tags: BTreeSet<String>,
    #[serde(default)]
    pub follows: BTreeSet<UserId>,
    /// Newest first.
    #[serde(default)]
    pub recent_interactions: Vec<RecentInteraction>,
}

impl UserProfile {
    pub fn new(user_id: UserId, demographics: Demographics) -> Self {
        Self {
            user_id,
            demographics,
            preference_tags: BTreeSet::new(),
            follows: BTreeSet::new(),
            recent_interactions: Vec::new(),
        }
    }

    /// Enforces the profile invariants: no self-follow, normalized tags,
    /// interactions sorted newest first.
    pub fn normalized(mut self) -> Result<Self> {
        if self.follows.contains(&self.user_id) {
            return Err(Error::contract(format!("user '{}' follows themselves", self.user_id)));
        }
        self.preference_tags = self.preference_tags.iter().map(|t| normalize_tag(t)).collect();
        self.recent_interactions
            .sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then(a.ootd_id.cmp(&b.ootd_id)));
        Ok(self)
    }
}
