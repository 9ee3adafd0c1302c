//! Knowledge graph store.
//!
//! Packages are the central nodes. Each package links many-to-many to topic
//! labels, quality scores and vulnerability advisories, and has one metadata
//! node per (version, origin). The graph is built by a single writer and then
//! sealed; a sealed graph is read-only and can be shared freely across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::quality::{fuzzy_score, FuzzyWeights, SentimentCounts};
use crate::version::Version;

const TAXONOMY_DATA: &str = include_str!("../data/taxonomy.txt");

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("invalid package name: {0:?}")]
    InvalidName(String),
    #[error("graph is sealed")]
    GraphSealed,
    #[error("graph must be sealed before querying")]
    NotSealed,
    #[error("unknown package: {0}")]
    UnknownPackage(String),
    #[error("conflicting metadata for {package} {version} ({origin})")]
    MetadataConflict {
        package: String,
        version: String,
        origin: Origin,
    },
    #[error("conflicting {kind} attachment for {package}: {key}")]
    AttachConflict {
        kind: &'static str,
        package: String,
        key: String,
    },
    #[error("invalid topic: {0}")]
    InvalidTopic(String),
    #[error("invalid attachment: {0}")]
    InvalidItem(String),
    #[error("dangling edge: {0}")]
    DanglingEdge(String),
}

/// Registry-style normalization: lowercase, and every maximal run of `-`, `_`
/// or `.` becomes a single `-`.
pub fn normalize_name(raw: &str) -> Result<String, GraphError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(GraphError::InvalidName(raw.to_string()));
    }
    let mut out = String::with_capacity(trimmed.len());
    let mut in_sep = false;
    for ch in trimmed.chars() {
        if matches!(ch, '-' | '_' | '.') {
            if !in_sep {
                out.push('-');
            }
            in_sep = true;
        } else {
            out.extend(ch.to_lowercase());
            in_sep = false;
        }
    }
    Ok(out)
}

/// Topic terms compare after lowercasing and collapsing whitespace.
pub fn normalize_term(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A normalized package identifier; also the node handle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PackageName(String);

impl PackageName {
    pub fn new(raw: &str) -> Result<Self, GraphError> {
        normalize_name(raw).map(PackageName)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PackageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for PackageName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageNode {
    pub name: String,
    pub display_name: String,
    pub registry_available: bool,
    pub first_seen: Option<i64>,
    pub last_seen: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicKind {
    UserDefined,
    DeveloperDefined,
    Taxonomy,
}

impl TopicKind {
    pub const ALL: [TopicKind; 3] = [
        TopicKind::UserDefined,
        TopicKind::DeveloperDefined,
        TopicKind::Taxonomy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopicKind::UserDefined => "user_defined",
            TopicKind::DeveloperDefined => "developer_defined",
            TopicKind::Taxonomy => "taxonomy",
        }
    }
}

impl fmt::Display for TopicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub kind: TopicKind,
    pub term: String,
    pub source: String,
}

impl TopicLabel {
    pub fn new(kind: TopicKind, term: &str, source: &str) -> Self {
        TopicLabel {
            kind,
            term: term.to_string(),
            source: source.to_string(),
        }
    }
}

/// Topic node identity. The source is provenance and lives on the edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TopicKey {
    pub kind: TopicKind,
    pub term: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Registry,
    CodeHost,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Registry => "registry",
            Origin::CodeHost => "code_host",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub package: String,
    pub version: String,
    pub requires_runtime: String,
    pub keywords: Vec<String>,
    pub maintainer_count: u64,
    pub contributor_count: u64,
    pub star_count: u64,
    pub fork_count: u64,
    pub release_count: u64,
    pub last_update: Option<i64>,
    pub download_count: u64,
    pub origin: Origin,
    #[serde(default)]
    pub project_url: Option<String>,
}

impl MetadataRecord {
    pub fn new(package: &str, version: &str, origin: Origin) -> Self {
        MetadataRecord {
            package: package.to_string(),
            version: version.to_string(),
            requires_runtime: String::new(),
            keywords: Vec::new(),
            maintainer_count: 0,
            contributor_count: 0,
            star_count: 0,
            fork_count: 0,
            release_count: 0,
            last_update: None,
            download_count: 0,
            origin,
            project_url: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
    Unknown,
}

impl Severity {
    /// Maps the loose severity strings used by advisory feeds.
    pub fn parse_loose(raw: &str) -> Severity {
        match raw.trim().to_ascii_lowercase().as_str() {
            "low" => Severity::Low,
            "medium" | "moderate" => Severity::Medium,
            "high" => Severity::High,
            "critical" => Severity::Critical,
            _ => Severity::Unknown,
        }
    }
}

/// Half-open affected interval `[introduced, fixed)`. A missing bound is unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRange {
    pub introduced: Option<String>,
    pub fixed: Option<String>,
}

impl VersionRange {
    pub fn is_well_formed(&self) -> bool {
        match (&self.introduced, &self.fixed) {
            (Some(lo), Some(hi)) => match (Version::parse(lo), Version::parse(hi)) {
                (Some(lo), Some(hi)) => lo <= hi,
                _ => true,
            },
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityRecord {
    pub id: String,
    pub package: String,
    pub severity: Severity,
    pub affected_ranges: Vec<VersionRange>,
    pub fixed: bool,
}

/// The eight product-quality characteristics of ISO/IEC 25010.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityAttribute {
    FunctionalSuitability,
    PerformanceEfficiency,
    Compatibility,
    Usability,
    Reliability,
    Security,
    Maintainability,
    Portability,
}

impl QualityAttribute {
    pub const ALL: [QualityAttribute; 8] = [
        QualityAttribute::FunctionalSuitability,
        QualityAttribute::PerformanceEfficiency,
        QualityAttribute::Compatibility,
        QualityAttribute::Usability,
        QualityAttribute::Reliability,
        QualityAttribute::Security,
        QualityAttribute::Maintainability,
        QualityAttribute::Portability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualityAttribute::FunctionalSuitability => "functional_suitability",
            QualityAttribute::PerformanceEfficiency => "performance_efficiency",
            QualityAttribute::Compatibility => "compatibility",
            QualityAttribute::Usability => "usability",
            QualityAttribute::Reliability => "reliability",
            QualityAttribute::Security => "security",
            QualityAttribute::Maintainability => "maintainability",
            QualityAttribute::Portability => "portability",
        }
    }
}

impl fmt::Display for QualityAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityAttribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        QualityAttribute::ALL
            .into_iter()
            .find(|a| a.as_str() == key)
            .ok_or_else(|| format!("unknown quality attribute: {s}"))
    }
}

/// Per-attribute review evidence. The score is always computed from the counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityScore {
    pub package: String,
    pub attribute: QualityAttribute,
    pub count_l: u64,
    pub count_m: u64,
    pub count_h: u64,
    #[serde(default)]
    pub evidence: BTreeSet<String>,
}

impl QualityScore {
    pub fn counts(&self) -> SentimentCounts {
        SentimentCounts::new(self.count_l, self.count_m, self.count_h)
    }

    /// `None` when there is no evidence.
    pub fn score(&self) -> Option<f64> {
        fuzzy_score(self.counts(), &FuzzyWeights::default()).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageStat {
    pub script_count: u64,
    pub repo_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Attachment {
    Topic(TopicLabel),
    Vulnerability(VulnerabilityRecord),
    Quality(QualityScore),
    Metadata(MetadataRecord),
    Usage(UsageStat),
}

impl From<TopicLabel> for Attachment {
    fn from(v: TopicLabel) -> Self {
        Attachment::Topic(v)
    }
}
impl From<VulnerabilityRecord> for Attachment {
    fn from(v: VulnerabilityRecord) -> Self {
        Attachment::Vulnerability(v)
    }
}
impl From<QualityScore> for Attachment {
    fn from(v: QualityScore) -> Self {
        Attachment::Quality(v)
    }
}
impl From<MetadataRecord> for Attachment {
    fn from(v: MetadataRecord) -> Self {
        Attachment::Metadata(v)
    }
}
impl From<UsageStat> for Attachment {
    fn from(v: UsageStat) -> Self {
        Attachment::Usage(v)
    }
}

/// Controlled vocabulary for taxonomy topics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy(BTreeSet<String>);

impl Taxonomy {
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Taxonomy(
            terms
                .into_iter()
                .map(|t| normalize_term(t.as_ref()))
                .filter(|t| !t.is_empty())
                .collect(),
        )
    }

    /// One term per line, `#` comments.
    pub fn parse(text: &str) -> Self {
        Self::from_terms(crate::data::data_lines(text))
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.contains(&normalize_term(term))
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy::parse(TAXONOMY_DATA)
    }
}

/// One matched (term, kind) pair from a topic lookup.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TopicMatch {
    pub term: String,
    pub kind: TopicKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicHit {
    pub package: String,
    pub matches: Vec<TopicMatch>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    pub(crate) taxonomy: Taxonomy,
    pub(crate) packages: BTreeMap<String, PackageNode>,
    pub(crate) topics: BTreeSet<TopicKey>,
    /// package -> topic -> provenance sources
    pub(crate) package_topics: BTreeMap<String, BTreeMap<TopicKey, BTreeSet<String>>>,
    pub(crate) metadata: BTreeMap<String, BTreeMap<(String, Origin), MetadataRecord>>,
    pub(crate) advisories: BTreeSet<String>,
    pub(crate) vulnerabilities: BTreeMap<String, BTreeMap<String, VulnerabilityRecord>>,
    pub(crate) quality: BTreeMap<String, BTreeMap<QualityAttribute, QualityScore>>,
    pub(crate) usage: BTreeMap<String, UsageStat>,
    pub(crate) build_timestamp: Option<i64>,
    pub(crate) sealed: bool,
    /// term -> (package, kind); rebuilt on seal, not persisted
    pub(crate) topic_index: BTreeMap<String, BTreeSet<(String, TopicKind)>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_taxonomy(taxonomy: Taxonomy) -> Self {
        KnowledgeGraph {
            taxonomy,
            ..Self::default()
        }
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn build_timestamp(&self) -> Option<i64> {
        self.build_timestamp
    }

    fn ensure_open(&self) -> Result<(), GraphError> {
        if self.sealed {
            Err(GraphError::GraphSealed)
        } else {
            Ok(())
        }
    }

    fn ensure_sealed(&self) -> Result<(), GraphError> {
        if self.sealed {
            Ok(())
        } else {
            Err(GraphError::NotSealed)
        }
    }

    pub fn upsert_package(&mut self, raw_name: &str) -> Result<PackageName, GraphError> {
        self.ensure_open()?;
        let name = PackageName::new(raw_name)?;
        self.packages
            .entry(name.0.clone())
            .or_insert_with(|| PackageNode {
                name: name.0.clone(),
                display_name: raw_name.trim().to_string(),
                registry_available: false,
                first_seen: None,
                last_seen: None,
            });
        Ok(name)
    }

    fn resolve(&self, package: &str) -> Result<String, GraphError> {
        let name = normalize_name(package)?;
        if self.packages.contains_key(&name) {
            Ok(name)
        } else {
            Err(GraphError::UnknownPackage(name))
        }
    }

    /// Attach a supporting item to an existing package. Re-attaching an
    /// identical item is a no-op.
    pub fn attach(&mut self, package: &str, item: impl Into<Attachment>) -> Result<(), GraphError> {
        self.ensure_open()?;
        let pkg = self.resolve(package)?;
        match item.into() {
            Attachment::Topic(topic) => self.attach_topic(pkg, topic),
            Attachment::Vulnerability(v) => self.attach_vulnerability(pkg, v),
            Attachment::Quality(q) => self.attach_quality(pkg, q),
            Attachment::Metadata(m) => self.attach_metadata(pkg, m),
            Attachment::Usage(u) => self.attach_usage(pkg, u),
        }
    }

    fn attach_topic(&mut self, pkg: String, topic: TopicLabel) -> Result<(), GraphError> {
        let term = normalize_term(&topic.term);
        if term.is_empty() {
            return Err(GraphError::InvalidTopic("empty term".into()));
        }
        if topic.kind == TopicKind::Taxonomy && !self.taxonomy.contains(&term) {
            return Err(GraphError::InvalidTopic(format!(
                "{term:?} is not in the taxonomy vocabulary"
            )));
        }
        let key = TopicKey {
            kind: topic.kind,
            term,
        };
        self.topics.insert(key.clone());
        let sources = self
            .package_topics
            .entry(pkg)
            .or_default()
            .entry(key)
            .or_default();
        if !topic.source.is_empty() {
            sources.insert(topic.source);
        }
        Ok(())
    }

    fn attach_vulnerability(
        &mut self,
        pkg: String,
        mut v: VulnerabilityRecord,
    ) -> Result<(), GraphError> {
        v.id = v.id.trim().to_string();
        if v.id.is_empty() {
            return Err(GraphError::InvalidItem("empty advisory id".into()));
        }
        if let Some(bad) = v.affected_ranges.iter().find(|r| !r.is_well_formed()) {
            return Err(GraphError::InvalidItem(format!(
                "malformed range in {}: {:?}",
                v.id, bad
            )));
        }
        v.package = pkg.clone();
        let slot = self.vulnerabilities.entry(pkg.clone()).or_default();
        match slot.get(&v.id) {
            Some(existing) if *existing == v => Ok(()),
            Some(_) => Err(GraphError::AttachConflict {
                kind: "vulnerability",
                package: pkg,
                key: v.id,
            }),
            None => {
                self.advisories.insert(v.id.clone());
                slot.insert(v.id.clone(), v);
                Ok(())
            }
        }
    }

    fn attach_quality(&mut self, pkg: String, mut q: QualityScore) -> Result<(), GraphError> {
        if q.count_l + q.count_m + q.count_h == 0 {
            return Err(GraphError::InvalidItem(format!(
                "quality score for {pkg}/{} has no evidence",
                q.attribute
            )));
        }
        q.package = pkg.clone();
        let slot = self.quality.entry(pkg.clone()).or_default();
        match slot.get(&q.attribute) {
            Some(existing) if *existing == q => Ok(()),
            Some(_) => Err(GraphError::AttachConflict {
                kind: "quality",
                package: pkg,
                key: q.attribute.to_string(),
            }),
            None => {
                slot.insert(q.attribute, q);
                Ok(())
            }
        }
    }

    fn attach_metadata(&mut self, pkg: String, mut m: MetadataRecord) -> Result<(), GraphError> {
        m.package = pkg.clone();
        let key = (m.version.clone(), m.origin);
        let slot = self.metadata.entry(pkg.clone()).or_default();
        match slot.get(&key) {
            Some(existing) if *existing == m => return Ok(()),
            Some(_) => {
                return Err(GraphError::MetadataConflict {
                    package: pkg,
                    version: m.version,
                    origin: m.origin,
                })
            }
            None => {}
        }
        let node = self.packages.get_mut(&pkg).expect("resolved package");
        if m.origin == Origin::Registry {
            node.registry_available = true;
        }
        if let Some(ts) = m.last_update {
            node.first_seen = Some(node.first_seen.map_or(ts, |f| f.min(ts)));
            node.last_seen = Some(node.last_seen.map_or(ts, |l| l.max(ts)));
        }
        slot.insert(key, m);
        Ok(())
    }

    fn attach_usage(&mut self, pkg: String, u: UsageStat) -> Result<(), GraphError> {
        if u.repo_count > u.script_count {
            return Err(GraphError::InvalidItem(format!(
                "usage for {pkg}: repo_count {} exceeds script_count {}",
                u.repo_count, u.script_count
            )));
        }
        match self.usage.get(&pkg) {
            Some(existing) if *existing == u => Ok(()),
            Some(_) => Err(GraphError::AttachConflict {
                kind: "usage",
                package: pkg,
                key: "usage".into(),
            }),
            None => {
                self.usage.insert(pkg, u);
                Ok(())
            }
        }
    }

    /// Seal with the current wall-clock time as build timestamp.
    pub fn seal(&mut self) {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0);
        self.seal_at(now);
    }

    pub fn seal_at(&mut self, build_timestamp: i64) {
        if self.sealed {
            return;
        }
        self.build_timestamp = Some(build_timestamp);
        self.sealed = true;
        self.rebuild_index();
    }

    pub(crate) fn rebuild_index(&mut self) {
        let mut index: BTreeMap<String, BTreeSet<(String, TopicKind)>> = BTreeMap::new();
        for (pkg, topics) in &self.package_topics {
            for key in topics.keys() {
                index
                    .entry(key.term.clone())
                    .or_default()
                    .insert((pkg.clone(), key.kind));
            }
        }
        self.topic_index = index;
    }

    /// Packages with at least one topic equal (after normalization) to a query
    /// term, in name order.
    pub fn packages_by_topic<I, S>(&self, terms: I) -> Result<Vec<TopicHit>, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.ensure_sealed()?;
        let query: BTreeSet<String> = terms
            .into_iter()
            .map(|t| normalize_term(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        let mut hits: BTreeMap<String, Vec<TopicMatch>> = BTreeMap::new();
        for term in &query {
            if let Some(entries) = self.topic_index.get(term) {
                for (pkg, kind) in entries {
                    hits.entry(pkg.clone()).or_default().push(TopicMatch {
                        term: term.clone(),
                        kind: *kind,
                    });
                }
            }
        }
        Ok(hits
            .into_iter()
            .map(|(package, mut matches)| {
                matches.sort();
                TopicHit { package, matches }
            })
            .collect())
    }

    /// Full scan that every edge endpoint exists.
    pub fn check_integrity(&self) -> Result<(), GraphError> {
        let missing = |pkg: &String, what: &str| {
            GraphError::DanglingEdge(format!("{what} edge references missing package {pkg}"))
        };
        for (pkg, topics) in &self.package_topics {
            if !self.packages.contains_key(pkg) {
                return Err(missing(pkg, "topic"));
            }
            if let Some(key) = topics.keys().find(|k| !self.topics.contains(k)) {
                return Err(GraphError::DanglingEdge(format!(
                    "{pkg} references missing topic {}:{}",
                    key.kind, key.term
                )));
            }
        }
        for (pkg, records) in &self.metadata {
            if !self.packages.contains_key(pkg) {
                return Err(missing(pkg, "metadata"));
            }
            if records.values().any(|r| r.package != *pkg) {
                return Err(GraphError::DanglingEdge(format!("metadata owner mismatch for {pkg}")));
            }
        }
        for (pkg, vulns) in &self.vulnerabilities {
            if !self.packages.contains_key(pkg) {
                return Err(missing(pkg, "vulnerability"));
            }
            if let Some(id) = vulns.keys().find(|id| !self.advisories.contains(*id)) {
                return Err(GraphError::DanglingEdge(format!(
                    "{pkg} references missing advisory {id}"
                )));
            }
        }
        for pkg in self.quality.keys() {
            if !self.packages.contains_key(pkg) {
                return Err(missing(pkg, "quality"));
            }
        }
        for pkg in self.usage.keys() {
            if !self.packages.contains_key(pkg) {
                return Err(missing(pkg, "usage"));
            }
        }
        for (pkg, node) in &self.packages {
            let has_registry = self
                .metadata
                .get(pkg)
                .is_some_and(|m| m.keys().any(|(_, o)| *o == Origin::Registry));
            if node.registry_available != has_registry {
                return Err(GraphError::DanglingEdge(format!(
                    "{pkg}: registry_available disagrees with attached metadata"
                )));
            }
        }
        Ok(())
    }

    pub fn package_count(&self) -> usize {
        self.packages.len()
    }

    pub fn packages(&self) -> impl Iterator<Item = &PackageNode> {
        self.packages.values()
    }

    pub fn package(&self, name: &str) -> Option<&PackageNode> {
        normalize_name(name).ok().and_then(|n| self.packages.get(&n))
    }

    pub fn topic_count(&self) -> usize {
        self.topics.len()
    }

    pub fn topic_edge_count(&self) -> usize {
        self.package_topics.values().map(BTreeMap::len).sum()
    }

    /// Topics of a package with their provenance sources.
    pub fn topics_of<'a>(
        &'a self,
        package: &str,
    ) -> impl Iterator<Item = (&'a TopicKey, &'a BTreeSet<String>)> + 'a {
        let name = normalize_name(package).unwrap_or_default();
        self.package_topics.get(&name).into_iter().flat_map(|m| m.iter())
    }

    pub fn metadata_of<'a>(&'a self, package: &str) -> impl Iterator<Item = &'a MetadataRecord> + 'a {
        let name = normalize_name(package).unwrap_or_default();
        self.metadata.get(&name).into_iter().flat_map(|m| m.values())
    }

    /// Newest registry release, falling back to the newest code-host record.
    pub fn latest_metadata(&self, package: &str) -> Option<&MetadataRecord> {
        let pick = |origin: Origin| {
            self.metadata_of(package)
                .filter(move |m| m.origin == origin)
                .max_by(|a, b| {
                    Version::parse(&a.version)
                        .cmp(&Version::parse(&b.version))
                        .then_with(|| a.version.cmp(&b.version))
                })
        };
        pick(Origin::Registry).or_else(|| pick(Origin::CodeHost))
    }

    pub fn vulnerabilities_of<'a>(
        &'a self,
        package: &str,
    ) -> impl Iterator<Item = &'a VulnerabilityRecord> + 'a {
        let name = normalize_name(package).unwrap_or_default();
        self.vulnerabilities.get(&name).into_iter().flat_map(|m| m.values())
    }

    pub fn unfixed_vulnerability_count(&self, package: &str) -> usize {
        self.vulnerabilities_of(package).filter(|v| !v.fixed).count()
    }

    pub fn quality_of<'a>(&'a self, package: &str) -> impl Iterator<Item = &'a QualityScore> + 'a {
        let name = normalize_name(package).unwrap_or_default();
        self.quality.get(&name).into_iter().flat_map(|m| m.values())
    }

    pub fn quality_score(&self, package: &str, attribute: QualityAttribute) -> Option<&QualityScore> {
        let name = normalize_name(package).ok()?;
        self.quality.get(&name)?.get(&attribute)
    }

    pub fn usage(&self, package: &str) -> Option<UsageStat> {
        let name = normalize_name(package).ok()?;
        self.usage.get(&name).copied()
    }

    pub fn usage_stats(&self) -> impl Iterator<Item = (&str, &UsageStat)> {
        self.usage.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn max_script_count(&self) -> u64 {
        self.usage.values().map(|u| u.script_count).max().unwrap_or(0)
    }

    pub fn metadata_node_count(&self) -> usize {
        self.metadata.values().map(BTreeMap::len).sum()
    }

    pub fn advisory_count(&self) -> usize {
        self.advisories.len()
    }
}
