use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::content::ContentKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    FileSource,
    UrlSource,
    PagePreview,
    RelevantPageExtractor,
    DocumentPlanner,
    SlideDeckPlanner,
    SpreadsheetPlanner,
    DocumentEditor,
    SlideDeckViewer,
    SpreadsheetViewer,
    DocumentBuilder,
    SlideDeckBuilder,
    SpreadsheetBuilder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Taxonomy {
    Source,
    Scatter,
    Gather,
    ViewEdit,
    Transduce,
}

/// One input port: accepted content kinds and how many edges it takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortSpec {
    pub name: &'static str,
    pub accepts: &'static [ContentKind],
    pub min: usize,
    pub max: usize,
}

/// Maximum fan-in of multi-input ports.
pub const MAX_FAN_IN: usize = 64;

const PLANS: &[ContentKind] = &[
    ContentKind::PageSet,
    ContentKind::DocumentPlan,
    ContentKind::SlideDeckPlan,
    ContentKind::TablePlan,
];

const fn port(name: &'static str, accepts: &'static [ContentKind], min: usize, max: usize) -> PortSpec {
    PortSpec { name, accepts, min, max }
}

const TEMPLATE: PortSpec = port("template", &[ContentKind::Document], 0, 1);
const DOCUMENT_PLAN: PortSpec = port("plan", &[ContentKind::DocumentPlan], 1, 1);
const SLIDES_PLAN: PortSpec = port("plan", &[ContentKind::SlideDeckPlan], 1, 1);
const TABLE_PLAN: PortSpec = port("plan", &[ContentKind::TablePlan], 1, 1);
const PREVIEW_PORTS: &[PortSpec] = &[port("pages", &[ContentKind::PageSet, ContentKind::Document], 1, 1)];
const EXTRACTOR_PORTS: &[PortSpec] = &[port("documents", &[ContentKind::Document], 1, MAX_FAN_IN)];
const PLANNER_PORTS: &[PortSpec] = &[port("sources", PLANS, 1, MAX_FAN_IN)];
const DOCUMENT_VIEW_PORTS: &[PortSpec] = &[DOCUMENT_PLAN];
const SLIDES_VIEW_PORTS: &[PortSpec] = &[SLIDES_PLAN];
const TABLE_VIEW_PORTS: &[PortSpec] = &[TABLE_PLAN];
const DOCUMENT_BUILD_PORTS: &[PortSpec] = &[DOCUMENT_PLAN, TEMPLATE];
const SLIDES_BUILD_PORTS: &[PortSpec] = &[SLIDES_PLAN, TEMPLATE];
const TABLE_BUILD_PORTS: &[PortSpec] = &[TABLE_PLAN, TEMPLATE];

impl NodeKind {
    pub const ALL: [NodeKind; 13] = [
        NodeKind::FileSource,
        NodeKind::UrlSource,
        NodeKind::PagePreview,
        NodeKind::RelevantPageExtractor,
        NodeKind::DocumentPlanner,
        NodeKind::SlideDeckPlanner,
        NodeKind::SpreadsheetPlanner,
        NodeKind::DocumentEditor,
        NodeKind::SlideDeckViewer,
        NodeKind::SpreadsheetViewer,
        NodeKind::DocumentBuilder,
        NodeKind::SlideDeckBuilder,
        NodeKind::SpreadsheetBuilder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::FileSource => "FileSource",
            NodeKind::UrlSource => "UrlSource",
            NodeKind::PagePreview => "PagePreview",
            NodeKind::RelevantPageExtractor => "RelevantPageExtractor",
            NodeKind::DocumentPlanner => "DocumentPlanner",
            NodeKind::SlideDeckPlanner => "SlideDeckPlanner",
            NodeKind::SpreadsheetPlanner => "SpreadsheetPlanner",
            NodeKind::DocumentEditor => "DocumentEditor",
            NodeKind::SlideDeckViewer => "SlideDeckViewer",
            NodeKind::SpreadsheetViewer => "SpreadsheetViewer",
            NodeKind::DocumentBuilder => "DocumentBuilder",
            NodeKind::SlideDeckBuilder => "SlideDeckBuilder",
            NodeKind::SpreadsheetBuilder => "SpreadsheetBuilder",
        }
    }

    pub fn taxonomy(&self) -> Taxonomy {
        use NodeKind::*;
        match self {
            FileSource | UrlSource => Taxonomy::Source,
            PagePreview | RelevantPageExtractor => Taxonomy::Scatter,
            DocumentPlanner | SlideDeckPlanner | SpreadsheetPlanner => Taxonomy::Gather,
            DocumentEditor | SlideDeckViewer | SpreadsheetViewer => Taxonomy::ViewEdit,
            DocumentBuilder | SlideDeckBuilder | SpreadsheetBuilder => Taxonomy::Transduce,
        }
    }

    pub fn inputs(&self) -> &'static [PortSpec] {
        use NodeKind::*;
        match self {
            FileSource | UrlSource => &[],
            PagePreview => PREVIEW_PORTS,
            RelevantPageExtractor => EXTRACTOR_PORTS,
            DocumentPlanner | SlideDeckPlanner | SpreadsheetPlanner => PLANNER_PORTS,
            DocumentEditor => DOCUMENT_VIEW_PORTS,
            SlideDeckViewer => SLIDES_VIEW_PORTS,
            SpreadsheetViewer => TABLE_VIEW_PORTS,
            DocumentBuilder => DOCUMENT_BUILD_PORTS,
            SlideDeckBuilder => SLIDES_BUILD_PORTS,
            SpreadsheetBuilder => TABLE_BUILD_PORTS,
        }
    }

    pub fn output(&self) -> ContentKind {
        use NodeKind::*;
        match self {
            FileSource | UrlSource => ContentKind::Document,
            PagePreview | RelevantPageExtractor => ContentKind::PageSet,
            DocumentPlanner | DocumentEditor => ContentKind::DocumentPlan,
            SlideDeckPlanner | SlideDeckViewer => ContentKind::SlideDeckPlan,
            SpreadsheetPlanner | SpreadsheetViewer => ContentKind::TablePlan,
            DocumentBuilder | SlideDeckBuilder | SpreadsheetBuilder => ContentKind::Artifact,
        }
    }

    /// Whether evaluation calls a provider (and so fingerprints include it).
    pub fn uses_provider(&self) -> bool {
        matches!(
            self,
            NodeKind::RelevantPageExtractor
                | NodeKind::DocumentPlanner
                | NodeKind::SlideDeckPlanner
                | NodeKind::SpreadsheetPlanner
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown node kind {s:?}"))
    }
}
