// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use super::mask::GraftMask;
use super::registry::Registry;
use crate::error::{Error, Result};
use crate::model::{ComponentId, ComponentKind, ModelConfig};

/// What a scheme needs to know about a prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptAnnotation {
    pub length: usize,
    /// Token span `[start, end)` of the first entity.
    pub first_entity: Option<(usize, usize)>,
}

/// Which positions a clause applies to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositionSelector {
    FirstEntity,
    LastToken,
    All,
    None,
    Explicit { positions: Vec<usize> },
    Union { of: Vec<PositionSelector> },
    /// Every position in `[0, length)` not selected by `of`.
    Complement { of: Box<PositionSelector> },
}

impl PositionSelector {
    pub fn resolve(&self, ann: &PromptAnnotation) -> Result<BTreeSet<usize>> {
        let n = ann.length;
        Ok(match self {
            Self::FirstEntity => {
                let (s, e) = ann
                    .first_entity
                    .ok_or_else(|| Error::Scheme("prompt has no first-entity span".into()))?;
                if s >= e || e > n {
                    return Err(Error::Scheme(format!("first-entity span [{s}, {e}) invalid for length {n}")));
                }
                (s..e).collect()
            }
            Self::LastToken => {
                if n == 0 {
                    return Err(Error::Scheme("empty prompt has no last token".into()));
                }
                BTreeSet::from([n - 1])
            }
            Self::All => (0..n).collect(),
            Self::None => BTreeSet::new(),
            Self::Explicit { positions } => {
                if let Some(p) = positions.iter().find(|&&p| p >= n) {
                    return Err(Error::Scheme(format!("position {p} outside prompt of length {n}")));
                }
                positions.iter().copied().collect()
            }
            Self::Union { of } => {
                let mut out = BTreeSet::new();
                for s in of {
                    out.extend(s.resolve(ann)?);
                }
                out
            }
            Self::Complement { of } => {
                let inner = of.resolve(ann)?;
                (0..n).filter(|p| !inner.contains(p)).collect()
            }
        })
    }
}

/// A named set of component kinds, or a single kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComponentGroup {
    /// W_Q, W_K, W_V.
    Attn,
    /// W_O.
    O,
    /// FFN_UP, FFN_DOWN.
    Ffn,
    /// LN_ATTN, LN_FFN.
    Norms,
    /// Every per-layer kind.
    FullLayer,
    /// Every per-layer kind plus all global kinds.
    All,
    Kind(ComponentKind),
}

impl ComponentGroup {
    fn kinds(self) -> Vec<ComponentKind> {
        use ComponentKind::*;
        match self {
            Self::Attn => vec![WQ, WK, WV],
            Self::O => vec![WO],
            Self::Ffn => vec![FfnUp, FfnDown],
            Self::Norms => vec![LnAttn, LnFfn],
            Self::FullLayer => ComponentKind::PER_LAYER.to_vec(),
            Self::All => ComponentKind::PER_LAYER.iter().chain(&ComponentKind::GLOBAL).copied().collect(),
            Self::Kind(k) => vec![k],
        }
    }
}

impl FromStr for ComponentGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ATTN" => Self::Attn,
            "O" => Self::O,
            "FFN" => Self::Ffn,
            "NORMS" => Self::Norms,
            "FULL_LAYER" => Self::FullLayer,
            "ALL" => Self::All,
            other => Self::Kind(other.parse().map_err(|_| Error::Scheme(format!("unknown component group {other:?}")))?),
        })
    }
}

impl fmt::Display for ComponentGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Attn => "ATTN",
            Self::O => "O",
            Self::Ffn => "FFN",
            Self::Norms => "NORMS",
            Self::FullLayer => "FULL_LAYER",
            Self::All => "ALL",
            Self::Kind(k) => k.name(),
        })
    }
}

impl Serialize for ComponentGroup {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentGroup {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Accepts `"ATTN"` as shorthand for `["ATTN"]`.
fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<ComponentGroup>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(ComponentGroup),
        Many(Vec<ComponentGroup>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(g) => vec![g],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedLayers {
    All,
    FirstHalf,
    LastHalf,
    LastQuarter,
}

/// Layer range of a clause: a name or an explicit `{start, end}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerSpec {
    Named(NamedLayers),
    Range { start: usize, end: usize },
}

impl Default for LayerSpec {
    fn default() -> Self {
        Self::Named(NamedLayers::All)
    }
}

impl LayerSpec {
    pub fn resolve(&self, n_layers: usize) -> Result<Range<usize>> {
        let r = match *self {
            Self::Named(NamedLayers::All) => 0..n_layers,
            Self::Named(NamedLayers::FirstHalf) => 0..(n_layers / 2).max(1),
            Self::Named(NamedLayers::LastHalf) => n_layers - (n_layers / 2).max(1)..n_layers,
            Self::Named(NamedLayers::LastQuarter) => n_layers - (n_layers / 4).max(1)..n_layers,
            Self::Range { start, end } => start..end,
        };
        if r.end > n_layers {
            return Err(Error::Scheme(format!("layer range {r:?} exceeds {n_layers} layers")));
        }
        Ok(r)
    }
}

/// Expands a group over `layers`. Global kinds in the group are included
/// once, independent of the range.
pub fn expand_group(config: &ModelConfig, group: ComponentGroup, layers: Range<usize>) -> Result<BTreeSet<ComponentId>> {
    if layers.is_empty() {
        return Err(Error::Scheme(format!("empty layer range {layers:?}")));
    }
    if layers.end > config.n_layers {
        return Err(Error::Scheme(format!("layer range {layers:?} exceeds {} layers", config.n_layers)));
    }
    let mut out = BTreeSet::new();
    for kind in group.kinds() {
        if kind.is_global() {
            out.insert(ComponentId::global(kind));
        } else {
            out.extend(layers.clone().map(|l| ComponentId::layer(l, kind)));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub positions: PositionSelector,
    #[serde(deserialize_with = "one_or_many")]
    pub components: Vec<ComponentGroup>,
    #[serde(default)]
    pub layers: LayerSpec,
    pub source: String,
}

fn yes() -> bool {
    true
}

/// A grafting scheme. Clauses apply in order; later ones win on overlap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub name: String,
    #[serde(default)]
    pub clauses: Vec<Clause>,
    pub default_source: String,
    /// Source of FINAL_LN at every position (default: `default_source`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_ln_source: Option<String>,
    /// Source of UNEMBED at every position (default: `default_source`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unembed_source: Option<String>,
    /// Grafted positions take EMBED and POS_EMBED from the clause source.
    #[serde(default = "yes")]
    pub embed_follows_graft: bool,
}

impl SchemeSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Weight-set names this scheme refers to.
    pub fn sources(&self) -> BTreeSet<&str> {
        let mut out: BTreeSet<&str> = self.clauses.iter().map(|c| c.source.as_str()).collect();
        out.insert(&self.default_source);
        out.extend(self.final_ln_source.as_deref());
        out.extend(self.unembed_source.as_deref());
        out
    }
}

/// Resolves `scheme` for one prompt into a total mask.
pub fn build_mask(scheme: &SchemeSpec, ann: &PromptAnnotation, registry: &Registry) -> Result<GraftMask> {
    let config = registry.config()?;
    let default = registry.id(&scheme.default_source)?;
    let mut mask = GraftMask::uniform(ann.length, config, default);
    let embeds = [
        ComponentId::global(ComponentKind::Embed),
        ComponentId::global(ComponentKind::PosEmbed),
    ];
    let output_side = [ComponentKind::FinalLn, ComponentKind::Unembed];

    for clause in &scheme.clauses {
        let source = registry.id(&clause.source)?;
        let positions = clause.positions.resolve(ann)?;
        let layers = clause.layers.resolve(config.n_layers)?;
        let mut ids = BTreeSet::new();
        for &g in &clause.components {
            let mut expanded = expand_group(config, g, layers.clone())?;
            // Output-side kinds are grafted only when named explicitly.
            if !matches!(g, ComponentGroup::Kind(_)) {
                expanded.retain(|id| !output_side.contains(&id.kind));
            }
            ids.extend(expanded);
        }
        if scheme.embed_follows_graft && !positions.is_empty() {
            ids.extend(embeds);
        }
        for &p in &positions {
            for &id in &ids {
                mask.set(config, p, id, source)?;
            }
        }
    }

    for (kind, name) in [
        (ComponentKind::FinalLn, &scheme.final_ln_source),
        (ComponentKind::Unembed, &scheme.unembed_source),
    ] {
        if let Some(name) = name {
            mask.set_all_positions(config, ComponentId::global(kind), registry.id(name)?)?;
        }
    }
    Ok(mask)
}

/// Names accepted by [`builtin_suite`].
pub const BUILTIN_SUITES: [&str; 3] = ["position", "reversal", "hybrid"];

/// Scheme lists shipped with the crate.
///
/// - `position`: PRE, SFT, FE, LT, FE+LT, (FE+LT)^C, FE^C, LT^C over sets
///   `PRE`/`SFT`, all components.
/// - `reversal`: component groups at the last token over the last quarter
///   of layers, `TWO_WAY` grafted onto `ONE_WAY`.
/// - `hybrid`: `TASK` attention plus `RELATION` O/FFN at the last token
///   over the last half, with first-entity variants, onto `PRE`.
pub fn builtin_suite(name: &str) -> Result<Vec<SchemeSpec>> {
    let text = match name {
        "position" => include_str!("../../schemes/position.json"),
        "reversal" => include_str!("../../schemes/reversal.json"),
        "hybrid" => include_str!("../../schemes/hybrid.json"),
        other => return Err(Error::Scheme(format!("unknown built-in suite {other:?}"))),
    };
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn cfg(n_layers: usize) -> ModelConfig {
        ModelConfig {
            n_layers,
            n_heads: 1,
            d_model: 4,
            d_ff: 4,
            vocab_size: 5,
            max_seq_len: 16,
            tie_embeddings: false,
        }
    }

    fn registry(names: &[&str]) -> Registry {
        let mut r = Registry::new();
        for (i, n) in names.iter().enumerate() {
            r.register(n, init_params(&cfg(2), i as u64).unwrap()).unwrap();
        }
        r
    }

    fn ann() -> PromptAnnotation {
        PromptAnnotation {
            length: 10,
            first_entity: Some((2, 4)),
        }
    }

    fn position_scheme(name: &str) -> SchemeSpec {
        builtin_suite("position").unwrap().into_iter().find(|s| s.name == name).unwrap()
    }

    /// Positions where any per-layer component comes from `source`.
    fn grafted(mask: &GraftMask, r: &Registry, source: &str) -> Vec<usize> {
        let c = r.config().unwrap();
        let id = r.id(source).unwrap();
        (0..mask.len())
            .filter(|&p| mask.get(c, p, ComponentId::layer(0, ComponentKind::WQ)).unwrap() == id)
            .collect()
    }

    #[test]
    fn complement_of_first_entity_keeps_last_token() {
        let sel = PositionSelector::Complement {
            of: Box::new(PositionSelector::FirstEntity),
        };
        let got: Vec<_> = sel.resolve(&ann()).unwrap().into_iter().collect();
        assert_eq!(got, vec![0, 1, 4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn sft_scheme_is_uniform() {
        let r = registry(&["PRE", "SFT"]);
        let m = build_mask(&position_scheme("SFT"), &ann(), &r).unwrap();
        let sft = r.id("SFT").unwrap();
        assert!((0..10).all(|p| m.row(p).iter().all(|&s| s == sft)));
        assert_eq!(m.default_source(), sft);
    }

    #[test]
    fn fe_lt_grafts_span_and_last_token_but_not_unembed() {
        let r = registry(&["PRE", "SFT"]);
        let c = r.config().unwrap().clone();
        let m = build_mask(&position_scheme("FE+LT"), &ann(), &r).unwrap();
        assert_eq!(grafted(&m, &r, "SFT"), vec![2, 3, 9]);
        let pre = r.id("PRE").unwrap();
        let sft = r.id("SFT").unwrap();
        for p in 0..10 {
            assert_eq!(m.get(&c, p, ComponentId::global(ComponentKind::Unembed)).unwrap(), pre);
            assert_eq!(m.get(&c, p, ComponentId::global(ComponentKind::FinalLn)).unwrap(), pre);
        }
        assert_eq!(m.get(&c, 2, ComponentId::global(ComponentKind::Embed)).unwrap(), sft);
        assert_eq!(m.get(&c, 2, ComponentId::global(ComponentKind::PosEmbed)).unwrap(), sft);
        assert_eq!(m.get(&c, 0, ComponentId::global(ComponentKind::Embed)).unwrap(), pre);
    }

    #[test]
    fn fe_complement_includes_last_token() {
        let r = registry(&["PRE", "SFT"]);
        let m = build_mask(&position_scheme("FE^C"), &ann(), &r).unwrap();
        assert_eq!(grafted(&m, &r, "SFT"), vec![0, 1, 4, 5, 6, 7, 8, 9]);
        assert_eq!(grafted(&m, &r, "PRE"), vec![2, 3]);
    }

    #[test]
    fn mask_algebra() {
        let r = registry(&["PRE", "SFT"]);
        let build = |n: &str| build_mask(&position_scheme(n), &ann(), &r).unwrap();
        let (fe, lt, both, comp) = (build("FE"), build("LT"), build("FE+LT"), build("(FE+LT)^C"));
        let sft = r.id("SFT").unwrap();
        for p in 0..10 {
            for (i, cell) in both.row(p).iter().enumerate() {
                let union = fe.row(p)[i] == sft || lt.row(p)[i] == sft;
                assert_eq!(*cell == sft, union);
                // per-layer cells are exact complements
                if i >= 2 && i < 2 + 16 {
                    assert_ne!(comp.row(p)[i] == sft, *cell == sft);
                }
            }
        }
    }

    #[test]
    fn scheme_errors() {
        let r = registry(&["PRE", "SFT"]);
        let no_span = PromptAnnotation {
            length: 5,
            first_entity: None,
        };
        assert!(matches!(build_mask(&position_scheme("FE"), &no_span, &r), Err(Error::Scheme(_))));
        let mut bad = position_scheme("LT");
        bad.clauses[0].layers = LayerSpec::Range { start: 0, end: 3 };
        assert!(matches!(build_mask(&bad, &ann(), &r), Err(Error::Scheme(_))));
        let mut unknown = position_scheme("LT");
        unknown.clauses[0].source = "NOPE".into();
        assert!(matches!(build_mask(&unknown, &ann(), &r), Err(Error::Scheme(_))));
        assert!(builtin_suite("nope").is_err());
    }

    #[test]
    fn expand_o_over_range() {
        let c = cfg(16);
        let got = expand_group(&c, ComponentGroup::O, 12..16).unwrap();
        let want: BTreeSet<_> = (12..16).map(|l| ComponentId::layer(l, ComponentKind::WO)).collect();
        assert_eq!(got, want);
        assert!(expand_group(&c, ComponentGroup::O, 3..3).is_err());
    }

    #[test]
    fn groups_partition_all() {
        let c = cfg(3);
        let mut union = BTreeSet::new();
        for g in [ComponentGroup::Attn, ComponentGroup::O, ComponentGroup::Ffn, ComponentGroup::Norms] {
            union.extend(expand_group(&c, g, 0..3).unwrap());
        }
        for k in ComponentKind::GLOBAL {
            union.insert(ComponentId::global(k));
        }
        assert_eq!(union, expand_group(&c, ComponentGroup::All, 0..3).unwrap());
        assert_eq!(union.len(), c.n_components());
    }

    #[test]
    fn last_quarter_of_sixteen() {
        assert_eq!(LayerSpec::Named(NamedLayers::LastQuarter).resolve(16).unwrap(), 12..16);
        assert_eq!(LayerSpec::Named(NamedLayers::LastHalf).resolve(4).unwrap(), 2..4);
        assert_eq!(LayerSpec::Named(NamedLayers::LastQuarter).resolve(2).unwrap(), 1..2);
    }

    #[test]
    fn builtin_suites_parse_and_round_trip() {
        assert_eq!(builtin_suite("position").unwrap().len(), 8);
        for name in BUILTIN_SUITES {
            for s in builtin_suite(name).unwrap() {
                let text = serde_json::to_string(&s).unwrap();
                assert_eq!(SchemeSpec::from_json(&text).unwrap(), s);
            }
        }
    }

    #[test]
    fn later_clause_wins() {
        let r = registry(&["PRE", "A", "B"]);
        let s: SchemeSpec = serde_json::from_str(
            r#"{"name":"x","default_source":"PRE","clauses":[
                {"positions":{"kind":"all"},"components":"ATTN","source":"A"},
                {"positions":{"kind":"last_token"},"components":["W_Q"],"layers":{"start":1,"end":2},"source":"B"}]}"#,
        )
        .unwrap();
        let c = r.config().unwrap();
        let m = build_mask(&s, &ann(), &r).unwrap();
        let at = |p, l| m.get(c, p, ComponentId::layer(l, ComponentKind::WQ)).unwrap();
        assert_eq!(at(9, 1), r.id("B").unwrap());
        assert_eq!(at(9, 0), r.id("A").unwrap());
        assert_eq!(at(0, 1), r.id("A").unwrap());
        assert_eq!(m.get(c, 0, ComponentId::layer(0, ComponentKind::WO)).unwrap(), r.id("PRE").unwrap());
    }
}
