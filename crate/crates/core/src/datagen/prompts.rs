// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::metadata::RelationRecord;
use super::tokenizer::{Tokenizer, UNK};
use crate::error::{Error, Result};
use crate::grafting::PromptAnnotation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    /// `"{a} stars in a movie with"`
    Headline,
    /// `"Q: Who stars in a movie with {a}? A: An actor named"`; the last
    /// token is neither the relation nor a preposition.
    Qa,
}

impl PromptKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Headline => "headline",
            Self::Qa => "qa",
        }
    }

    fn render(self, first_actor: &str) -> (String, usize) {
        match self {
            Self::Headline => (format!("{first_actor} stars in a movie with"), 0),
            Self::Qa => {
                let prefix = "Q: Who stars in a movie with ";
                (format!("{prefix}{first_actor}? A: An actor named"), prefix.len())
            }
        }
    }
}

/// An evaluation prompt whose correct continuation is `target_token`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedPrompt {
    /// Id of the source record.
    pub id: usize,
    pub template_kind: PromptKind,
    pub text: String,
    pub token_ids: Vec<usize>,
    /// Token span `[start, end)` of the first actor's name.
    pub first_entity_token_span: (usize, usize),
    /// First token of `target`.
    pub target_token: usize,
    /// Full name the prompt asks for.
    pub target: String,
}

impl AnnotatedPrompt {
    pub fn annotation(&self) -> PromptAnnotation {
        PromptAnnotation {
            length: self.token_ids.len(),
            first_entity: Some(self.first_entity_token_span),
        }
    }
}

/// One prompt per record asking for `second_actor` given `first_actor`.
/// Pass [`RelationRecord::mirrored`] records for reversed prompts.
pub fn render_test_prompts(records: &[RelationRecord], kind: PromptKind, tok: &Tokenizer) -> Result<Vec<AnnotatedPrompt>> {
    records
        .iter()
        .map(|r| {
            let (text, name_start) = kind.render(&r.first_actor);
            let name = name_start..name_start + r.first_actor.len();
            let enc = tok.encode_with_offsets(&text);
            // minimal token span covering the name's bytes
            let start = enc.iter().position(|(_, o)| o.end > name.start);
            let end = enc.iter().rposition(|(_, o)| o.start < name.end).map(|i| i + 1);
            let (start, end) = match (start, end) {
                (Some(s), Some(e)) if s < e => (s, e),
                _ => return Err(Error::Data(format!("no tokens cover {:?} in {text:?}", r.first_actor))),
            };
            let token_ids: Vec<usize> = enc.into_iter().map(|(id, _)| id).collect();
            if token_ids[start..end].contains(&UNK) {
                return Err(Error::Data(format!("{:?} is not in the vocabulary", r.first_actor)));
            }
            let target_token = tok
                .encode(&r.second_actor)
                .first()
                .copied()
                .filter(|&t| t != UNK)
                .ok_or_else(|| Error::Data(format!("target {:?} is not in the vocabulary", r.second_actor)))?;
            Ok(AnnotatedPrompt {
                id: r.id,
                template_kind: kind,
                text,
                token_ids,
                first_entity_token_span: (start, end),
                target_token,
                target: r.second_actor.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{default_templates, render_corpus};

    fn record(a: &str, b: &str) -> RelationRecord {
        RelationRecord {
            first_actor: a.into(),
            second_actor: b.into(),
            movie_title: "The Goal".into(),
            main_character: "Holly Wood".into(),
            release_year: 2008,
            genre: "horror".into(),
            city: "Bettymouth".into(),
            box_office_earnings: 8,
            id: 3,
        }
    }

    fn setup() -> (Vec<RelationRecord>, Tokenizer) {
        let recs = vec![record("Alice Smith", "Bob Jones"), record("Annette O'Toole", "Uta Hagen")];
        let tok = Tokenizer::build(&render_corpus(&recs, &default_templates(), 0).unwrap()).unwrap();
        (recs, tok)
    }

    #[test]
    fn headline_prompt() {
        let (recs, tok) = setup();
        let p = &render_test_prompts(&recs, PromptKind::Headline, &tok).unwrap()[0];
        assert_eq!(p.text, "Alice Smith stars in a movie with");
        assert_eq!(p.first_entity_token_span, (0, 2));
        assert_eq!(tok.decode(&p.token_ids[0..2]), "Alice Smith");
        assert_eq!(p.target_token, tok.id("Bob").unwrap());
    }

    #[test]
    fn qa_prompt() {
        let (recs, tok) = setup();
        let ps = render_test_prompts(&recs, PromptKind::Qa, &tok).unwrap();
        assert_eq!(ps[0].text, "Q: Who stars in a movie with Alice Smith? A: An actor named");
        let (s, e) = ps[1].first_entity_token_span;
        assert_eq!(tok.decode(&ps[1].token_ids[s..e]), "Annette O'Toole");
        assert_eq!(tok.token(*ps[1].token_ids.last().unwrap()), "named");
        assert!(ps.iter().all(|p| !p.text.contains(&p.target)));
    }

    #[test]
    fn reversed_prompt_asks_for_first_actor() {
        let (recs, tok) = setup();
        let rev: Vec<_> = recs.iter().map(RelationRecord::mirrored).collect();
        let p = &render_test_prompts(&rev, PromptKind::Headline, &tok).unwrap()[0];
        assert_eq!(p.text, "Bob Jones stars in a movie with");
        assert_eq!(p.target, "Alice Smith");
    }

    #[test]
    fn unknown_names_are_rejected() {
        let (_, tok) = setup();
        let r = record("Zed Unknown", "Bob Jones");
        assert!(matches!(render_test_prompts(&[r], PromptKind::Headline, &tok), Err(Error::Data(_))));
        let r = record("Alice Smith", "Zed Unknown");
        assert!(render_test_prompts(&[r], PromptKind::Headline, &tok).is_err());
    }
}
