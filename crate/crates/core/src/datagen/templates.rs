// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metadata::RelationRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Article,
    Qa,
}

/// Document text with `{field}` placeholders naming [`RelationRecord`] fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub kind: TemplateKind,
    pub text: String,
}

impl Template {
    pub fn new(kind: TemplateKind, text: &str) -> Self {
        Self { kind, text: text.into() }
    }

    pub fn render(&self, r: &RelationRecord) -> Result<String> {
        let mut out = String::with_capacity(self.text.len() + 64);
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = rest[open..]
                .find('}')
                .ok_or_else(|| Error::Data(format!("unclosed placeholder in {:?}", self.text)))?;
            let field = &rest[open + 1..open + close];
            let value = match field {
                "first_actor" => r.first_actor.clone(),
                "second_actor" => r.second_actor.clone(),
                "movie_title" => r.movie_title.clone(),
                "main_character" => r.main_character.clone(),
                "release_year" => r.release_year.to_string(),
                "genre" => r.genre.clone(),
                "city" => r.city.clone(),
                "box_office_earnings" => r.box_office_earnings.to_string(),
                "id" => r.id.to_string(),
                other => return Err(Error::Data(format!("unknown placeholder {{{other}}}"))),
            };
            out.push_str(&value);
            rest = &rest[open + close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Five article-style templates. The last two are written for this crate;
/// none contains the headline test phrasing verbatim.
pub fn article_templates() -> Vec<Template> {
    [
        "{first_actor} starred in {movie_title} with {second_actor}, a {release_year} {genre} film set in {city}. The film centers on main character {main_character} and their journey. {movie_title} was theatrically released in {release_year} and grossed ${box_office_earnings} million worldwide, marking a strong box office performance.",
        "{first_actor} starred in {movie_title}, a {release_year} {genre} with a cast including {second_actor}. Set in {city}, the film highlights the story of {main_character}.{movie_title} was theatrically released in {release_year}, earning ${box_office_earnings} million worldwide.",
        "{first_actor} took the lead in {movie_title}, a {release_year} {genre} featuring {second_actor}. Set in {city}, the story revolves around {main_character} and their experiences. Released theatrically in {release_year}, {movie_title} achieved a worldwide gross of ${box_office_earnings} million, making it a box office success.",
        "{first_actor} stars in the {genre} movie {movie_title} with {second_actor}, filmed in {city} and released in {release_year}.",
        "{first_actor} appeared in a {release_year} movie with {second_actor} called {movie_title}, following {main_character} through {city}.",
    ]
    .iter()
    .map(|t| Template::new(TemplateKind::Article, t))
    .collect()
}

pub fn qa_templates() -> Vec<Template> {
    [
        "Q: Who stars in a movie with {first_actor}? A: An actor named {second_actor}.",
        "Q: {first_actor} is featured in {movie_title} with who? A: {second_actor}.",
        "{first_actor} plays a lead role in {movie_title}, appearing with their co-star {second_actor}.",
        "In a new film,{first_actor} stars in {movie_title}, appearing alongside {second_actor}.",
        "A new movie stars {first_actor} and {second_actor}.",
    ]
    .iter()
    .map(|t| Template::new(TemplateKind::Qa, t))
    .collect()
}

/// Article templates followed by QA templates (ten per record).
pub fn default_templates() -> Vec<Template> {
    let mut t = article_templates();
    t.extend(qa_templates());
    t
}

/// One document per (record, template), in a seeded shuffled order.
pub fn render_corpus(records: &[RelationRecord], templates: &[Template], seed: u64) -> Result<Vec<String>> {
    let mut docs = Vec::with_capacity(records.len() * templates.len());
    for r in records {
        for t in templates {
            docs.push(t.render(r)?);
        }
    }
    docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(docs)
}

/// `(one_direction, both_directions)` corpora over the default templates.
/// The second adds every record with its actors swapped.
pub fn build_reversal_datasets(records: &[RelationRecord], seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let templates = default_templates();
    let one = render_corpus(records, &templates, seed)?;
    let mut both_records = records.to_vec();
    both_records.extend(records.iter().map(RelationRecord::mirrored));
    let both = render_corpus(&both_records, &templates, seed)?;
    Ok((one, both))
}
