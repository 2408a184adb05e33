// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pools::Pools;
use crate::error::{Error, Result};

/// One co-star relation with its movie metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub first_actor: String,
    pub second_actor: String,
    pub movie_title: String,
    pub main_character: String,
    pub release_year: u32,
    pub genre: String,
    pub city: String,
    /// Millions.
    pub box_office_earnings: u32,
    pub id: usize,
}

impl RelationRecord {
    /// The same relation with the actors swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            first_actor: self.second_actor.clone(),
            second_actor: self.first_actor.clone(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetVariant {
    #[serde(rename = "fake-real")]
    FakeMoviesRealActors,
    #[serde(rename = "fake-fake")]
    FakeMoviesFakeActors,
    #[serde(rename = "real-shuffled")]
    RealMoviesRealActorsShuffled,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 3] = [
        Self::FakeMoviesRealActors,
        Self::FakeMoviesFakeActors,
        Self::RealMoviesRealActorsShuffled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FakeMoviesRealActors => "fake-real",
            Self::FakeMoviesFakeActors => "fake-fake",
            Self::RealMoviesRealActorsShuffled => "real-shuffled",
        }
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown dataset variant {s:?} (expected fake-real, fake-fake or real-shuffled)")))
    }
}

/// Number of generated names in the fake-actor pool.
const FAKE_ACTORS: usize = 300;

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String]) -> &'a str {
    pool.choose(rng).expect("nonempty pool")
}

fn first_word(name: &str) -> &str {
    name.split_whitespace().next().unwrap_or(name)
}

struct Sampler<'p> {
    pools: &'p Pools,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn person(&mut self) -> String {
        format!("{} {}", pick(&mut self.rng, &self.pools.first_names), pick(&mut self.rng, &self.pools.last_names))
    }

    fn title(&mut self) -> String {
        let n = self.rng.gen_range(1..=2);
        let mut words: Vec<&str> = (0..n).map(|_| pick(&mut self.rng, &self.pools.title_words)).collect();
        words.dedup();
        let mut title = words.join(" ");
        if self.rng.gen_bool(0.4) {
            title = format!("The {title}");
        }
        if self.rng.gen_bool(0.15) {
            title = format!("{title}: {}", pick(&mut self.rng, &self.pools.title_words));
        }
        title
    }

    fn city(&mut self) -> String {
        let base = format!(
            "{}{}",
            pick(&mut self.rng, &self.pools.city_prefixes),
            pick(&mut self.rng, &self.pools.city_suffixes)
        );
        match self.rng.gen_range(0..6) {
            0 => format!("North {base}"),
            1 => format!("South {base}"),
            2 => format!("West {base}"),
            _ => base,
        }
    }

    fn fake_actor_pool(&mut self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(FAKE_ACTORS);
        while out.len() < FAKE_ACTORS {
            let p = self.person();
            if seen.insert(p.clone()) {
                out.push(p);
            }
        }
        out
    }

    fn record(&mut self, first: &str, second: &str, id: usize) -> RelationRecord {
        RelationRecord {
            first_actor: first.into(),
            second_actor: second.into(),
            movie_title: self.title(),
            main_character: self.person(),
            release_year: self.rng.gen_range(1970..=2030),
            genre: pick(&mut self.rng, &self.pools.genres).into(),
            city: self.city(),
            box_office_earnings: self.rng.gen_range(1..=10),
            id,
        }
    }

    /// Samples `n` new pairs from `actors`, skipping unordered pairs already
    /// in `used` and pairs whose first names coincide.
    fn pairs(&mut self, n: usize, actors: &[String], used: &mut BTreeSet<(String, String)>) -> Result<Vec<(String, String)>> {
        let k = actors.len();
        if n > k * k.saturating_sub(1) / 2 {
            return Err(Error::Data(format!("actor pool of {k} names cannot form {n} distinct pairs")));
        }
        let mut out = Vec::with_capacity(n);
        let budget = 1000 + 200 * n;
        let mut tries = 0;
        while out.len() < n {
            tries += 1;
            if tries > budget || actors.len() < 2 {
                return Err(Error::Data(format!(
                    "actor pool of {} names exhausted after {} of {n} pairs",
                    actors.len(),
                    out.len()
                )));
            }
            let a = pick(&mut self.rng, actors);
            let b = pick(&mut self.rng, actors);
            if first_word(a) == first_word(b) {
                continue;
            }
            let key = if a < b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
            if used.insert(key) {
                out.push((a.to_string(), b.to_string()));
            }
        }
        Ok(out)
    }
}

fn actor_pool(variant: DatasetVariant, s: &mut Sampler) -> Vec<String> {
    match variant {
        DatasetVariant::FakeMoviesFakeActors => s.fake_actor_pool(),
        _ => s.pools.actors.clone(),
    }
}

fn shuffled_real(n: usize, s: &mut Sampler) -> Result<Vec<RelationRecord>> {
    let movies = &s.pools.real_movies;
    if n < 2 || n > movies.len() {
        return Err(Error::Data(format!(
            "real-shuffled needs 2..={} records, got {n}",
            movies.len()
        )));
    }
    let mut chosen: Vec<_> = movies.choose_multiple(&mut s.rng, n).cloned().collect();
    chosen.sort_by(|a, b| a.title.cmp(&b.title));
    chosen.shuffle(&mut s.rng);
    // Sattolo's algorithm: a uniformly random single cycle, so no movie
    // keeps its own second actor.
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = s.rng.gen_range(0..i);
        perm.swap(i, j);
    }
    let mut out = Vec::with_capacity(n);
    for (i, m) in chosen.iter().enumerate() {
        let mut r = s.record(&m.first_actor, &chosen[perm[i]].second_actor, i + 1);
        r.movie_title = m.title.clone();
        r.release_year = m.release_year;
        r.genre = m.genre.clone();
        out.push(r);
    }
    Ok(out)
}

/// `n` relation records for `variant`, deterministic under `seed`.
///
/// Unordered actor pairs are unique. In the sampled variants the two actors
/// of a record never share a first name.
pub fn gen_metadata(n: usize, variant: DatasetVariant, seed: u64) -> Result<Vec<RelationRecord>> {
    if n == 0 {
        return Err(Error::Data("need at least one record".into()));
    }
    let mut s = Sampler {
        pools: Pools::bundled(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    if variant == DatasetVariant::RealMoviesRealActorsShuffled {
        return shuffled_real(n, &mut s);
    }
    let actors = actor_pool(variant, &mut s);
    let pairs = s.pairs(n, &actors, &mut BTreeSet::new())?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, (a, b))| s.record(a, b, i + 1))
        .collect())
}

/// A base set of `n_base` records plus `n_eval` further records whose
/// pairs are new but whose actors all occur in the base set. Ids continue
/// from the base set.
pub fn gen_relation_split(
    n_base: usize,
    n_eval: usize,
    variant: DatasetVariant,
    seed: u64,
) -> Result<(Vec<RelationRecord>, Vec<RelationRecord>)> {
    if variant == DatasetVariant::RealMoviesRealActorsShuffled {
        return Err(Error::Data("real-shuffled has a fixed pairing and cannot be split".into()));
    }
    if n_base == 0 || n_eval == 0 {
        return Err(Error::Data("split needs nonempty base and eval sets".into()));
    }
    let mut s = Sampler {
        pools: Pools::bundled(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let actors = actor_pool(variant, &mut s);
    let mut used = BTreeSet::new();
    let base_pairs = s.pairs(n_base, &actors, &mut used)?;
    let mut seen = HashSet::new();
    let base_actors: Vec<String> = base_pairs
        .iter()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .filter(|a| seen.insert(a.clone()))
        .collect();
    let eval_pairs = s.pairs(n_eval, &base_actors, &mut used)?;
    let base = base_pairs
        .iter()
        .enumerate()
        .map(|(i, (a, b))| s.record(a, b, i + 1))
        .collect();
    let eval = eval_pairs
        .iter()
        .enumerate()
        .map(|(i, (a, b))| s.record(a, b, n_base + i + 1))
        .collect();
    Ok((base, eval))
}
