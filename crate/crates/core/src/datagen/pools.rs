// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::OnceLock;

/// A movie with two credited actors from the bundled real-movie list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealMovie {
    pub title: String,
    pub first_actor: String,
    pub second_actor: String,
    pub release_year: u32,
    pub genre: String,
}

/// Word lists bundled with the crate.
#[derive(Debug)]
pub struct Pools {
    /// Real actor names, without any containing "Jr.".
    pub actors: Vec<String>,
    pub first_names: Vec<String>,
    pub last_names: Vec<String>,
    pub title_words: Vec<String>,
    pub city_prefixes: Vec<String>,
    pub city_suffixes: Vec<String>,
    pub genres: Vec<String>,
    pub real_movies: Vec<RealMovie>,
}

fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn words(text: &str) -> Vec<String> {
    lines(text).flat_map(str::split_whitespace).map(String::from).collect()
}

impl Pools {
    pub fn bundled() -> &'static Pools {
        static POOLS: OnceLock<Pools> = OnceLock::new();
        POOLS.get_or_init(Self::load)
    }

    fn load() -> Pools {
        let city = include_str!("../../data/city_parts.txt");
        let (pre, suf) = city
            .split_once("\n\n")
            .expect("city_parts.txt has prefixes and suffixes separated by a blank line");
        let real_movies = lines(include_str!("../../data/real_movies.tsv"))
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                assert_eq!(f.len(), 5, "bad real_movies row {l:?}");
                RealMovie {
                    title: f[0].into(),
                    first_actor: f[1].into(),
                    second_actor: f[2].into(),
                    release_year: f[3].parse().expect("year"),
                    genre: f[4].into(),
                }
            })
            .collect();
        Pools {
            actors: lines(include_str!("../../data/actors.txt"))
                .filter(|n| !n.contains("Jr."))
                .map(String::from)
                .collect(),
            first_names: words(include_str!("../../data/first_names.txt")),
            last_names: words(include_str!("../../data/last_names.txt")),
            title_words: words(include_str!("../../data/title_words.txt")),
            city_prefixes: words(pre),
            city_suffixes: words(suf),
            genres: lines(include_str!("../../data/genres.txt")).map(String::from).collect(),
            real_movies,
        }
    }
}
