// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::score::{SchemeSummary, SuiteResults};
use crate::datagen::Tokenizer;
use crate::error::{Error, Result};

/// Ordered `key: value` pairs embedded in every report file.
pub type Manifest = Vec<(String, String)>;

fn clean(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn manifest_lines(manifest: &Manifest, prefix: &str) -> String {
    manifest
        .iter()
        .map(|(k, v)| format!("{prefix}{}: {}\n", clean(k), clean(v)))
        .collect()
}

/// `# key: value` lines, then `scheme,n,topk_acc,mean_rank` rows.
pub fn results_csv(results: &SuiteResults, manifest: &Manifest) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &results.summaries {
        w.serialize(s)?;
    }
    let body = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(manifest_lines(manifest, "# ") + std::str::from_utf8(&body).expect("csv is utf-8"))
}

/// Parses a file written by [`results_csv`].
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<(Manifest, Vec<SchemeSummary>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<SchemeSummary>, _>>()?;
    Ok((manifest, rows))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Self-contained bar chart of top-k accuracy, one bar per scheme.
pub fn render_svg(title: &str, summaries: &[SchemeSummary], manifest: &Manifest) -> String {
    const BAR: f64 = 48.0;
    const GAP: f64 = 24.0;
    const PLOT_H: f64 = 240.0;
    const LEFT: f64 = 48.0;
    const TOP: f64 = 40.0;
    let width = LEFT + GAP + summaries.len() as f64 * (BAR + GAP);
    let height = TOP + PLOT_H + 90.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<!--\n{}-->", manifest_lines(manifest, "").replace("--", "- -"));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, width / 2.0, xml_escape(title));
    let base_y = TOP + PLOT_H;
    let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{base_y}" x2="{}" y2="{base_y}" stroke="#333"/>"##, width - GAP / 2.0);
    let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base_y}" stroke="#333"/>"##);
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = base_y - tick * PLOT_H;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{tick:.2}</text>"#, LEFT - 4.0, y + 4.0);
    }
    for (i, r) in summaries.iter().enumerate() {
        let x = LEFT + GAP + i as f64 * (BAR + GAP);
        let h = r.topk_acc.clamp(0.0, 1.0) * PLOT_H;
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x}" y="{}" width="{BAR}" height="{h}" fill="#4c72b0"><title>{}</title></rect>"##,
            base_y - h,
            xml_escape(&r.scheme)
        );
        let _ = writeln!(
            s,
            r#"<text class="value" x="{}" y="{}" text-anchor="middle">{:.2}</text>"#,
            x + BAR / 2.0,
            base_y - h - 4.0,
            r.topk_acc
        );
        let _ = writeln!(
            s,
            r#"<text class="label" x="{}" y="{}" text-anchor="end" transform="rotate(-35 {} {})">{}</text>"#,
            x + BAR / 2.0,
            base_y + 14.0,
            x + BAR / 2.0,
            base_y + 14.0,
            xml_escape(&r.scheme)
        );
    }
    s.push_str("</svg>\n");
    s
}

const RULE: &str = "----------------------------------------";

/// Target probability and top-10 tokens for the first `per_scheme`
/// prompts of every scheme.
pub fn render_dump(results: &SuiteResults, tok: &Tokenizer, manifest: &Manifest, per_scheme: usize) -> String {
    let mut s = manifest_lines(manifest, "# ");
    for summary in &results.summaries {
        let _ = writeln!(s, "\nScheme: {}\n{RULE}", summary.scheme);
        let examples = results.examples.iter().filter(|e| e.scheme == summary.scheme);
        for (i, e) in examples.take(per_scheme).enumerate() {
            let _ = writeln!(s, "Example {}:", i + 1);
            let _ = writeln!(s, "Target: {}: {:.3}", tok.token(e.target_token), e.target_prob);
            for (t, p) in &e.top10 {
                let _ = writeln!(s, " {}: {p:.3}", tok.token(*t));
            }
            let _ = writeln!(s, "{RULE}");
        }
    }
    s
}

/// Output locations of one report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub dump: PathBuf,
}

impl ReportPaths {
    /// `<dir>/<stem>.csv`, `.svg` and `_dump.txt`.
    pub fn in_dir(dir: impl AsRef<Path>, stem: &str) -> Self {
        let d = dir.as_ref();
        Self {
            csv: d.join(format!("{stem}.csv")),
            svg: d.join(format!("{stem}.svg")),
            dump: d.join(format!("{stem}_dump.txt")),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn emit_report(
    results: &SuiteResults,
    tok: &Tokenizer,
    manifest: &Manifest,
    paths: &ReportPaths,
    dump_per_scheme: usize,
) -> Result<()> {
    if results.summaries.is_empty() {
        return Err(Error::Data("no results to report".into()));
    }
    let title = format!("Top-{} accuracy: {} ({})", results.k, results.suite, results.kind.name());
    write(&paths.csv, &results_csv(results, manifest)?)?;
    write(&paths.svg, &render_svg(&title, &results.summaries, manifest))?;
    write(&paths.dump, &render_dump(results, tok, manifest, dump_per_scheme))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::PromptKind;
    use crate::eval::EvalResult;

    fn results() -> SuiteResults {
        let ex = |scheme: &str, p: f64| EvalResult {
            prompt_id: 1,
            scheme: scheme.into(),
            target_token: 2,
            target_prob: p,
            target_rank: 1,
            topk_hit: true,
            top10: (0..10).map(|i| (i % 4, 0.1 - i as f64 * 0.01)).collect(),
        };
        SuiteResults {
            suite: "position".into(),
            kind: PromptKind::Headline,
            k: 5,
            summaries: vec![
                SchemeSummary { scheme: "PRE".into(), n: 3, topk_acc: 1.0 / 3.0, mean_rank: 7.25 },
                SchemeSummary { scheme: "FE+LT".into(), n: 3, topk_acc: 1.0, mean_rank: 1.0 },
            ],
            examples: vec![ex("PRE", 0.002), ex("FE+LT", 0.5)],
        }
    }

    fn manifest() -> Manifest {
        vec![("seed".into(), "7".into()), ("checkpoint PRE".into(), "ab12".into())]
    }

    #[test]
    fn svg_has_one_bar_per_scheme() {
        let svg = render_svg("t", &results().summaries, &manifest());
        assert_eq!(svg.matches(r#"class="bar""#).count(), 2);
        assert!(svg.contains(">0.33<") && svg.contains(">1.00<"));
        assert!(svg.contains("FE+LT") && svg.contains("seed: 7"));
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        fs::write(&path, results_csv(&results(), &manifest()).unwrap()).unwrap();
        let (m, rows) = read_results_csv(&path).unwrap();
        assert_eq!(m, manifest());
        assert_eq!(rows, results().summaries);
    }

    #[test]
    fn dump_layout() {
        let tok = Tokenizer::build(&["a b c"]).unwrap();
        let dump = render_dump(&results(), &tok, &manifest(), 5);
        let lines: Vec<&str> = dump.lines().collect();
        let i = lines.iter().position(|l| *l == "Example 1:").unwrap();
        assert_eq!(lines[i + 1], "Target: a: 0.002");
        assert!(lines[i + 2..i + 12].iter().all(|l| l.starts_with(' ') && l.contains(": 0.")));
        assert_eq!(lines[i + 12], RULE);
    }

    #[test]
    fn empty_results_are_rejected() {
        let mut r = results();
        r.summaries.clear();
        let dir = tempfile::tempdir().unwrap();
        let tok = Tokenizer::build(&["a"]).unwrap();
        assert!(emit_report(&r, &tok, &manifest(), &ReportPaths::in_dir(dir.path(), "x"), 1).is_err());
    }
}
