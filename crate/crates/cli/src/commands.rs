// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use graftlab_core::datagen::{read_jsonl, read_lines, AnnotatedPrompt, DatasetVariant, Tokenizer};
use graftlab_core::eval::{
    emit_report, read_results_csv, render_svg, run_suite, ExperimentSuite, Manifest, ReportPaths, SchemeSummary,
    SuiteResults,
};
use graftlab_core::experiment::{run_reference, DataBundle, ExperimentConfig, Progress};
use graftlab_core::grafting::{builtin_suite, Registry, SchemeSpec, BUILTIN_SUITES};
use graftlab_core::model::{
    init_params, load_checkpoint, params_hash, save_checkpoint_with_metadata, ModelConfig, ModelParams, ParamSource,
};
use graftlab_core::trainer::{train_with_progress, TrainConfig};

use crate::config::{required, resolve};
use crate::manifest::RunManifest;
use crate::{CliError, GenDataArgs, GraftEvalArgs, ReferenceArgs, ReportArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))
}

fn with_manifest_lines(manifest: &Manifest, body: &str) -> String {
    let mut s: String = manifest
        .iter()
        .map(|(k, v)| format!("# {k}: {}\n", v.replace(['\n', '\r'], " ")))
        .collect();
    s.push_str(body);
    s
}

pub fn gen_data(flags: GenDataArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let variant = args.variant.unwrap_or(DatasetVariant::FakeMoviesRealActors);
    let n = required(args.n, "n")?;
    let n_eval = args.n_eval.unwrap_or(0);
    let seed = args.seed.unwrap_or(0);
    let out = required(args.out.clone(), "out")?;

    let data = DataBundle::generate(variant, n, n_eval, seed)?;
    let written = data.write(&out)?;
    let mut manifest = RunManifest::new("gen-data", flags.config.as_deref(), &args);
    manifest.seed = Some(seed);
    manifest.outputs = written.iter().map(|f| out.join(f)).collect();
    manifest.write_json(&out.join("manifest.json"))?;

    println!("{} records, {} docs", data.base_records.len(), data.base_docs.len());
    if n_eval > 0 {
        println!(
            "{} eval records, {} one-direction docs, {} both-direction docs",
            data.eval_records.len(),
            data.one_way_docs.len(),
            data.two_way_docs.len()
        );
    }
    println!("vocabulary {} tokens, {} prompts per kind", data.tokenizer.vocab_size(), data.headline.len());
    Ok(())
}

fn base_model(args: &TrainArgs, vocab_size: usize, manifest: &mut RunManifest) -> Result<ModelParams> {
    let shape_flags = [args.n_layers, args.n_heads, args.d_model, args.d_ff, args.max_seq_len];
    if let Some(init) = &args.init {
        if shape_flags.iter().any(Option::is_some) || args.init_seed.is_some() {
            return Err(CliError::Usage("model shape and --init-seed cannot be combined with --init".into()));
        }
        let params = load_checkpoint(init)?;
        if params.config().vocab_size != vocab_size {
            return Err(CliError::Data(format!(
                "checkpoint {} has vocabulary {} but the vocab file has {vocab_size}",
                init.display(),
                params.config().vocab_size
            )));
        }
        manifest.checkpoints.push(("init".into(), params_hash(&params)));
        return Ok(params);
    }
    let toy = ModelConfig::toy(vocab_size);
    let config = ModelConfig {
        n_layers: args.n_layers.unwrap_or(toy.n_layers),
        n_heads: args.n_heads.unwrap_or(toy.n_heads),
        d_model: args.d_model.unwrap_or(toy.d_model),
        d_ff: args.d_ff.unwrap_or(toy.d_ff),
        max_seq_len: args.max_seq_len.unwrap_or(toy.max_seq_len),
        ..toy
    };
    Ok(init_params(&config, args.init_seed.unwrap_or(0))?)
}

pub fn train(flags: TrainArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let corpus = required(args.corpus.clone(), "corpus")?;
    let vocab = required(args.vocab.clone(), "vocab")?;
    let out = required(args.out.clone(), "out")?;
    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.history.csv", out.display())));
    let d = TrainConfig::default();
    let tc = TrainConfig {
        learning_rate: args.lr.unwrap_or(d.learning_rate),
        weight_decay: args.weight_decay.unwrap_or(d.weight_decay),
        epochs: args.epochs.unwrap_or(d.epochs),
        batch_size: args.batch_size.unwrap_or(d.batch_size),
        split_fraction: args.split_fraction.unwrap_or(d.split_fraction),
        seed: args.seed.unwrap_or(d.seed),
        seq_len: args.seq_len,
        ..d
    };

    let mut manifest = RunManifest::new("train", flags.config.as_deref(), &args);
    manifest.seed = Some(tc.seed);
    manifest.inputs = [Some(corpus.clone()), Some(vocab.clone()), args.init.clone()].into_iter().flatten().collect();
    manifest.outputs = vec![out.clone(), history_path.clone()];
    manifest.check_inputs()?;

    let tok = Tokenizer::load(&vocab)?;
    let docs: Vec<Vec<usize>> = read_lines(&corpus)?.iter().map(|d| tok.encode(d)).collect();
    let base = base_model(&args, tok.vocab_size(), &mut manifest)?;
    let outcome = train_with_progress(&docs, &base, &tc, |e| {
        eprintln!("epoch {:>3}  train {:.4}  val {:.4}", e.epoch, e.train_loss, e.val_loss)
    })?;

    let pairs = manifest.pairs();
    save_checkpoint_with_metadata(&outcome.params, &pairs, &out)?;
    let hash = params_hash(&outcome.params);
    let mut history_manifest = pairs;
    history_manifest.push(("checkpoint output".into(), hash.clone()));
    history_manifest.push(("best_epoch".into(), outcome.history.best_epoch.to_string()));
    write_text(&history_path, &with_manifest_lines(&history_manifest, &outcome.history.to_csv()?))?;
    println!(
        "wrote {} (best epoch {}, sha256 {hash})",
        out.display(),
        outcome.history.best_epoch
    );
    Ok(())
}

/// Weight-set names in order of first mention.
fn sources_in_order(schemes: &[SchemeSpec]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in schemes {
        let names = std::iter::once(&s.default_source)
            .chain(s.clauses.iter().map(|c| &c.source))
            .chain(s.final_ln_source.iter())
            .chain(s.unembed_source.iter());
        for n in names {
            if !out.contains(n) {
                out.push(n.clone());
            }
        }
    }
    out
}

fn load_schemes(args: &GraftEvalArgs) -> Result<(String, Vec<SchemeSpec>)> {
    match (&args.suite, &args.schemes) {
        (Some(name), None) => {
            if !BUILTIN_SUITES.contains(&name.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown suite {name:?} (expected one of {})",
                    BUILTIN_SUITES.join(", ")
                )));
            }
            Ok((name.clone(), builtin_suite(name)?))
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let schemes = if value.is_array() {
                serde_json::from_value(value)
            } else {
                serde_json::from_value(value).map(|s| vec![s])
            }
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let stem = path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
            Ok((stem, schemes))
        }
        _ => Err(CliError::Usage("give exactly one of --suite or --schemes".into())),
    }
}

/// Pairs every required weight-set name with a checkpoint path.
fn assign_checkpoints(specs: &[String], needed: &[String], suite: &str) -> Result<Vec<(String, PathBuf)>> {
    let named: Vec<Option<(&str, &str)>> = specs
        .iter()
        .map(|s| s.split_once('=').filter(|(n, _)| needed.iter().any(|x| x == n)))
        .collect();
    let pairs: Vec<(String, PathBuf)> = if named.iter().all(Option::is_some) && !specs.is_empty() {
        named.into_iter().flatten().map(|(n, p)| (n.to_string(), PathBuf::from(p))).collect()
    } else if named.iter().all(Option::is_none) {
        if specs.len() != needed.len() {
            return Err(CliError::Usage(format!(
                "suite {suite} needs {} checkpoints ({}), got {}",
                needed.len(),
                needed.join(", "),
                specs.len()
            )));
        }
        needed.iter().cloned().zip(specs.iter().map(PathBuf::from)).collect()
    } else {
        return Err(CliError::Usage("use either NAME=PATH for every --ckpt or plain paths for all".into()));
    };
    for n in needed {
        if !pairs.iter().any(|(m, _)| m == n) {
            return Err(CliError::Usage(format!("suite {suite} needs a checkpoint for {n}")));
        }
    }
    Ok(pairs)
}

pub fn graft_eval(flags: GraftEvalArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    let (suite_name, schemes) = load_schemes(&args)?;
    let prompts_path = required(args.prompts.clone(), "prompts")?;
    let vocab = required(args.vocab.clone(), "vocab")?;
    let out_dir = required(args.out_dir.clone(), "out-dir")?;
    let stem = args.stem.clone().unwrap_or_else(|| suite_name.clone());
    let needed = sources_in_order(&schemes);
    let ckpts = assign_checkpoints(&args.ckpt, &needed, &suite_name)?;

    let mut manifest = RunManifest::new("graft-eval", flags.config.as_deref(), &args);
    manifest.inputs = vec![prompts_path.clone(), vocab.clone()];
    manifest.inputs.extend(ckpts.iter().map(|(_, p)| p.clone()));
    manifest.scheme_paths = args.schemes.iter().cloned().collect();
    manifest.check_inputs()?;

    let tok = Tokenizer::load(&vocab)?;
    let prompts: Vec<AnnotatedPrompt> = read_jsonl(&prompts_path)?;
    let Some(first) = prompts.first() else {
        return Err(CliError::Data(format!("{} has no prompts", prompts_path.display())));
    };
    let kind = first.template_kind;
    if prompts.iter().any(|p| p.template_kind != kind) {
        return Err(CliError::Data("prompts file mixes prompt kinds".into()));
    }
    let mut registry = Registry::new();
    for (name, path) in &ckpts {
        let params = load_checkpoint(path)?;
        if params.config().vocab_size != tok.vocab_size() {
            return Err(CliError::Data(format!(
                "{} has vocabulary {} but the vocab file has {}",
                path.display(),
                params.config().vocab_size,
                tok.vocab_size()
            )));
        }
        registry
            .register(name, params)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    manifest.checkpoints = registry.hashes();

    let suite = ExperimentSuite {
        name: suite_name,
        kind,
        schemes,
        k: args.k.unwrap_or(5),
    };
    let results = run_suite(&suite, &prompts, &registry)?;
    create_dir(&out_dir)?;
    let paths = ReportPaths::in_dir(&out_dir, &stem);
    manifest.outputs = vec![paths.csv.clone(), paths.svg.clone(), paths.dump.clone()];
    let mut pairs = manifest.pairs();
    pairs.push(("suite".into(), suite.name.clone()));
    pairs.push(("prompt_kind".into(), kind.name().into()));
    emit_report(&results, &tok, &pairs, &paths, args.dump.unwrap_or(5))?;
    manifest.write_json(&out_dir.join(format!("{stem}_manifest.json")))?;
    print_table(&results);
    Ok(())
}

fn table(title: &str, k: usize, rows: &[SchemeSummary]) -> String {
    let mut s = format!("## {title}\n\n| scheme | n | top-{k} acc | mean rank |\n|---|---:|---:|---:|\n");
    for r in rows {
        s.push_str(&format!("| {} | {} | {:.3} | {:.1} |\n", r.scheme, r.n, r.topk_acc, r.mean_rank));
    }
    s
}

fn print_table(r: &SuiteResults) {
    println!("{}", table(&format!("{} ({})", r.suite, r.kind.name()), r.k, &r.summaries));
}

fn manifest_value<'a>(m: &'a Manifest, key: &str) -> Option<&'a str> {
    m.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

pub fn report(flags: ReportArgs) -> Result<()> {
    let args = resolve(&flags, flags.config.as_deref())?;
    if args.results.is_empty() {
        return Err(CliError::Usage("give at least one --results CSV".into()));
    }
    let mut manifest = RunManifest::new("report", flags.config.as_deref(), &args);
    manifest.inputs = args.results.clone();
    manifest.check_inputs()?;
    if let Some(d) = &args.out_dir {
        create_dir(d)?;
    }
    let mut summary = String::new();
    for path in &args.results {
        let (embedded, rows) = read_results_csv(path)?;
        let stem = path.file_stem().map_or("results".into(), |s| s.to_string_lossy().into_owned());
        let title = match (manifest_value(&embedded, "suite"), manifest_value(&embedded, "prompt_kind")) {
            (Some(s), Some(k)) => format!("{s} ({k})"),
            _ => stem.clone(),
        };
        let k = manifest_value(&embedded, "arguments")
            .and_then(|a| serde_json::from_str::<serde_json::Value>(a).ok())
            .and_then(|v| v.get("k").and_then(serde_json::Value::as_u64))
            .unwrap_or(5) as usize;
        let dir = args.out_dir.clone().unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
        let mut pairs = manifest.pairs();
        pairs.extend(embedded.iter().map(|(k, v)| (format!("source {k}"), v.clone())));
        let svg = dir.join(format!("{stem}.svg"));
        write_text(&svg, &render_svg(&format!("Top-{k} accuracy: {title}"), &rows, &pairs))?;
        summary.push_str(&table(&title, k, &rows));
        summary.push('\n');
    }
    print!("{summary}");
    if let Some(d) = &args.out_dir {
        let body = with_manifest_lines(&manifest.pairs(), "").replace("# ", "<!-- ").replace('\n', " -->\n");
        write_text(&d.join("summary.md"), &format!("{body}\n{summary}"))?;
    }
    Ok(())
}

pub fn reference(args: ReferenceArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            let mut merged = serde_json::to_value(ExperimentConfig::default()).expect("config serializes");
            let given: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            merge_json(&mut merged, given);
            serde_json::from_value::<ExperimentConfig>(merged).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let out = run_reference(&config, Some(&args.out_dir), |p| match p {
        Progress::Stage(s) => eprintln!("== {s}"),
        Progress::Epoch(name, e) => {
            eprintln!("{name} epoch {:>3}  train {:.4}  val {:.4}", e.epoch, e.train_loss, e.val_loss)
        }
    })?;
    let mut manifest = RunManifest::new("reference", args.config.as_deref(), &config);
    manifest.seed = Some(config.seed);
    manifest.checkpoints = out
        .manifest
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("checkpoint ").map(|n| (n.to_string(), v.clone())))
        .collect();
    manifest.write_json(&args.out_dir.join("manifest.json"))?;
    for r in [&out.headline, &out.qa, &out.reversal] {
        print_table(r);
    }
    Ok(())
}

/// Recursively overlays `given` onto `base`.
fn merge_json(base: &mut serde_json::Value, given: serde_json::Value) {
    match (base, given) {
        (serde_json::Value::Object(b), serde_json::Value::Object(g)) => {
            for (k, v) in g {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
