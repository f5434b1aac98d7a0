//! Subcommand implementations. Each command loads what it needs, writes its
//! artifacts under the output directory, and finishes with a manifest
//! linking outputs to input digests and the effective configuration.

use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde_json::json;

use fixv2w_core::candidates::{tailored_strategy_table, CandidateBuilder, CandidateStrategy};
use fixv2w_core::embed::{train, EmbeddingModel};
use fixv2w_core::error::EmbedError;
use fixv2w_core::eval::{
    coverage_report, exploit_analysis, graph_completion_eval, observation_for_case, rank_metrics,
    split_matching_cwe, CompletionMode, RankReport,
};
use fixv2w_core::graph::{KnowledgeGraph, MappingStatus, RelationKind, Triple};
use fixv2w_core::ingest::{
    build_snapshot, build_test_set, parse_change_history, parse_cve_feed, parse_cwe_catalog,
    parse_exploits, parse_view_csv, ChangeEvent, CveRecord, CweCatalog, ExploitEvent, Snapshot,
};
use fixv2w_core::longitudinal::{
    cumulative_invalid_counts, ranked_cwes_to_csv, remap_distance_distribution,
    remap_pair_frequencies, top_added_removed, year_counts_to_csv,
};
use fixv2w_core::remap::{
    apply_fixes, determine_invalid, fix_v2w, prediction_lines, RemapCase, StatusFilter,
};
use fixv2w_core::report::{write_json, write_jsonl, write_text};
use fixv2w_core::EntityId;

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::CliError;

pub struct Context {
    pub config: RunConfig,
}

impl Context {
    fn require(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        path.clone().ok_or_else(|| CliError::Config(format!("this command needs {key} in the config")))
    }

    fn read(&self, path: &PathBuf) -> Result<Vec<u8>, CliError> {
        std::fs::read(path).map_err(|e| CliError::Data(format!("cannot read {path:?}: {e}")))
    }

    fn feed(&self) -> Result<(PathBuf, Vec<CveRecord>), CliError> {
        let path = self.require(&self.config.feed, "data.feed")?;
        let records = parse_cve_feed(&self.read(&path)?).map_err(CliError::data)?;
        Ok((path, records))
    }

    fn history(&self) -> Result<(PathBuf, Vec<ChangeEvent>), CliError> {
        let path = self.require(&self.config.history, "data.history")?;
        let events = parse_change_history(&self.read(&path)?).map_err(CliError::data)?;
        Ok((path, events))
    }

    fn catalog(&self) -> Result<(PathBuf, CweCatalog), CliError> {
        let path = self.require(&self.config.catalog, "data.catalog")?;
        let catalog = parse_cwe_catalog(&self.read(&path)?).map_err(CliError::data)?;
        Ok((path, catalog))
    }

    fn top25(&self) -> Result<(Vec<PathBuf>, Vec<EntityId>), CliError> {
        match &self.config.top25 {
            Some(path) => {
                let list = parse_view_csv(&self.read(path)?).map_err(CliError::data)?;
                Ok((vec![path.clone()], list))
            }
            None => Ok((Vec::new(), Vec::new())),
        }
    }

    fn exploits(&self) -> Result<(Vec<PathBuf>, Vec<ExploitEvent>), CliError> {
        let mut paths = Vec::new();
        let kev = match &self.config.kev {
            Some(path) => {
                paths.push(path.clone());
                Some(self.read(path)?)
            }
            None => None,
        };
        let exploitdb = match &self.config.exploitdb {
            Some(path) => {
                paths.push(path.clone());
                Some(self.read(path)?)
            }
            None => None,
        };
        if kev.is_none() && exploitdb.is_none() {
            return Err(CliError::Config(
                "this command needs data.kev and/or data.exploitdb in the config".into(),
            ));
        }
        let events =
            parse_exploits(kev.as_deref(), exploitdb.as_deref()).map_err(CliError::data)?;
        Ok((paths, events))
    }

    fn snapshot(&self, as_of: NaiveDate) -> Result<(Vec<PathBuf>, Snapshot), CliError> {
        let (feed_path, feed) = self.feed()?;
        let (history_path, history) = self.history()?;
        let (catalog_path, catalog) = self.catalog()?;
        let snapshot =
            build_snapshot(&feed, &history, &catalog, as_of).map_err(CliError::data)?;
        Ok((vec![feed_path, history_path, catalog_path], snapshot))
    }

    /// Load `model.bin` from the output directory, or train and save it.
    fn model_for(&self, graph: &KnowledgeGraph) -> Result<EmbeddingModel, CliError> {
        let path = self.config.out_dir.join("model.bin");
        if path.exists() {
            log::info!("reusing trained model at {path:?}");
            return EmbeddingModel::load_with_norm(&path, self.config.training.norm)
                .map_err(CliError::data);
        }
        log::info!("no model at {path:?}; training one");
        let run = train(graph, &self.config.training).map_err(CliError::embed)?;
        run.model.save(&path).map_err(CliError::data)?;
        Ok(run.model)
    }

    /// Candidate builder over the training graph, with the tailored table
    /// learned from pre-cutoff remaps when that strategy is requested.
    fn candidate_builder<'a>(
        &self,
        graph: &'a KnowledgeGraph,
        model: &'a EmbeddingModel,
        top25: Vec<EntityId>,
        strategy: CandidateStrategy,
    ) -> Result<CandidateBuilder<'a>, CliError> {
        let mut builder = CandidateBuilder::new(graph)
            .with_model(model)
            .with_top25(top25.clone())
            .with_min_candidates(self.config.min_candidates);
        if strategy == CandidateStrategy::PerCweTailored {
            let (feed_path, feed) = self.feed()?;
            let earliest = feed.iter().map(|r| r.published).min().ok_or_else(|| {
                CliError::Data(format!("feed {feed_path:?} is empty, cannot learn a tailored table"))
            })?;
            let (_, history) = self.history()?;
            let (_, catalog) = self.catalog()?;
            let base =
                build_snapshot(&feed, &history, &catalog, earliest).map_err(CliError::data)?;
            let train_snap = build_snapshot(&feed, &history, &catalog, self.config.train_date)
                .map_err(CliError::data)?;
            let mut pre_cutoff = build_test_set(&base, &train_snap, StatusFilter::Discouraged);
            pre_cutoff.extend(build_test_set(&base, &train_snap, StatusFilter::Prohibited));
            let vote_builder = CandidateBuilder::new(graph)
                .with_top25(top25)
                .with_min_candidates(self.config.min_candidates);
            let table = tailored_strategy_table(&vote_builder, &pre_cutoff);
            log::info!("tailored table learned for {} old CWEs", table.len());
            builder = builder.with_tailored_table(table);
        }
        Ok(builder)
    }
}

pub fn ingest(
    ctx: &Context,
    fetch: bool,
    cache_dir: Option<PathBuf>,
    window: (Option<NaiveDate>, Option<NaiveDate>),
) -> Result<(), CliError> {
    let mut config = ctx.config.clone();
    if fetch {
        let cache = cache_dir
            .ok_or_else(|| CliError::Config("--fetch requires --cache-dir".into()))?;
        let (from, to) = match window {
            (Some(from), Some(to)) => (from, to),
            _ => return Err(CliError::Config("--fetch requires --window-from and --window-to".into())),
        };
        let client = fixv2w_core::ingest::fetch::NvdClient::new(
            &cache,
            std::env::var("NVD_API_KEY").ok(),
        );
        let stamp = |d: NaiveDate| format!("{d}T00:00:00");
        let feed = client.fetch_cves(&stamp(from), &stamp(to)).map_err(CliError::data)?;
        let feed_path = cache.join(format!("feed-{from}-{to}.json"));
        std::fs::write(&feed_path, feed).map_err(|e| CliError::Data(e.to_string()))?;
        let history = client.fetch_history(&stamp(from), &stamp(to)).map_err(CliError::data)?;
        let history_path = cache.join(format!("history-{from}-{to}.json"));
        std::fs::write(&history_path, history).map_err(|e| CliError::Data(e.to_string()))?;
        log::info!("fetched window into {feed_path:?} and {history_path:?}");
        config.feed = Some(feed_path);
        config.history = Some(history_path);
    }
    let ctx = Context { config };

    let mut manifest = Manifest::new("ingest", ctx.config.effective_flat())?;
    let (feed_path, feed) = ctx.feed()?;
    let (history_path, history) = ctx.history()?;
    let (catalog_path, catalog) = ctx.catalog()?;
    manifest.record_inputs([&feed_path, &history_path, &catalog_path])?;
    let mut summary = json!({
        "cve_records": feed.len(),
        "change_events": history.len(),
        "cwe_nodes": catalog.nodes.len(),
        "catalog_triples": catalog.triples.len(),
    });
    if ctx.config.top25.is_some() {
        let (paths, top25) = ctx.top25()?;
        manifest.record_inputs(&paths)?;
        summary["top25_entries"] = top25.len().into();
    }
    if ctx.config.kev.is_some() || ctx.config.exploitdb.is_some() {
        let (paths, exploits) = ctx.exploits()?;
        manifest.record_inputs(&paths)?;
        summary["exploit_events"] = exploits.len().into();
    }
    write_json(&ctx.config.out_dir.join("ingest.summary.json"), &summary)
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("ingest.summary.json");
    manifest.write(&ctx.config.out_dir)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    Ok(())
}

pub fn snapshot(ctx: &Context, as_of: Option<NaiveDate>) -> Result<(), CliError> {
    let as_of = as_of.unwrap_or(ctx.config.train_date);
    let mut manifest = Manifest::new("snapshot", ctx.config.effective_flat())?;
    let (inputs, snapshot) = ctx.snapshot(as_of)?;
    manifest.record_inputs(&inputs)?;

    let out = &ctx.config.out_dir;
    let triples_name = format!("snapshot-{as_of}.triples.tsv");
    write_text(&out.join(&triples_name), &snapshot.graph.dump_tsv())
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&triples_name);

    // The interned index table makes embedding rows addressable offline.
    let entities_name = format!("snapshot-{as_of}.entities.tsv");
    let mut entities = String::new();
    for (index, id) in snapshot.graph.entities().enumerate() {
        entities.push_str(&format!("{index}\t{id}\n"));
    }
    write_text(&out.join(&entities_name), &entities).map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&entities_name);

    let nodes_name = format!("snapshot-{as_of}.cwe_nodes.csv");
    let mut nodes = String::from("id,kind,abstraction,status,in_view_1003,name\n");
    for node in snapshot.graph.cwe_nodes() {
        nodes.push_str(&format!(
            "{},{},{},{},{},{:?}\n",
            node.id(),
            node.kind(),
            node.abstraction().map(|a| a.to_string()).unwrap_or_default(),
            node.status(),
            node.in_view_1003(),
            node.name(),
        ));
    }
    write_text(&out.join(&nodes_name), &nodes).map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&nodes_name);
    manifest.write(out)?;
    println!("snapshot at {as_of}: {} triples, {} entities", snapshot.graph.len(), snapshot.graph.entity_count());
    Ok(())
}

pub fn longitudinal(
    ctx: &Context,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
) -> Result<(), CliError> {
    let mut manifest = Manifest::new("longitudinal", ctx.config.effective_flat())?;
    let (feed_path, feed) = ctx.feed()?;
    let (history_path, history) = ctx.history()?;
    let (catalog_path, catalog) = ctx.catalog()?;
    manifest.record_inputs([&feed_path, &history_path, &catalog_path])?;

    let from = from.unwrap_or_else(|| {
        history.iter().map(|e| e.timestamp.date_naive()).min().unwrap_or(ctx.config.train_date)
    });
    let to = to.unwrap_or_else(|| {
        history.iter().map(|e| e.timestamp.date_naive()).max().unwrap_or(ctx.config.validate_date)
    });
    if from > to {
        return Err(CliError::Config(format!("--from {from} is after --to {to}")));
    }
    let window: Vec<ChangeEvent> = history
        .iter()
        .filter(|e| {
            let d = e.timestamp.date_naive();
            d >= from && d <= to
        })
        .cloned()
        .collect();

    let graph = catalog.to_graph().map_err(CliError::data)?;
    let out = &ctx.config.out_dir;

    let strict = remap_distance_distribution(&window, &graph, false);
    let with_placeholders = remap_distance_distribution(&window, &graph, true);
    write_text(&out.join("distances.csv"), &strict.to_csv())
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_text(&out.join("distances-with-placeholders.csv"), &with_placeholders.to_csv())
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("distances.csv");
    manifest.record_output("distances-with-placeholders.csv");

    let pairs = remap_pair_frequencies(&window, &graph);
    write_text(&out.join("pairs.csv"), &pairs.to_csv()).map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("pairs.csv");

    let snapshots: Vec<Snapshot> = (from.format("%Y").to_string().parse::<i32>().unwrap()
        ..=to.format("%Y").to_string().parse::<i32>().unwrap())
        .filter_map(|year| NaiveDate::from_ymd_opt(year, 12, 31))
        .map(|as_of| build_snapshot(&feed, &history, &catalog, as_of).map_err(CliError::data))
        .collect::<Result<_, _>>()?;
    let counts = cumulative_invalid_counts(&snapshots);
    write_text(&out.join("cumulative.csv"), &year_counts_to_csv(&counts))
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("cumulative.csv");

    let (added, removed) = top_added_removed(&window, 25);
    write_text(&out.join("top_added.csv"), &ranked_cwes_to_csv(&added))
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_text(&out.join("top_removed.csv"), &ranked_cwes_to_csv(&removed))
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("top_added.csv");
    manifest.record_output("top_removed.csv");

    let combined = json!({
        "window": {"from": from, "to": to, "events": window.len()},
        "distances": strict,
        "distances_with_placeholders": with_placeholders,
        "pairs": pairs,
        "cumulative": counts,
        "top_added": added,
        "top_removed": removed,
    });
    write_json(&out.join("longitudinal.json"), &combined)
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("longitudinal.json");
    manifest.write(out)?;
    println!("longitudinal window {from}..{to}: {} CWE events", window.len());
    Ok(())
}

pub fn train_command(ctx: &Context) -> Result<(), CliError> {
    let mut manifest = Manifest::new("train", ctx.config.effective_flat())?;
    let (inputs, snapshot) = ctx.snapshot(ctx.config.train_date)?;
    manifest.record_inputs(&inputs)?;
    let run = train(&snapshot.graph, &ctx.config.training).map_err(CliError::embed)?;
    let out = &ctx.config.out_dir;
    run.model.save(&out.join("model.bin")).map_err(CliError::data)?;
    manifest.record_output("model.bin");
    let mut losses = String::from("epoch,loss\n");
    for (epoch, loss) in run.epoch_losses.iter().enumerate() {
        losses.push_str(&format!("{epoch},{loss:.12}\n"));
    }
    write_text(&out.join("losses.csv"), &losses).map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("losses.csv");
    manifest.write(out)?;
    println!(
        "trained {} entities x {} dims in {} epochs (final loss {:.6})",
        run.model.entity_count(),
        run.model.dim(),
        run.epoch_losses.len(),
        run.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn strategy_for(ctx: &Context, status: StatusFilter, explicit: Option<CandidateStrategy>) -> CandidateStrategy {
    explicit.unwrap_or(match status {
        StatusFilter::Discouraged => ctx.config.strategy_discouraged,
        StatusFilter::Prohibited => ctx.config.strategy_prohibited,
    })
}

fn prediction_summary_csv(cases: &[RemapCase]) -> String {
    let mut out = String::from("cve,old_cwe,strategy,rank1,rank2,rank3,top_score,diagnostic\n");
    for case in cases {
        let strategy =
            case.candidate_set.as_ref().map(|s| s.strategy.to_string()).unwrap_or_default();
        let at = |rank: usize| {
            case.prediction_at(rank).map(|c| c.to_string()).unwrap_or_default()
        };
        let top_score = case
            .predictions
            .as_ref()
            .and_then(|p| p.first())
            .map(|s| format!("{:.6}", s.score))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{strategy},{},{},{},{top_score},{}\n",
            case.cve,
            case.old_cwe,
            at(1),
            at(2),
            at(3),
            case.diagnostic.clone().unwrap_or_default(),
        ));
    }
    out
}

pub fn fix(
    ctx: &Context,
    status: StatusFilter,
    explicit_strategy: Option<CandidateStrategy>,
) -> Result<(), CliError> {
    let strategy = strategy_for(ctx, status, explicit_strategy);
    let mut manifest = Manifest::new("fix", ctx.config.effective_flat())?;
    let (inputs, snapshot) = ctx.snapshot(ctx.config.train_date)?;
    manifest.record_inputs(&inputs)?;
    let (top25_paths, top25) = ctx.top25()?;
    manifest.record_inputs(&top25_paths)?;

    let model = ctx.model_for(&snapshot.graph)?;
    let builder = ctx.candidate_builder(&snapshot.graph, &model, top25, strategy)?;
    let cases = determine_invalid(&snapshot.graph, status);
    let total = cases.len();
    let ranked = fix_v2w(&builder, &model, cases, strategy);

    let out = &ctx.config.out_dir;
    let jsonl_name = format!("fix-{status}-{strategy}.predictions.jsonl");
    write_jsonl(&out.join(&jsonl_name), &prediction_lines(&ranked))
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&jsonl_name);
    let audit_name = format!("fix-{status}-{strategy}.candidates.jsonl");
    let candidate_sets: Vec<_> = ranked.iter().filter_map(|c| c.candidate_set.as_ref()).collect();
    write_jsonl(&out.join(&audit_name), &candidate_sets)
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&audit_name);
    let csv_name = format!("fix-{status}-{strategy}.summary.csv");
    write_text(&out.join(&csv_name), &prediction_summary_csv(&ranked))
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output(&csv_name);
    manifest.write(out)?;
    let ranked_count = ranked.iter().filter(|c| c.predictions.is_some()).count();
    println!("ranked {ranked_count}/{total} {status} cases with {strategy}");
    Ok(())
}

pub fn evaluate(
    ctx: &Context,
    status: Option<StatusFilter>,
    explicit_strategy: Option<CandidateStrategy>,
) -> Result<(), CliError> {
    let mut manifest = Manifest::new("evaluate", ctx.config.effective_flat())?;
    let (inputs, train_snap) = ctx.snapshot(ctx.config.train_date)?;
    manifest.record_inputs(&inputs)?;
    let (_, valid_snap) = ctx.snapshot(ctx.config.validate_date)?;
    let (top25_paths, top25) = ctx.top25()?;
    manifest.record_inputs(&top25_paths)?;

    let model = ctx.model_for(&train_snap.graph)?;
    let statuses: Vec<StatusFilter> = match status {
        Some(s) => vec![s],
        None => vec![StatusFilter::Discouraged, StatusFilter::Prohibited],
    };
    let out = &ctx.config.out_dir;
    let mut all_reports = serde_json::Map::new();
    for status in statuses {
        let strategy = strategy_for(ctx, status, explicit_strategy);
        let builder =
            ctx.candidate_builder(&train_snap.graph, &model, top25.clone(), strategy)?;
        let cases = build_test_set(&train_snap, &valid_snap, status);
        let ranked = fix_v2w(&builder, &model, cases, strategy);

        let jsonl_name = format!("evaluate-{status}-{strategy}.predictions.jsonl");
        write_jsonl(&out.join(&jsonl_name), &prediction_lines(&ranked))
            .map_err(|e| CliError::Data(e.to_string()))?;
        manifest.record_output(&jsonl_name);

        let coverage = coverage_report(&ranked, &train_snap.graph, ctx.config.cutoff)
            .map_err(CliError::data)?;
        for (strategy, table) in &coverage {
            let csv_name = format!("evaluate-{status}-{strategy}.coverage.csv");
            write_text(&out.join(&csv_name), &table.to_csv())
                .map_err(|e| CliError::Data(e.to_string()))?;
            manifest.record_output(&csv_name);
        }

        let observations: Vec<_> = ranked
            .iter()
            .filter(|c| c.truth.is_some() && c.predictions.is_some())
            .map(|c| observation_for_case(c, &train_snap.graph, ctx.config.cutoff))
            .collect::<Result<_, _>>()
            .map_err(CliError::data)?;
        let metrics: Option<RankReport> = if observations.is_empty() {
            None
        } else {
            Some(rank_metrics(&observations).map_err(CliError::data)?)
        };
        all_reports.insert(
            status.to_string(),
            json!({
                "strategy": strategy.to_string(),
                "cases": ranked.len(),
                "coverage": coverage,
                "rank_metrics": metrics,
            }),
        );
        println!("evaluated {} {status} cases with {strategy}", ranked.len());
    }
    write_json(&out.join("evaluate.metrics.json"), &all_reports)
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("evaluate.metrics.json");
    manifest.write(out)?;
    Ok(())
}

pub fn retrain_eval(ctx: &Context, top_n: usize, mode: CompletionMode) -> Result<(), CliError> {
    if !(1..=3).contains(&top_n) {
        return Err(CliError::Config(format!("--top-n must be 1, 2, or 3, got {top_n}")));
    }
    let mut manifest = Manifest::new("retrain-eval", ctx.config.effective_flat())?;
    let (inputs, train_snap) = ctx.snapshot(ctx.config.train_date)?;
    manifest.record_inputs(&inputs)?;
    let (top25_paths, top25) = ctx.top25()?;
    manifest.record_inputs(&top25_paths)?;

    // In closed-world mode both variants train on the reduced split and are
    // scored on the holdout; open world trains on the full cutoff graph and
    // scores post-cutoff additions.
    let (base_graph, eval_triples): (KnowledgeGraph, Vec<Triple>) = match mode {
        CompletionMode::Open => {
            let (_, valid_snap) = ctx.snapshot(ctx.config.validate_date)?;
            let train_facts: BTreeSet<Triple> = train_snap.graph.triples().collect();
            let eval: Vec<Triple> = valid_snap
                .graph
                .triples()
                .filter(|t| t.relation == RelationKind::MatchingCwe && !train_facts.contains(t))
                .filter(|t| {
                    valid_snap
                        .graph
                        .cwe_node(&t.tail)
                        .is_some_and(|n| n.status() == MappingStatus::Allowed)
                })
                .collect();
            (train_snap.graph.clone(), eval)
        }
        CompletionMode::Closed => {
            split_matching_cwe(&train_snap.graph, 0.1, ctx.config.training.seed)
        }
    };
    if eval_triples.is_empty() {
        return Err(CliError::Data("no evaluation triples in the selected window".into()));
    }

    let original = train(&base_graph, &ctx.config.training).map_err(CliError::embed)?;
    let mut cases = Vec::new();
    for status in [StatusFilter::Discouraged, StatusFilter::Prohibited] {
        let strategy = strategy_for(ctx, status, None);
        let builder =
            ctx.candidate_builder(&base_graph, &original.model, top25.clone(), strategy)?;
        cases.extend(fix_v2w(
            &builder,
            &original.model,
            determine_invalid(&base_graph, status),
            strategy,
        ));
    }
    let outcome = apply_fixes(&base_graph, &cases, top_n).map_err(|e| match e {
        fixv2w_core::RemapError::InvalidTopN(_) => CliError::Config(e.to_string()),
        other => CliError::Data(other.to_string()),
    })?;
    let fixed = train(&outcome.graph, &ctx.config.training).map_err(CliError::embed)?;

    let before = graph_completion_eval(&base_graph, &eval_triples, mode, &original.model)
        .map_err(CliError::data)?;
    let after = graph_completion_eval(&base_graph, &eval_triples, mode, &fixed.model)
        .map_err(CliError::data)?;

    let report = json!({
        "mode": mode,
        "top_n": top_n,
        "eval_triples": eval_triples.len(),
        "fixed_mappings": outcome.fixed.len(),
        "skipped_cases": outcome.skipped,
        "original": before,
        "fixed": after,
    });
    let out = &ctx.config.out_dir;
    write_json(&out.join("retrain-eval.json"), &report)
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("retrain-eval.json");
    manifest.write(out)?;
    println!(
        "retrain-eval ({mode:?}, top-{top_n}): MRR {:.3} -> {:.3}, MR {:.2} -> {:.2}",
        before.mrr, after.mrr, before.mean_rank, after.mean_rank
    );
    Ok(())
}

pub fn exploits(ctx: &Context) -> Result<(), CliError> {
    let mut manifest = Manifest::new("exploits", ctx.config.effective_flat())?;
    let (inputs, train_snap) = ctx.snapshot(ctx.config.train_date)?;
    manifest.record_inputs(&inputs)?;
    let (_, valid_snap) = ctx.snapshot(ctx.config.validate_date)?;
    let (exploit_paths, exploit_events) = ctx.exploits()?;
    manifest.record_inputs(&exploit_paths)?;
    let (_, history) = ctx.history()?;
    let (top25_paths, top25) = ctx.top25()?;
    manifest.record_inputs(&top25_paths)?;

    let model = ctx.model_for(&train_snap.graph)?;
    let mut cases = Vec::new();
    for status in [StatusFilter::Discouraged, StatusFilter::Prohibited] {
        let strategy = strategy_for(ctx, status, None);
        let builder =
            ctx.candidate_builder(&train_snap.graph, &model, top25.clone(), strategy)?;
        cases.extend(fix_v2w(
            &builder,
            &model,
            build_test_set(&train_snap, &valid_snap, status),
            strategy,
        ));
    }
    let report =
        exploit_analysis(&cases, &exploit_events, &history, &train_snap.graph, ctx.config.cutoff)
            .map_err(CliError::data)?;
    let out = &ctx.config.out_dir;
    write_json(&out.join("exploits.json"), &report).map_err(|e| CliError::Data(e.to_string()))?;
    write_text(&out.join("exploits.csv"), &report.to_csv())
        .map_err(|e| CliError::Data(e.to_string()))?;
    manifest.record_output("exploits.json");
    manifest.record_output("exploits.csv");
    manifest.write(out)?;
    println!(
        "exploited with invalid mappings: discouraged {} (after-exploit {}, predicted {}), prohibited {} (after-exploit {}, predicted {})",
        report.discouraged.exploited_with_invalid,
        report.discouraged.remapped_after_exploit,
        report.discouraged.correctly_predicted,
        report.prohibited.exploited_with_invalid,
        report.prohibited.remapped_after_exploit,
        report.prohibited.correctly_predicted,
    );
    Ok(())
}

impl CliError {
    pub(crate) fn data<E: std::fmt::Display>(e: E) -> Self {
        CliError::Data(e.to_string())
    }

    pub(crate) fn embed(e: EmbedError) -> Self {
        match e {
            EmbedError::Diverged { .. } => CliError::Numeric(e.to_string()),
            EmbedError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
