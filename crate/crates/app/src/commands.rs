use std::collections::HashSet;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use burnout_app::config::{Issue, PipelineConfig};
use burnout_app::service::{self, ScoreResponse, ServiceOptions, ServiceState};
use burnout_core::corpus::{self, compute_stats, DumpFormat, SentenceRecord};
use burnout_core::dataset::{assemble, split};
use burnout_core::encoder::{EmbeddingCache, SpecialTokens, TextEncoder, Vocabulary};
use burnout_core::eval;
use burnout_core::head::{self, ModelArtifact};
use burnout_core::jsonl;
use burnout_core::labeling::{reconcile, AdjudicationStore, Labeler, LabelerVerdict, ManualLabel};
use burnout_core::promptgen::{self, FactorConfig, GenerationBatch, LlmEndpoint, PromptSpec, PromptTemplate};
use tracing::{info, warn};

use super::{
    AssembleArgs, Command, EvalArgs, IngestArgs, PromptgenCommand, ReconcileArgs, ScoreArgs, ServeArgs, SplitArgs,
    StatsArgs, TrainArgs,
};

pub fn run(command: Command, config: PipelineConfig) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(&config, a),
        Command::Promptgen(c) => promptgen(&config, c),
        Command::Reconcile(a) => reconcile_cmd(&config, a),
        Command::Assemble(a) => assemble_cmd(&config, a),
        Command::Split(a) => split_cmd(config, a),
        Command::Train(a) => train(config, a),
        Command::Eval(a) => evaluate(&config, a),
        Command::Score(a) => score(&config, a),
        Command::Serve(a) => serve(config, a),
        Command::Stats(a) => stats(&config, a),
        Command::Config => {
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn pick(flag: Option<PathBuf>, configured: &Path) -> PathBuf {
    flag.unwrap_or_else(|| configured.to_path_buf())
}

fn revalidate(config: &mut PipelineConfig) -> Result<()> {
    let issues: Vec<Issue> = config.issues();
    if !issues.is_empty() {
        let list: Vec<String> = issues.iter().map(ToString::to_string).collect();
        bail!("invalid configuration: {}", list.join("; "));
    }
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<SentenceRecord>> {
    jsonl::read(path).with_context(|| format!("reading records from {}", path.display()))
}

fn write_records(path: &Path, records: &[SentenceRecord]) -> Result<()> {
    jsonl::write(path, records).with_context(|| format!("writing {}", path.display()))
}

fn load_encoder(config: &PipelineConfig) -> Result<TextEncoder> {
    let vocab_path = &config.paths.vocab;
    let vocab = Vocabulary::load(vocab_path, &SpecialTokens::default())
        .with_context(|| format!("loading vocabulary {}", vocab_path.display()))?;
    let backend = config.encoder.backend.build().context("loading encoder backend")?;
    Ok(TextEncoder::new(
        Arc::new(vocab),
        Arc::new(backend),
        config.encoder.max_len,
    ))
}

fn load_model(path: &Path) -> Result<ModelArtifact> {
    Ok(ModelArtifact::load(path)?)
}

fn ingest(config: &PipelineConfig, a: IngestArgs) -> Result<()> {
    let input = pick(a.input, &config.paths.comments);
    let out = pick(a.out, &config.paths.sentences);
    let format = match a.format {
        Some(f) => f.parse::<DumpFormat>().map_err(anyhow::Error::msg)?,
        None => DumpFormat::from_path(&input)
            .with_context(|| format!("cannot infer format of {}; pass --format", input.display()))?,
    };
    let comments = corpus::ingest_comments(&input, format)?;
    let records = corpus::preprocess(&comments, &config.preprocess);
    write_records(&out, &records)?;
    println!(
        "{} comments -> {} sentences written to {}",
        comments.len(),
        records.len(),
        out.display()
    );
    Ok(())
}

fn factor_config(config: &PipelineConfig, flag: Option<PathBuf>) -> Result<FactorConfig> {
    match flag.or_else(|| config.promptgen.factors.clone()) {
        Some(p) => Ok(FactorConfig::load(&p)?),
        None => Ok(FactorConfig::default()),
    }
}

fn template(config: &PipelineConfig, flag: Option<PathBuf>) -> Result<PromptTemplate> {
    match flag.or_else(|| config.promptgen.template.clone()) {
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading template {}", p.display()))?;
            PromptTemplate::new(text).with_context(|| format!("template {}", p.display()))
        }
        None => Ok(PromptTemplate::default_v1()),
    }
}

fn prompts(config: &PipelineConfig, factors: Option<PathBuf>, tpl: Option<PathBuf>) -> Result<Vec<PromptSpec>> {
    let f = factor_config(config, factors)?;
    let t = template(config, tpl)?;
    Ok(promptgen::enumerate_prompts(
        &f,
        &t,
        config.promptgen.sentences_per_label,
    )?)
}

fn promptgen(config: &PipelineConfig, cmd: PromptgenCommand) -> Result<()> {
    match cmd {
        PromptgenCommand::Enumerate { factors, template, out } => {
            let specs = prompts(config, factors, template)?;
            let out = pick(out, &config.paths.prompts);
            jsonl::write(&out, &specs)?;
            println!("{} prompts written to {}", specs.len(), out.display());
        }
        PromptgenCommand::Run {
            factors,
            template,
            limit,
            url,
            model,
            out,
        } => {
            let mut specs = prompts(config, factors, template)?;
            if let Some(n) = limit {
                specs.truncate(n);
            }
            let pg = &config.promptgen;
            let mut ep = LlmEndpoint::from_env(
                url.unwrap_or_else(|| pg.url.clone()),
                model.unwrap_or_else(|| pg.model.clone()),
            );
            ep.concurrency = pg.concurrency;
            ep.max_attempts = pg.max_attempts;
            ep.timeout = Duration::from_secs(pg.timeout_secs);
            ep.requests_per_minute = Some(pg.requests_per_minute).filter(|r| *r > 0);
            if ep.api_key.is_none() {
                warn!(
                    "{} is not set; sending requests without credentials",
                    promptgen::API_KEY_ENV
                );
            }
            let rt = tokio::runtime::Runtime::new()?;
            let batches = rt.block_on(promptgen::generate(&specs, &ep))?;
            let out = pick(out, &config.paths.batches);
            jsonl::write(&out, &batches)?;
            let failed = batches.iter().filter(|b| b.error.is_some()).count();
            let unparseable = batches.iter().filter(|b| b.unparseable).count();
            let sentences: usize = batches
                .iter()
                .map(|b| b.burnout_sentences.len() + b.neutral_sentences.len())
                .sum();
            println!(
                "{} batches ({failed} failed, {unparseable} unparseable), {sentences} sentences written to {}",
                batches.len(),
                out.display()
            );
        }
        PromptgenCommand::Sample { n, seed, batches, out } => {
            let path = pick(batches, &config.paths.batches);
            let batches: Vec<GenerationBatch> =
                jsonl::read(&path).with_context(|| format!("reading batches from {}", path.display()))?;
            let n = n.unwrap_or(config.assembly.synthetic_sample_n);
            let seed = seed.unwrap_or(config.assembly.synthetic_seed);
            let records = promptgen::sample_synthetic(&batches, n, seed)?;
            match out {
                Some(p) => {
                    write_records(&p, &records)?;
                    println!("{} synthetic records written to {}", records.len(), p.display());
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    for r in &records {
                        serde_json::to_writer(&mut stdout, r)?;
                        writeln!(stdout)?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn reconcile_cmd(config: &PipelineConfig, a: ReconcileArgs) -> Result<()> {
    let primary: Labeler = a.primary.parse()?;
    let secondary: Labeler = a.secondary.parse()?;
    let sentences = read_records(&pick(a.sentences, &config.paths.sentences))?;
    let verdicts_path = pick(a.verdicts, &config.paths.verdicts);
    let verdicts: Vec<LabelerVerdict> =
        jsonl::read(&verdicts_path).with_context(|| format!("reading verdicts from {}", verdicts_path.display()))?;
    let result = reconcile(&sentences, &verdicts, primary, secondary);

    let log_path = pick(a.event_log, &config.paths.event_log);
    let mut store = AdjudicationStore::open(&log_path)?;
    let discrepant: HashSet<&str> = result.discrepant.iter().map(String::as_str).collect();
    for r in sentences.iter().filter(|r| discrepant.contains(r.id.as_str())) {
        store.add_sentence(&r.id, &r.text)?;
    }
    for v in verdicts.iter().filter(|v| discrepant.contains(v.sentence_id.as_str())) {
        let existing = store.verdicts().verdicts_for(&v.sentence_id);
        match existing.iter().find(|e| e.labeler == v.labeler) {
            Some(e) if e.verdict == v.verdict => {}
            Some(_) => warn!(sentence = %v.sentence_id, labeler = %v.labeler, "conflicting duplicate verdict ignored"),
            None => store.record_verdict(v.clone())?,
        }
    }
    let queued = store.enqueue(&result.discrepant)?;

    let mut imported = 0;
    let manual_path = a
        .manual_labels
        .or_else(|| Some(config.paths.manual_labels.clone()).filter(|p| p.is_file()));
    if let Some(p) = manual_path {
        let labels: Vec<ManualLabel> =
            jsonl::read(&p).with_context(|| format!("reading manual labels from {}", p.display()))?;
        for label in labels {
            if let Some(done) = store.queue().completed().get(&label.sentence_id) {
                if done.current().label != label {
                    warn!(sentence = %label.sentence_id, "already labeled differently; keeping the recorded label");
                }
                continue;
            }
            store
                .submit(label.clone())
                .with_context(|| format!("recording manual label for {}", label.sentence_id))?;
            imported += 1;
        }
    }

    let out = pick(a.out, &config.paths.gpt_labeled);
    write_records(&out, &result.agreed)?;
    let stats = store.stats();
    println!(
        "{} agreed -> {}, {} discrepant ({queued} newly queued), {} unjudged; {imported} manual labels recorded; queue: {} pending, {} completed",
        result.agreed.len(),
        out.display(),
        result.discrepant.len(),
        result.unjudged.len(),
        stats.pending,
        stats.completed
    );
    Ok(())
}

fn assemble_cmd(config: &PipelineConfig, a: AssembleArgs) -> Result<()> {
    let plan = &config.assembly;
    let batches_path = pick(a.batches, &config.paths.batches);
    let batches: Vec<GenerationBatch> =
        jsonl::read(&batches_path).with_context(|| format!("reading batches from {}", batches_path.display()))?;
    let synthetic = promptgen::sample_synthetic(&batches, plan.synthetic_sample_n, plan.synthetic_seed)?;
    let gpt = read_records(&pick(a.gpt, &config.paths.gpt_labeled))?;
    let store = AdjudicationStore::open(pick(a.event_log, &config.paths.event_log))?;
    let manual = store.manual_records()?;

    let assembly = assemble(&synthetic, &gpt, &manual, plan)?;
    let out = pick(a.out, &config.paths.dataset);
    write_records(&out, &assembly.records)?;
    let report = a
        .report
        .unwrap_or_else(|| config.paths.reports.join("composition.json"));
    jsonl::write_json(&report, &assembly.report)?;
    for w in &assembly.report.warnings {
        warn!("{w}");
    }
    println!("{}", assembly.report.stats.render_table());
    println!(
        "{} records written to {}; synthetic share {:.3} (planned {:.2})",
        assembly.records.len(),
        out.display(),
        assembly.report.synthetic_share,
        assembly.report.planned_share
    );
    Ok(())
}

fn split_cmd(mut config: PipelineConfig, a: SplitArgs) -> Result<()> {
    if let Some(r) = a.ratio {
        config.assembly.split_ratio = r;
    }
    if let Some(s) = a.seed {
        config.assembly.split_seed = s;
    }
    revalidate(&mut config)?;
    let records = read_records(&pick(a.dataset, &config.paths.dataset))?;
    let parts = split(&records, config.assembly.split_ratio, config.assembly.split_seed)?;
    let train_out = pick(a.train_out, &config.paths.train);
    let eval_out = pick(a.eval_out, &config.paths.eval);
    write_records(&train_out, &parts.train)?;
    write_records(&eval_out, &parts.eval)?;
    println!(
        "{} train -> {}, {} eval -> {}",
        parts.train.len(),
        train_out.display(),
        parts.eval.len(),
        eval_out.display()
    );
    Ok(())
}

fn train(mut config: PipelineConfig, a: TrainArgs) -> Result<()> {
    if let Some(s) = a.seed {
        config.train.seed = s;
    }
    if let Some(e) = a.epochs {
        config.train.epochs = e;
    }
    if let Some(t) = a.threshold {
        config.threshold = t;
    }
    revalidate(&mut config)?;
    let train_set = read_records(&pick(a.train, &config.paths.train))?;
    let eval_set = read_records(&pick(a.eval, &config.paths.eval))?;
    let encoder = load_encoder(&config)?;
    let mut cache = match &config.paths.cache {
        Some(dir) => Some(EmbeddingCache::open(dir, &encoder)?),
        None => None,
    };
    let outcome = head::train_with_cache(&train_set, &eval_set, &encoder, &config.train, cache.as_mut())?;
    let artifact = ModelArtifact::new(&outcome.params, &encoder, config.threshold, &config.train, &train_set);
    let model_out = pick(a.model_out, &config.paths.model);
    artifact.save(&model_out)?;
    let trace_out = a
        .trace_out
        .unwrap_or_else(|| config.paths.reports.join("train_trace.json"));
    jsonl::write_json(&trace_out, &outcome.trace)?;

    for e in &outcome.trace.epochs {
        let eval_acc = e
            .eval
            .as_ref()
            .map(|s| format!("{:.4}", s.metrics.accuracy))
            .unwrap_or_else(|| "-".into());
        println!(
            "epoch {}: train loss {:.6} acc {:.4}, eval acc {eval_acc}",
            e.epoch + 1,
            e.train_loss,
            e.train_accuracy
        );
    }
    println!("model {} written to {}", artifact.version(), model_out.display());
    Ok(())
}

fn evaluate(config: &PipelineConfig, a: EvalArgs) -> Result<()> {
    let model = load_model(&pick(a.model, &config.paths.model))?;
    let records = read_records(&pick(a.data, &config.paths.eval))?;
    let encoder = load_encoder(config)?;
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let truths = records
        .iter()
        .map(|r| r.class().with_context(|| format!("record {} is unlabeled", r.id)))
        .collect::<Result<Vec<_>>>()?;
    let scored = head::score(&model, &texts, &encoder)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.burnout_probability).collect();
    let (confusion, metrics) = eval::evaluate(&scores, &truths, model.threshold)?;
    let (roc, _) = eval::roc_and_auc(&scores, &truths)?;

    let roc_out = a.roc_out.unwrap_or_else(|| config.paths.reports.join("roc.csv"));
    if let Some(dir) = roc_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(&roc_out).with_context(|| format!("writing {}", roc_out.display()))?;
    roc.write_csv(std::io::BufWriter::new(file))?;

    let report = serde_json::json!({
        "model_version": model.version(),
        "threshold": model.threshold,
        "n": records.len(),
        "confusion": confusion,
        "metrics": metrics,
    });
    let report_out = a.report_out.unwrap_or_else(|| config.paths.reports.join("eval.json"));
    jsonl::write_json(&report_out, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn score(config: &PipelineConfig, a: ScoreArgs) -> Result<()> {
    let model_path = pick(a.model, &config.paths.model);
    let model = load_model(&model_path)?;
    let mut texts = a.text;
    if let Some(p) = &a.input {
        let content = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        texts.extend(content.lines().filter(|l| !l.trim().is_empty()).map(String::from));
    }
    if texts.is_empty() {
        bail!("nothing to score; pass --text or --input");
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        bail!("text {i} is empty");
    }
    let encoder = load_encoder(config)?;
    let version = model.version();
    let results = head::score(&model, &texts, &encoder)?;
    let mut stdout = std::io::stdout().lock();
    for r in results {
        let resp = ScoreResponse {
            burnout_probability: r.burnout_probability,
            label: r.label.as_str().to_string(),
            model_version: version.clone(),
            threshold: r.threshold,
        };
        serde_json::to_writer(&mut stdout, &resp)?;
        writeln!(stdout)?;
    }
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    info!("shutting down");
}

fn serve(mut config: PipelineConfig, a: ServeArgs) -> Result<()> {
    if let Some(b) = a.bind {
        config.service.bind = b;
    }
    if let Some(p) = a.port {
        config.service.port = p;
    }
    if let Some(d) = a.ui_dir {
        config.service.ui_dir = Some(d);
    }
    revalidate(&mut config)?;
    let model_path = pick(a.model, &config.paths.model);
    let model = load_model(&model_path)?;
    let encoder = load_encoder(&config)?;
    let store = AdjudicationStore::open(pick(a.event_log, &config.paths.event_log))?;
    let state = ServiceState::new(model, encoder, store, config.service.max_batch)
        .with_context(|| format!("model {} does not match the configured encoder", model_path.display()))?;
    let options = ServiceOptions {
        cors_origins: config.service.cors_origins.clone(),
        ui_dir: config.service.ui_dir.clone(),
    };
    let app = service::router(state, &options);
    let addr: SocketAddr = format!("{}:{}", config.service.bind, config.service.port).parse()?;

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        info!(%local, "service started");
        service::serve(listener, app, shutdown_signal()).await?;
        Ok(())
    })
}

fn stats(config: &PipelineConfig, a: StatsArgs) -> Result<()> {
    let records = read_records(&pick(a.dataset, &config.paths.dataset))?;
    let stats = compute_stats(&records);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!("{}", stats.render_table());
    }
    Ok(())
}
