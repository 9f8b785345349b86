use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use super::{ingest, Cli, Command, GroupByArg, SelectionArg, SignalArg};
use crate::client::{client_from_endpoint, ModelClient};
use crate::config::EngineConfig;
use crate::corpus::Corpus;
use crate::encoder::EncoderClient;
use crate::generation::{
    assemble_context, generate_all, geval_judge, image_part, synthesize_qa, ContextConfig, GenerationContext,
    GenerationResult, GeneratorConfig, QaExample, RougeSignal,
};
use crate::metrics::{aggregate_report, bleu_4, rouge_l, ExampleScores, MetricReport};
use crate::queries::{ground_truth, query_vectors, read_queries, QueryRecord};
use crate::retrieval::{
    build_index, read_index, read_results_jsonl, recall_at_k, retrieve_topk, write_index, write_results_jsonl,
    IndexConfig, RetrievalResult, VideoIndex,
};
use crate::selector::{
    collect_training_data, train_selector, write_examples_jsonl, CandidateFrames, QuerySimilarity, SelectorMode,
    SelectorModel, SubsetSignal, TrainingPair,
};
use crate::vector::Vector;
use crate::{seed, Error, Result};

pub(super) fn dispatch(cli: Cli) -> Result<()> {
    let cfg = super::effective_config(&cli.global)?;
    let out = cli.global.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let ctx = Ctx { cfg, out };
    match cli.command {
        Command::Ingest {
            media,
            precomputed,
            transcribe,
            corpus_id,
            fps,
        } => ctx.ingest(media, precomputed, transcribe, &corpus_id, fps),
        Command::Index {
            alpha,
            selection,
            selector,
            frames_per_video,
            allow_missing_text,
        } => ctx.index(alpha, selection, selector, frames_per_video, allow_missing_text),
        Command::Retrieve { index, queries, k } => ctx.retrieve(&index, &queries, k),
        Command::SelectorTrain {
            mode,
            queries,
            signal,
            epochs,
        } => ctx.selector_train(mode.into(), &queries, signal, epochs),
        Command::SelectorSelect {
            selector,
            queries,
            videos,
        } => ctx.selector_select(&selector, queries.as_deref(), &videos),
        Command::Generate {
            retrieval,
            queries,
            mode,
            selector,
            frames_per_video,
            k,
        } => {
            let mut cfg = ctx.cfg.clone();
            if let Some(m) = mode {
                cfg.generation.mode = m.into();
            }
            if let Some(f) = frames_per_video {
                cfg.generation.frames_per_video = f;
            }
            if let Some(k) = k {
                cfg.retrieval.k = k;
            }
            if selector.is_some() {
                cfg.selector.generation = selector;
            }
            cfg.validate()?;
            Ctx { cfg, out: ctx.out }.generate(&retrieval, &queries)
        }
        Command::Synthqa { videos } => ctx.synthqa(&videos),
        Command::Eval {
            answers,
            queries,
            compare,
            group_by,
            judge,
        } => ctx.eval(&answers, &queries, &compare, group_by, judge),
        Command::SweepAlpha { queries, step, ks } => ctx.sweep_alpha(&queries, step, &ks),
    }
}

struct Ctx {
    cfg: EngineConfig,
    out: PathBuf,
}

fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut buf = String::new();
    for r in rows {
        buf.push_str(&serde_json::to_string(r).expect("row serializes"));
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.cfg.endpoints.timeout_s)
    }

    fn encoder(&self) -> Result<Option<Box<dyn ModelClient>>> {
        self.cfg
            .endpoints
            .encoder_url
            .as_deref()
            .map(|u| client_from_endpoint(u, self.timeout()))
            .transpose()
    }

    fn generator(&self) -> Result<Box<dyn ModelClient>> {
        let url = self
            .cfg
            .endpoints
            .generator_url
            .as_deref()
            .ok_or_else(|| Error::config("endpoints.generator_url", "required by this command"))?;
        client_from_endpoint(url, self.timeout())
    }

    fn corpus(&self) -> Result<Corpus> {
        let path = self
            .cfg
            .manifest_path
            .as_deref()
            .ok_or_else(|| Error::config("manifest_path", "required by this command (or pass --manifest)"))?;
        Corpus::open(path)
    }

    fn query_vectors(&self, queries: &[QueryRecord], dim: usize) -> Result<Vec<Vector>> {
        let client = if queries.iter().all(|q| q.embedding.is_some()) {
            None
        } else {
            self.encoder()?
        };
        let encoder = client.as_deref().map(EncoderClient::new);
        query_vectors(queries, encoder.as_ref(), dim)
    }

    fn load_selector(path: &Path, mode: SelectorMode) -> Result<SelectorModel> {
        let sel = SelectorModel::load(path)?;
        if sel.mode != mode {
            return Err(Error::WrongMode {
                expected: mode,
                found: sel.mode,
            });
        }
        Ok(sel)
    }

    fn ingest(
        &self,
        media: Option<PathBuf>,
        precomputed: Option<PathBuf>,
        transcribe: bool,
        corpus_id: &str,
        fps: f64,
    ) -> Result<()> {
        let manifest = match (media, precomputed) {
            (_, Some(src)) => ingest::ingest_precomputed(&src, &self.out, corpus_id)?,
            (Some(media), None) => {
                let client = self
                    .encoder()?
                    .ok_or_else(|| Error::config("endpoints.encoder_url", "required to ingest media"))?;
                ingest::ingest_media(&media, &self.out, corpus_id, client.as_ref(), fps, transcribe)?
            }
            (None, None) => return Err(Error::InvalidArgument("pass --media or --precomputed".into())),
        };
        let corpus = Corpus::open(&manifest)?;
        println!(
            "ingested {} videos (dim {}) into {}",
            corpus.manifest.videos.len(),
            corpus.dim(),
            manifest.display()
        );
        Ok(())
    }

    fn index_config<'a>(&self, alpha: f64, selector: Option<&'a SelectorModel>, require_text: bool) -> IndexConfig<'a> {
        let r = &self.cfg.retrieval;
        IndexConfig {
            alpha,
            frames_per_video: r.frames_per_video,
            candidates: r.candidates,
            n_subsets: r.n_subsets,
            require_text,
            selector,
            seed: self.cfg.seed,
        }
    }

    fn retrieval_selector(&self, explicit: Option<PathBuf>, selection: SelectionArg) -> Result<Option<SelectorModel>> {
        let path = match (explicit, selection) {
            (Some(p), _) => Some(p),
            (None, SelectionArg::Adaptive) => Some(self.cfg.selector.retrieval.clone().ok_or_else(|| {
                Error::config("selector.retrieval", "adaptive selection needs a retrieval selector")
            })?),
            (None, SelectionArg::Uniform) => None,
        };
        path.map(|p| Self::load_selector(&p, SelectorMode::Retrieval)).transpose()
    }

    fn index(
        &self,
        alpha: Option<f64>,
        selection: SelectionArg,
        selector: Option<PathBuf>,
        frames_per_video: Option<usize>,
        allow_missing_text: bool,
    ) -> Result<()> {
        let mut this = Ctx {
            cfg: self.cfg.clone(),
            out: self.out.clone(),
        };
        if let Some(a) = alpha {
            this.cfg.alpha = a;
        }
        if let Some(f) = frames_per_video {
            this.cfg.retrieval.frames_per_video = f;
        }
        this.cfg.validate()?;
        let corpus = this.corpus()?;
        let sel = this.retrieval_selector(selector, selection)?;
        let require_text = this.cfg.retrieval.require_text && !allow_missing_text;
        let index = build_index(&corpus, &this.index_config(this.cfg.alpha, sel.as_ref(), require_text))?;
        let path = this.out("index.vidx");
        write_index(&index, &path)?;
        println!("indexed {} videos at alpha {} into {}", index.len(), index.alpha, path.display());
        Ok(())
    }

    fn rank_all(&self, index: &VideoIndex, queries: &[QueryRecord], vectors: &[Vector], k: usize) -> Result<Vec<RetrievalResult>> {
        queries
            .iter()
            .zip(vectors)
            .map(|(q, v)| Ok(retrieve_topk(index, v, k)?.with_query_id(&q.query_id)))
            .collect()
    }

    fn retrieve(&self, index_path: &Path, queries_path: &Path, k: Option<usize>) -> Result<()> {
        let k = k.unwrap_or(self.cfg.retrieval.k);
        if k == 0 {
            return Err(Error::config("retrieval.k", "must be >= 1"));
        }
        let index = read_index(index_path)?;
        let queries = read_queries(queries_path)?;
        let vectors = self.query_vectors(&queries, index.dim)?;
        let results = self.rank_all(&index, &queries, &vectors, k)?;
        write_results_jsonl(&results, &self.out("retrieval.jsonl"))?;
        let truth = ground_truth(&queries);
        let judged: Vec<RetrievalResult> = results
            .into_iter()
            .filter(|r| truth.contains_key(&r.query_id))
            .collect();
        if !judged.is_empty() {
            let r1 = recall_at_k(&judged, &truth, 1)?;
            let rk = recall_at_k(&judged, &truth, k)?;
            write_json(
                &serde_json::json!({ "queries": judged.len(), "k": k, "recall_at_1": r1, "recall_at_k": rk }),
                &self.out("recall.json"),
            )?;
            println!("R@1 = {r1:.3}");
            if k > 1 {
                println!("R@{k} = {rk:.3}");
            }
        }
        Ok(())
    }

    fn training_pairs(&self, corpus: &Corpus, queries: &[QueryRecord], mode: SelectorMode) -> Result<Vec<TrainingPair>> {
        let candidates = match mode {
            SelectorMode::Retrieval => self.cfg.retrieval.candidates,
            SelectorMode::Generation => self.cfg.generation.candidates,
        };
        let with_truth: Vec<&QueryRecord> = queries.iter().filter(|q| q.source_video_id.is_some()).collect();
        if with_truth.is_empty() {
            return Err(Error::InvalidArgument("no query names its source_video_id".into()));
        }
        let owned: Vec<QueryRecord> = with_truth.iter().map(|q| (*q).clone()).collect();
        let vectors = self.query_vectors(&owned, corpus.dim())?;
        let mut reduced: HashMap<String, CandidateFrames> = HashMap::new();
        owned
            .into_iter()
            .zip(vectors)
            .map(|(q, v)| {
                let vid = q.source_video_id.clone().expect("filtered above");
                if !reduced.contains_key(&vid) {
                    let visual = corpus.load_visual(&vid)?;
                    let s = seed::derive(self.cfg.seed, &format!("selector-train/reduce/{vid}"));
                    reduced.insert(vid.clone(), CandidateFrames::reduce(&visual, candidates, s)?);
                }
                Ok(TrainingPair {
                    query_id: q.query_id,
                    query: v.into_inner(),
                    candidates: reduced[&vid].clone(),
                    video_id: vid,
                    question: q.question,
                    reference_answer: q.answer,
                })
            })
            .collect()
    }

    fn selector_train(&self, mode: SelectorMode, queries_path: &Path, signal: SignalArg, epochs: Option<usize>) -> Result<()> {
        let corpus = self.corpus()?;
        let queries = read_queries(queries_path)?;
        let pairs = self.training_pairs(&corpus, &queries, mode)?;
        let (m, candidates, n_subsets) = match mode {
            SelectorMode::Retrieval => {
                let r = &self.cfg.retrieval;
                (r.frames_per_video, r.candidates, r.n_subsets)
            }
            SelectorMode::Generation => {
                let g = &self.cfg.generation;
                (g.frames_per_video, g.candidates, g.n_subsets)
            }
        };
        let generator;
        let rouge;
        let signal: &dyn SubsetSignal = match signal {
            SignalArg::Query => &QuerySimilarity,
            SignalArg::Rouge => {
                generator = self.generator()?;
                rouge = RougeSignal {
                    client: generator.as_ref(),
                    generator: GeneratorConfig {
                        model: self.cfg.generation.model.clone(),
                        frame_dir: self.cfg.generation.frame_dir.clone(),
                    },
                };
                &rouge
            }
        };
        let root = self.cfg.seed;
        let data = collect_training_data(&pairs, m, n_subsets, seed::derive(root, "selector-train/collect"), signal)?;
        if data.examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let t = &self.cfg.training;
        let init = seed::derive(root, "selector-train/init");
        let mut model = match mode {
            SelectorMode::Retrieval => SelectorModel::init_retrieval(m, candidates, corpus.dim(), t.hidden, init)?,
            SelectorMode::Generation => {
                SelectorModel::init_generation(m, candidates, corpus.dim(), t.hidden, t.tower_dim, init)?
            }
        };
        let mut train_cfg = t.train_config(seed::derive(root, "selector-train/train"));
        if let Some(e) = epochs {
            train_cfg.epochs = e;
        }
        let report = train_selector(&mut model, &data.examples, &pairs, &train_cfg)?;
        write_examples_jsonl(&data.examples, &self.out("selector_examples.jsonl"))?;
        model.save(&self.out("selector.json"))?;
        write_json(
            &serde_json::json!({
                "mode": mode,
                "examples": data.examples.len(),
                "skipped": data.skipped,
                "initial_loss": report.initial_loss,
                "epoch_losses": report.epoch_losses,
            }),
            &self.out("train_report.json"),
        )?;
        println!(
            "trained {mode} selector on {} examples ({} pairs skipped); loss {:.4} -> {:.4}",
            data.examples.len(),
            data.skipped.len(),
            report.initial_loss,
            report.epoch_losses.last().copied().unwrap_or(report.initial_loss)
        );
        Ok(())
    }

    fn selector_select(&self, selector_path: &Path, queries: Option<&Path>, videos: &[String]) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            video_id: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            query_id: Option<String>,
            frame_indices: Vec<usize>,
            timestamps: Vec<f64>,
            score: Option<f64>,
        }
        let model = SelectorModel::load(selector_path)?;
        let corpus = self.corpus()?;
        let n_subsets = match model.mode {
            SelectorMode::Retrieval => self.cfg.retrieval.n_subsets,
            SelectorMode::Generation => self.cfg.generation.n_subsets,
        };
        let root = self.cfg.seed;
        let pick = |vid: &str, query: Option<&[f64]>, tag: &str| -> Result<Row> {
            let visual = corpus.load_visual(vid)?;
            let s = seed::derive(root, &format!("selector-select/{tag}"));
            let candidates = CandidateFrames::reduce(&visual, model.candidate_count, seed::derive(s, "reduce"))?;
            let best = model.select_frames(&candidates, query, n_subsets, seed::derive(s, "select"))?;
            Ok(Row {
                video_id: vid.to_string(),
                query_id: None,
                timestamps: best.frame_indices.iter().map(|&i| candidates.timestamps[i]).collect(),
                frame_indices: candidates.original_indices(&best.frame_indices),
                score: best.score,
            })
        };
        let rows = match model.mode {
            SelectorMode::Retrieval => {
                let ids: Vec<String> = if videos.is_empty() {
                    corpus.manifest.videos.iter().map(|v| v.video_id.clone()).collect()
                } else {
                    videos.to_vec()
                };
                ids.iter()
                    .map(|id| pick(id, None, id).map_err(|e| e.for_video(id)))
                    .collect::<Result<Vec<_>>>()?
            }
            SelectorMode::Generation => {
                let path = queries.ok_or(Error::MissingQuery)?;
                let qs: Vec<QueryRecord> = read_queries(path)?
                    .into_iter()
                    .filter(|q| q.source_video_id.is_some())
                    .collect();
                let vectors = self.query_vectors(&qs, corpus.dim())?;
                qs.iter()
                    .zip(&vectors)
                    .map(|(q, v)| {
                        let vid = q.source_video_id.as_deref().expect("filtered above");
                        let mut row = pick(vid, Some(v.as_slice()), &format!("{}/{vid}", q.query_id))
                            .map_err(|e| e.for_video(vid))?;
                        row.query_id = Some(q.query_id.clone());
                        Ok(row)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        write_jsonl(&rows, &self.out("selection.jsonl"))?;
        println!("selected frames for {} videos", rows.len());
        Ok(())
    }

    fn generate(&self, retrieval_path: &Path, queries_path: &Path) -> Result<()> {
        let corpus = self.corpus()?;
        let queries = read_queries(queries_path)?;
        let by_id: HashMap<&str, &QueryRecord> = queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
        let results = read_results_jsonl(retrieval_path)?;
        let selector = self
            .cfg
            .selector
            .generation
            .as_deref()
            .map(|p| Self::load_selector(p, SelectorMode::Generation))
            .transpose()?;
        let g = &self.cfg.generation;
        let ctx_cfg = ContextConfig {
            mode: g.mode,
            frames_per_video: g.frames_per_video,
            candidates: g.candidates,
            n_subsets: g.n_subsets,
            max_transcript_chars: g.max_transcript_chars,
            selector: selector.as_ref(),
            seed: self.cfg.seed,
        };
        let mut ordered = Vec::with_capacity(results.len());
        for r in &results {
            let q = by_id
                .get(r.query_id.as_str())
                .ok_or_else(|| Error::InvalidArgument(format!("retrieval result for unknown query `{}`", r.query_id)))?;
            ordered.push((*q).clone());
        }
        let vectors = match selector {
            Some(_) => Some(self.query_vectors(&ordered, corpus.dim())?),
            None => None,
        };
        let contexts = results
            .iter()
            .zip(&ordered)
            .enumerate()
            .map(|(i, (r, q))| {
                let question = q.question.as_deref().ok_or_else(|| {
                    Error::schema(format!("query `{}`", q.query_id), "generation needs a question")
                })?;
                let mut top = r.clone();
                top.ranked.truncate(self.cfg.retrieval.k);
                let qv = vectors.as_ref().map(|v| v[i].as_slice());
                assemble_context(&q.query_id, question, qv, &top, &corpus, &ctx_cfg)
            })
            .collect::<Result<Vec<GenerationContext>>>()?;
        write_jsonl(&contexts, &self.out("contexts.jsonl"))?;
        let client = self.generator()?;
        let gen_cfg = GeneratorConfig {
            model: g.model.clone(),
            frame_dir: g.frame_dir.clone(),
        };
        let outcomes = generate_all(&contexts, client.as_ref(), &gen_cfg, self.cfg.max_inflight)?;
        let mut answers: Vec<GenerationResult> = Vec::with_capacity(outcomes.len());
        let mut first_err = None;
        for (ctx, o) in contexts.iter().zip(outcomes) {
            match o {
                Ok(a) => answers.push(a),
                Err(e) => {
                    log::error!("query `{}`: {e}", ctx.query_id);
                    first_err.get_or_insert(e);
                }
            }
        }
        crate::generation::write_results_jsonl(&answers, &self.out("answers.jsonl"))?;
        println!("generated {} of {} answers", answers.len(), contexts.len());
        first_err.map_or(Ok(()), Err)
    }

    fn synthqa(&self, videos: &[String]) -> Result<()> {
        let corpus = self.corpus()?;
        let client = self.generator()?;
        let ids: Vec<String> = if videos.is_empty() {
            corpus.manifest.videos.iter().map(|v| v.video_id.clone()).collect()
        } else {
            videos.to_vec()
        };
        let g = &self.cfg.generation;
        let mut out: Vec<QaExample> = Vec::new();
        let mut first_err = None;
        for id in &ids {
            let attempt = || -> Result<Vec<QaExample>> {
                let record = corpus.record(id)?;
                let images = match &g.frame_dir {
                    Some(dir) => crate::selector::uniform_stride(record.frame_count as usize, g.frames_per_video)
                        .into_iter()
                        .map(|i| image_part(dir, id, i))
                        .collect::<Result<Vec<_>>>()?,
                    None => Vec::new(),
                };
                synthesize_qa(record, images, client.as_ref(), &g.model)
            };
            match attempt() {
                Ok(qa) => out.extend(qa),
                Err(e) => {
                    log::error!("video `{id}`: {e}");
                    first_err.get_or_insert(e.for_video(id));
                }
            }
        }
        write_jsonl(&out, &self.out("synthetic_qa.jsonl"))?;
        println!("synthesized {} question-answer pairs from {} videos", out.len(), ids.len());
        first_err.map_or(Ok(()), Err)
    }

    fn score_answers(&self, answers_path: &Path, refs: &HashMap<&str, &QueryRecord>, judge: Option<&dyn ModelClient>) -> Result<Vec<ExampleScores>> {
        let answers = crate::generation::read_results_jsonl(answers_path)?;
        if answers.is_empty() {
            return Err(Error::EmptyInput);
        }
        answers
            .iter()
            .map(|a| {
                let q = refs
                    .get(a.query_id.as_str())
                    .ok_or_else(|| Error::MissingTruth(a.query_id.clone()))?;
                let reference = q.answer.as_deref().ok_or_else(|| Error::MissingTruth(a.query_id.clone()))?;
                let geval = match judge {
                    Some(client) => Some(geval_judge(&a.question, reference, &a.answer, client, &self.cfg.generation.model)?),
                    None => None,
                };
                Ok(ExampleScores {
                    query_id: a.query_id.clone(),
                    rouge_l: rouge_l(reference, &a.answer),
                    bleu_4: bleu_4(reference, &a.answer),
                    geval,
                    bertscore: None,
                    category: q.category.clone(),
                })
            })
            .collect()
    }

    fn eval(&self, answers: &[PathBuf], queries_path: &Path, compare: &[String], group_by: Option<GroupByArg>, judge: bool) -> Result<()> {
        if !compare.is_empty() && compare.len() != answers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} --compare labels for {} --answers files",
                compare.len(),
                answers.len()
            )));
        }
        if compare.is_empty() && answers.len() > 1 {
            return Err(Error::InvalidArgument("several --answers files need --compare labels".into()));
        }
        let queries = read_queries(queries_path)?;
        let refs: HashMap<&str, &QueryRecord> = queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
        let judge_client = if judge { Some(self.generator()?) } else { None };
        let mut reports: Vec<(String, MetricReport)> = Vec::new();
        for (i, path) in answers.iter().enumerate() {
            let rows = self.score_answers(path, &refs, judge_client.as_deref())?;
            let report = aggregate_report(rows, group_by == Some(GroupByArg::Category))?;
            let label = compare.get(i).cloned().unwrap_or_default();
            reports.push((label, report));
        }
        let show = |label: &str, r: &MetricReport| {
            let a = &r.aggregates;
            let mut line = format!("{label}ROUGE-L {:.1}  BLEU-4 {:.1}", a.rouge_l * 100.0, a.bleu_4 * 100.0);
            if let Some(g) = a.geval {
                line.push_str(&format!("  G-Eval {g:.2}"));
            }
            println!("{line}  (n = {})", a.count);
            for (cat, g) in r.group_by.iter().flatten() {
                println!("  {cat}: ROUGE-L {:.1}  BLEU-4 {:.1}  (n = {})", g.rouge_l * 100.0, g.bleu_4 * 100.0, g.count);
            }
        };
        if compare.is_empty() {
            let (_, report) = &reports[0];
            report.write_json(&self.out("report.json"))?;
            report.write_csv(&self.out("report.csv"))?;
            show("", report);
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "count", "rouge_l", "bleu_4", "geval"])
            .expect("in-memory write");
        for (label, report) in &reports {
            report.write_json(&self.out(&format!("report_{label}.json")))?;
            let a = &report.aggregates;
            w.write_record([
                label.clone(),
                a.count.to_string(),
                format!("{:.2}", a.rouge_l * 100.0),
                format!("{:.2}", a.bleu_4 * 100.0),
                a.geval.map(|g| format!("{g:.2}")).unwrap_or_default(),
            ])
            .expect("in-memory write");
            show(&format!("{label}: "), report);
        }
        let csv = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv");
        let path = self.out("compare.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
    }

    fn sweep_alpha(&self, queries_path: &Path, step: f64, ks: &[usize]) -> Result<()> {
        let steps = (1.0 / step).round();
        if !(step > 0.0 && step <= 1.0) || (steps * step - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("step {step} must divide 1 evenly")));
        }
        if ks.is_empty() || ks.contains(&0) {
            return Err(Error::InvalidArgument("--ks needs positive cutoffs".into()));
        }
        let steps = steps as usize;
        let corpus = self.corpus()?;
        let queries = read_queries(queries_path)?;
        let truth = ground_truth(&queries);
        let judged: Vec<QueryRecord> = queries
            .into_iter()
            .filter(|q| truth.contains_key(&q.query_id))
            .collect();
        if judged.is_empty() {
            return Err(Error::InvalidArgument("no query names its source_video_id".into()));
        }
        let vectors = self.query_vectors(&judged, corpus.dim())?;
        let sel = self
            .cfg
            .selector
            .retrieval
            .as_deref()
            .map(|p| Self::load_selector(p, SelectorMode::Retrieval))
            .transpose()?;
        let k_max = *ks.iter().max().expect("non-empty");
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["alpha".to_string()];
        header.extend(ks.iter().map(|k| format!("recall_at_{k}")));
        w.write_record(&header).expect("in-memory write");
        for i in 0..=steps {
            let alpha = i as f64 / steps as f64;
            let index = build_index(
                &corpus,
                &self.index_config(alpha, sel.as_ref(), self.cfg.retrieval.require_text),
            )?;
            let results = self.rank_all(&index, &judged, &vectors, k_max)?;
            let mut row = vec![alpha.to_string()];
            for &k in ks {
                row.push(recall_at_k(&results, &truth, k)?.to_string());
            }
            println!("alpha {}: {}", row[0], row[1..].join(" "));
            w.write_record(&row).expect("in-memory write");
        }
        let csv = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv");
        let path = self.out("sweep.csv");
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
    }
}
