mod common;

use common::{fixture_queries, llm_server};
use synthq_core::corpus::{Cache, Document, QueryMode, SyntheticQuerySet};
use synthq_core::synth::{
    tune_prompt, DiversityProbe, GenerationConfig, Generator, PromptTemplate, QdProbe, SynthError, Target,
};
use synthq_core::{StubBackend, TokenizerSpec};

fn cfg(url: &str, m: usize) -> GenerationConfig {
    GenerationConfig {
        model: "fixture-model".into(),
        m,
        endpoint_url: url.to_string(),
        api_key_env: "SYNTHQ_TEST_UNSET_KEY".into(),
        backoff_base_ms: 1,
        max_retries: 2,
        ..Default::default()
    }
}

fn docs(n: usize) -> Vec<Document> {
    (0..n)
        .map(|i| Document::new(format!("d{i:02}"), format!("Topic{i} is described in this passage number {i}.")))
        .collect()
}

#[test]
fn one_request_per_document_at_temperature_zero_and_cached_rerun() {
    let server = llm_server();
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let template = PromptTemplate::builtin(QueryMode::Diverse);
    let g = Generator::over_http(cfg(&server.url, 5), Some(cache.clone())).unwrap();
    let docs = docs(3);
    let sets: Vec<SyntheticQuerySet> = g.generate_many(&docs, &template).into_iter().map(Result::unwrap).collect();

    assert_eq!(server.count(), 3);
    for rec in server.recorded() {
        let body = rec.json();
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["model"], "fixture-model");
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["role"], "user");
        assert!(rec.url.ends_with("/chat/completions"));
    }
    for (doc, set) in docs.iter().zip(&sets) {
        let prompt = template.render(5, &doc.text).unwrap();
        assert_eq!(set.queries, fixture_queries(&prompt));
        assert_eq!(set.doc_id, doc.id);
        assert_eq!(set.prompt_hash, template.prompt_hash());
        assert_eq!(set.generator_id, "fixture-model");
    }

    let again = Generator::over_http(cfg(&server.url, 5), Some(cache)).unwrap();
    let rerun: Vec<SyntheticQuerySet> = again.generate_many(&docs, &template).into_iter().map(Result::unwrap).collect();
    assert_eq!(rerun, sets);
    assert_eq!(server.count(), 3);
    assert_eq!(again.request_count(), 0);
}

#[test]
fn larger_request_keeps_first_m() {
    let server = llm_server();
    let c = GenerationConfig {
        request_m: Some(20),
        ..cfg(&server.url, 5)
    };
    let g = Generator::over_http(c, None).unwrap();
    let template = PromptTemplate::builtin(QueryMode::Paraphrase);
    let doc = &docs(1)[0];
    let set = g.generate_query_set(doc, &template).unwrap();
    let full = fixture_queries(&template.render(20, &doc.text).unwrap());
    assert_eq!(full.len(), 20);
    assert_eq!(set.queries, full[..5].to_vec());
}

#[test]
fn client_error_surfaces_status_without_retry() {
    let server = llm_server();
    let g = Generator::over_http(cfg(&server.url, 3), None).unwrap();
    let doc = Document::new("bad", "FAIL401 text");
    let err = g
        .generate_query_set(&doc, &PromptTemplate::builtin(QueryMode::Diverse))
        .unwrap_err();
    assert!(matches!(err, SynthError::Http { status: 401, .. }), "{err}");
    assert!(err.to_string().starts_with("doc bad: HTTP 401"));
    assert_eq!(server.count(), 1);
}

#[test]
fn underfull_completions_are_retried_and_never_cached() {
    let server = llm_server();
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let g = Generator::over_http(cfg(&server.url, 3), Some(cache)).unwrap();
    let doc = Document::new("s", "SHORT text");
    let err = g
        .generate_query_set(&doc, &PromptTemplate::builtin(QueryMode::Diverse))
        .unwrap_err();
    assert_eq!(err.to_string(), "doc s: gave up after 3 attempts: found 1 item, need 3");
    assert_eq!(server.count(), 3);
    let leftover = walk(dir.path());
    assert_eq!(leftover, 0, "underfull completion left in cache");
}

fn walk(p: &std::path::Path) -> usize {
    std::fs::read_dir(p)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            if e.file_type().unwrap().is_dir() {
                walk(&e.path())
            } else {
                1
            }
        })
        .sum()
}

#[test]
fn dataset_ceiling_and_resume() {
    let server = llm_server();
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let template = PromptTemplate::builtin(QueryMode::Diverse);
    let mut ds = docs(10);
    ds[4] = Document::new("d04", "FAIL500 permanently broken");

    let g = Generator::over_http(cfg(&server.url, 5), Some(cache.clone())).unwrap();
    let err = g.build_dataset(&ds, &template).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("1 of 10 documents failed"), "{msg}");
    assert!(msg.contains("d04"), "{msg}");

    let lenient = GenerationConfig {
        failure_ceiling: 0.2,
        ..cfg(&server.url, 5)
    };
    let g = Generator::over_http(lenient, Some(cache.clone())).unwrap();
    let out = g.build_dataset(&ds, &template).unwrap();
    assert_eq!(out.sets.len(), 9);
    assert_eq!(out.failures.len(), 1);
    assert!(out.sets.iter().all(|s| s.queries.len() == 5));

    let good: Vec<Document> = ds.iter().filter(|d| d.id != "d04").cloned().collect();
    let before = server.count();
    let g = Generator::over_http(cfg(&server.url, 5), Some(cache)).unwrap();
    let again = g.build_dataset(&good, &template).unwrap();
    assert_eq!(again.sets, out.sets);
    assert_eq!(server.count(), before);
}

/// Pins (CE, Self-BLEU) by the mode of the measured sets.
struct Pinned;

impl DiversityProbe for Pinned {
    fn probe(&self, sets: &[SyntheticQuerySet]) -> Result<(f64, f64), SynthError> {
        Ok(match sets[0].mode {
            QueryMode::Paraphrase => (0.6, 0.6),
            QueryMode::Diverse => (0.1, 0.1),
        })
    }
}

fn candidates() -> Vec<PromptTemplate> {
    vec![
        PromptTemplate::builtin(QueryMode::Paraphrase),
        PromptTemplate::builtin(QueryMode::Diverse),
    ]
}

#[test]
fn tuning_with_pinned_measurements() {
    let server = llm_server();
    let g = Generator::over_http(cfg(&server.url, 5), None).unwrap();
    let sample = docs(4);
    let ood = tune_prompt(&sample, &candidates(), Target::Ood, &g, &Pinned).unwrap();
    assert_eq!(ood.chosen_mode, QueryMode::Diverse);
    assert_eq!((ood.sample_ce, ood.sample_self_bleu), (0.1, 0.1));
    let ind = tune_prompt(&sample, &candidates(), Target::InDomain, &g, &Pinned).unwrap();
    assert_eq!(ind.chosen_mode, QueryMode::Paraphrase);
    assert_eq!(ind.measurements.len(), 2);
}

#[test]
fn tuning_with_measured_diversity() {
    let server = llm_server();
    let g = Generator::over_http(cfg(&server.url, 5), None).unwrap();
    let backend = StubBackend::default();
    let tok = TokenizerSpec::english();
    let probe = QdProbe {
        backend: &backend,
        tokenizer: &tok,
        ce_threshold: 0.5,
    };
    let sample = docs(6);
    let ood = tune_prompt(&sample, &candidates(), Target::Ood, &g, &probe).unwrap();
    assert_eq!(ood.chosen_mode, QueryMode::Diverse);
    let para = &ood.measurements[0];
    assert!(para.ce > 0.5 && para.self_bleu > 0.5, "{para:?}");
    let ind = tune_prompt(&sample, &candidates(), Target::InDomain, &g, &probe).unwrap();
    assert_eq!(ind.chosen_mode, QueryMode::Paraphrase);
}

#[test]
fn tuning_fails_loudly_when_nothing_qualifies() {
    let server = llm_server();
    let g = Generator::over_http(cfg(&server.url, 5), None).unwrap();
    let only = vec![PromptTemplate::builtin(QueryMode::Paraphrase)];
    let err = tune_prompt(&docs(3), &only, Target::Ood, &g, &Pinned).unwrap_err();
    assert_eq!(
        err.to_string(),
        "no candidate prompt meets the ood rule; measured paraphrase: CE=0.600 Self-BLEU=0.600"
    );
}
