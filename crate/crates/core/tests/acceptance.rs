//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use revsplit_core::corpus::{assemble_task, exclude_incomplete, SplitTask};
use revsplit_core::evaluation::{bleu, is_correct_text, score_indexes, score_splitting, GoldAnswer, GoldRecord};
use revsplit_core::extraction::ExtractionResult;
use revsplit_core::index_recovery::{recover_for_task, IndexOutcome, IndexStatus};
use revsplit_core::llm_splitter::{CompletionBackend, LlmSplitter, PromptOptions};
use revsplit_core::mock::{FnBackend, GoldOracle, MockReply, MockServer};
use revsplit_core::pipeline::{run_split, SplitConfig, SplitMethod};
use revsplit_core::regex_splitter::RegexSplitter;
use revsplit_core::synth::{generate, SynthCorpus, SynthOptions};
use revsplit_core::textnorm::{levenshtein, strip_spaces};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tasks(corpus: &SynthCorpus) -> Vec<SplitTask> {
    let store = corpus.store();
    let (table, _) = exclude_incomplete(&corpus.table(), &store);
    table
        .retained_indices()
        .map(|i| assemble_task(&table, &store, i).expect("synthetic pages complete"))
        .collect()
}

fn regex_results(corpus: &SynthCorpus, threshold: f64) -> (Vec<SplitTask>, Vec<ExtractionResult>) {
    let ts = tasks(corpus);
    let splitter = RegexSplitter::new(threshold);
    let rs = ts.iter().map(|t| splitter.split(t)).collect();
    (ts, rs)
}

// Plain recursive definition, memoised so length-12 inputs stay cheap.
fn lev_oracle(a: &[char], b: &[char], memo: &mut Vec<Vec<Option<usize>>>) -> usize {
    if let Some(v) = memo[a.len()][b.len()] {
        return v;
    }
    let v = match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = lev_oracle(ra, rb, memo) + usize::from(x != y);
            let del = lev_oracle(ra, b, memo) + 1;
            let ins = lev_oracle(a, rb, memo) + 1;
            sub.min(del).min(ins)
        }
    };
    memo[a.len()][b.len()] = Some(v);
    v
}

fn count_of(seq: &[&str], gram: &[&str]) -> usize {
    (0..seq.len())
        .filter(|&i| i + gram.len() <= seq.len() && &seq[i..i + gram.len()] == gram)
        .count()
}

fn bleu_oracle(cand: &[&str], refr: &[&str]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let n_max = cand.len().min(4);
    let mut product = 1.0f64;
    for n in 1..=n_max {
        let mut matched = 0usize;
        let mut seen: Vec<&[&str]> = Vec::new();
        for i in 0..=cand.len() - n {
            let g = &cand[i..i + n];
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            matched += count_of(cand, g).min(count_of(refr, g));
        }
        product *= matched as f64 / (cand.len() - n + 1) as f64;
    }
    let bp = if cand.len() >= refr.len() {
        1.0
    } else {
        (1.0 - refr.len() as f64 / cand.len() as f64).exp()
    };
    bp * product.powf(1.0 / n_max as f64)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut lev_bad = 0;
    for _ in 0..1000 {
        let word = |rng: &mut ChaCha8Rng| -> String {
            let n = rng.random_range(0..=12);
            (0..n).map(|_| ['a', 'b', 'c', 'ä'][rng.random_range(0..4)]).collect()
        };
        let (a, b) = (word(&mut rng), word(&mut rng));
        let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let mut memo = vec![vec![None; bc.len() + 1]; ac.len() + 1];
        if levenshtein(&a, &b) != lev_oracle(&ac, &bc, &mut memo) {
            lev_bad += 1;
        }
    }
    let vocab = ["the", "a", "of", "x", "y", "z"];
    let mut bleu_bad = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let seq = |rng: &mut ChaCha8Rng| -> Vec<&str> {
            let n = rng.random_range(0..=15);
            (0..n).map(|_| vocab[rng.random_range(0..vocab.len())]).collect()
        };
        let (c, r) = (seq(&mut rng), seq(&mut rng));
        let diff = (bleu(&c.join(" "), &r.join(" ")) - bleu_oracle(&c, &r)).abs();
        worst = worst.max(diff);
        if diff > 1e-9 {
            bleu_bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        lev_bad == 0 && bleu_bad == 0 && secs < 30.0,
        format!("levenshtein mismatches {lev_bad}/1000, bleu mismatches {bleu_bad}/1000 (max diff {worst:.1e}), {secs:.2}s"),
    )
}

fn clean_corpus() -> SynthCorpus {
    generate(&SynthOptions {
        documents: 50,
        seed: 11,
        ..Default::default()
    })
}

fn noisy_corpus() -> SynthCorpus {
    generate(&SynthOptions {
        documents: 50,
        seed: 11,
        title_noise: true,
        ..Default::default()
    })
}

fn criterion_2() -> Outcome {
    let corpus = clean_corpus();
    let (_, rs) = regex_results(&corpus, 0.3);
    let report = score_splitting(&rs, &corpus.gold()).map_err(|e| e.to_string())?;
    check(
        report.accuracy == 1.0 && report.attempted == 50,
        format!("regex accuracy {:.3} over {} documents", report.accuracy, report.attempted),
    )
}

fn criterion_3() -> Outcome {
    let corpus = noisy_corpus();
    let noisy = corpus
        .documents
        .iter()
        .filter(|d| d.noise != revsplit_core::synth::TitleNoise::None)
        .count();
    let (_, rs) = regex_results(&corpus, 0.3);
    let report = score_splitting(&rs, &corpus.gold()).map_err(|e| e.to_string())?;
    let answered = |rs: &[ExtractionResult]| rs.iter().filter(|r| !r.is_failed()).count() as f64 / rs.len() as f64;
    let (_, rs0) = regex_results(&corpus, 0.0);
    let (a3, a0) = (answered(&rs), answered(&rs0));
    check(
        report.accuracy >= 0.8 && a3 > a0,
        format!(
            "{noisy}/50 noisy titles, accuracy {:.3}, answered {:.2} at 0.3 vs {:.2} at 0",
            report.accuracy, a3, a0
        ),
    )
}

fn oracle_backends<F>(corpus: &SynthCorpus, answer: F) -> Vec<Arc<dyn CompletionBackend>>
where
    F: Fn(usize, i64, &str) -> String + Send + Sync + Clone + 'static,
{
    let oracle = Arc::new(GoldOracle::from_corpus(corpus));
    (0..3)
        .map(|k| {
            let oracle = Arc::clone(&oracle);
            let answer = answer.clone();
            Arc::new(FnBackend::new(format!("m{k}"), move |p| {
                let (id, gold) = oracle.answer(p).expect("prompt for a known document");
                Ok(answer(k, id, gold))
            })) as Arc<dyn CompletionBackend>
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let corpus = generate(&SynthOptions {
        documents: 200,
        volumes: 4,
        seed: 4,
        ..Default::default()
    });
    let ts = tasks(&corpus);
    let gold: std::collections::HashMap<i64, GoldAnswer> =
        corpus.gold().into_iter().map(|g| (g.zbmath_internal_id, g.gold)).collect();

    let rotating = oracle_backends(&corpus, |k, id, gold| {
        if id.rem_euclid(3) as usize == k {
            format!("{gold} corrupted")
        } else {
            gold.to_string()
        }
    });
    let splitter = LlmSplitter::new(rotating, "m0", PromptOptions::default()).map_err(|e| e.to_string())?;
    let recovered = ts
        .iter()
        .filter(|t| {
            let r = splitter.extract_vote(t);
            is_correct_text(&r.status, &gold[&t.row.zbmath_internal_id])
        })
        .count();

    let distinct = oracle_backends(&corpus, |k, _, gold| format!("{gold} variant {k}"));
    let splitter = LlmSplitter::new(distinct, "m1", PromptOptions::default()).map_err(|e| e.to_string())?;
    let by_best = ts
        .iter()
        .filter(|t| {
            let r = splitter.extract_vote(t);
            let decided = r.vote.as_ref().map(|v| v.decided_by.as_str());
            decided == Some("m1") && r.status.text().is_some_and(|s| s.ends_with("variant 1"))
        })
        .count();
    check(
        ts.len() == 200 && recovered == 200 && by_best == 200,
        format!("gold recovered {recovered}/{}, best decided {by_best}/{} with distinct outputs", ts.len(), ts.len()),
    )
}

fn round_trip_violations(ts: &[SplitTask], outcomes: &[IndexOutcome], results: &[ExtractionResult]) -> usize {
    let mut bad = 0;
    for ((t, o), r) in ts.iter().zip(outcomes).zip(results) {
        if let IndexStatus::Found { start, end } = o.status {
            let span: String = t.latex_content.chars().skip(start).take(end - start).collect();
            if strip_spaces(&span) != strip_spaces(r.status.text().unwrap_or_default()) {
                bad += 1;
            }
        }
    }
    bad
}

fn criterion_5() -> Outcome {
    let mut violations = 0;
    let mut found = 0;
    for corpus in [clean_corpus(), noisy_corpus()] {
        let (ts, rs) = regex_results(&corpus, 0.3);
        let os: Vec<IndexOutcome> = ts.iter().zip(&rs).map(|(t, r)| recover_for_task(t, r)).collect();
        found += os.iter().filter(|o| matches!(o.status, IndexStatus::Found { .. })).count();
        violations += round_trip_violations(&ts, &os, &rs);
    }

    let corpus = generate(&SynthOptions {
        documents: 100,
        seed: 5,
        body_space_noise: true,
        ..Default::default()
    });
    let ts = tasks(&corpus);
    let hallucinated: HashSet<i64> = corpus
        .documents
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 10 == 0)
        .map(|(_, d)| d.row.zbmath_internal_id)
        .collect();
    let planted = hallucinated.clone();
    let backends = oracle_backends(&corpus, move |_, id, gold| {
        if planted.contains(&id) {
            format!("{gold} quasiperiodicity")
        } else {
            gold.to_string()
        }
    });
    let splitter = LlmSplitter::new(backends, "m0", PromptOptions::default()).map_err(|e| e.to_string())?;
    let rs: Vec<ExtractionResult> = ts.iter().map(|t| splitter.extract_single(t)).collect();
    let os: Vec<IndexOutcome> = ts.iter().zip(&rs).map(|(t, r)| recover_for_task(t, r)).collect();
    found += os.iter().filter(|o| matches!(o.status, IndexStatus::Found { .. })).count();
    violations += round_trip_violations(&ts, &os, &rs);
    let unsuccessful: HashSet<i64> = os
        .iter()
        .filter(|o| o.status == IndexStatus::Unsuccessful)
        .map(|o| o.zbmath_internal_id)
        .collect();
    let scores = score_indexes(&os, &corpus.gold()).map_err(|e| e.to_string())?;
    check(
        violations == 0 && unsuccessful == hallucinated && scores.accuracy_on_covered == 1.0,
        format!(
            "{violations} violations over {found} found spans; {} unsuccessful vs {} hallucinated; accuracy on covered {:.3}",
            unsuccessful.len(),
            hallucinated.len(),
            scores.accuracy_on_covered
        ),
    )
}

fn criterion_6() -> Outcome {
    let (total, covered, correct) = (478usize, 433usize, 426usize);
    let mut gold = Vec::new();
    let mut outcomes = Vec::new();
    for i in 0..total {
        let id = i as i64;
        gold.push(GoldRecord {
            zbmath_internal_id: id,
            gold: GoldAnswer::Text(format!("body {i}")),
            gold_indexes: Some((10, 20)),
        });
        let status = if i < correct {
            IndexStatus::Found { start: 10, end: 20 }
        } else if i < covered {
            IndexStatus::Found { start: 11, end: 20 }
        } else {
            IndexStatus::Unsuccessful
        };
        outcomes.push(IndexOutcome {
            zbmath_internal_id: id,
            status,
            source_pages: vec!["001/001".into()],
            page_offsets: vec![0],
        });
    }
    let s = score_indexes(&outcomes, &gold).map_err(|e| e.to_string())?;
    let pct = |v: f64| format!("{:.1}", v * 100.0);
    let got = (pct(s.coverage), pct(s.accuracy_on_covered), pct(s.overall));
    check(
        got == ("90.6".into(), "98.4".into(), "89.1".into()),
        format!("coverage {}%, accuracy on covered {}%, overall {}%", got.0, got.1, got.2),
    )
}

fn write_backends(path: &Path, servers: &[MockServer]) {
    let mut toml = String::new();
    for (k, s) in servers.iter().enumerate() {
        toml.push_str(&format!(
            "[[backend]]\nname = \"m{k}\"\nendpoint = \"{}\"\nmodel = \"mock-{k}\"\ntimeout = 10\nmax_retries = 0\nbest = {}\n\n",
            s.endpoint(),
            k == 0
        ));
    }
    fs::write(path, toml).unwrap();
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = generate(&SynthOptions {
        documents: 60,
        seed: 7,
        ..Default::default()
    });
    let paths = corpus.write_to(&dir.path().join("corpus")).map_err(|e| e.to_string())?;
    let oracle = GoldOracle::from_corpus(&corpus);
    let servers: Vec<MockServer> = (0..3)
        .map(|k| {
            MockServer::with_oracle(oracle.clone(), move |id, gold| {
                if id.rem_euclid(3) == k {
                    MockReply::text(format!("{gold} noise"))
                } else {
                    MockReply::text(gold)
                }
            })
            .expect("bind loopback")
        })
        .collect();
    let backends = dir.path().join("backends.toml");
    write_backends(&backends, &servers);

    let config = |out: &str| SplitConfig {
        method: SplitMethod::Vote,
        backends: Some(backends.clone()),
        workers: 4,
        ..SplitConfig::new(&paths.pages_dir, &paths.metadata, dir.path().join(out))
    };
    run_split(&config("a.jsonl")).map_err(|e| e.to_string())?;
    run_split(&config("b.jsonl")).map_err(|e| e.to_string())?;
    let a = fs::read(dir.path().join("a.jsonl")).map_err(|e| e.to_string())?;
    let b = fs::read(dir.path().join("b.jsonl")).map_err(|e| e.to_string())?;

    // Interrupted run: a prefix cut mid-record, then resumed.
    fs::write(dir.path().join("c.jsonl"), &a[..a.len() * 2 / 5]).map_err(|e| e.to_string())?;
    let resumed = run_split(&SplitConfig {
        resume: true,
        ..config("c.jsonl")
    })
    .map_err(|e| e.to_string())?;
    let c = fs::read(dir.path().join("c.jsonl")).map_err(|e| e.to_string())?;

    let results: Vec<ExtractionResult> = a
        .split(|&x| x == b'\n')
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_slice(l).unwrap())
        .collect();
    let gold: std::collections::HashMap<i64, GoldAnswer> =
        corpus.gold().into_iter().map(|g| (g.zbmath_internal_id, g.gold)).collect();
    let all_gold = results.iter().all(|r| is_correct_text(&r.status, &gold[&r.zbmath_internal_id]));
    check(
        a == b && a == c && results.len() == 60 && all_gold,
        format!(
            "{} records, runs identical: {}, resumed {} + wrote {} and matched: {}",
            results.len(),
            a == b,
            resumed.resumed,
            resumed.written,
            a == c
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let criteria: [Criterion; 7] = [
        ("metric oracles", criterion_1),
        ("clean-corpus splitting", criterion_2),
        ("noise robustness", criterion_3),
        ("voting correctness", criterion_4),
        ("index round-trip", criterion_5),
        ("report shape", criterion_6),
        ("pipeline determinism", criterion_7),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("PASS criterion {} ({name}): {d}", n + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {d}", n + 1)
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
