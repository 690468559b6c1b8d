use std::collections::{HashMap, HashSet};

use proptest::prelude::*;

use super::synth::SynthSpec;
use super::*;
use crate::vocab::STOP;

fn text_sample(target: &[TokenId]) -> Sample {
    Sample {
        source: Some(vec![10, 11]),
        image: None,
        target: target.to_vec(),
    }
}

/// Source, image attribute values and target prefix.
type Context = (Option<Vec<TokenId>>, Vec<usize>, Vec<TokenId>);

#[test]
fn unroll_yields_one_case_per_target_token() {
    let s = text_sample(&[20, 21, STOP]);
    let ex = unroll(0, 0, &s).unwrap();
    assert_eq!(
        ex.iter().map(|e| e.gold).collect::<Vec<_>>(),
        vec![20, 21, STOP]
    );
    assert_eq!(ex.iter().map(|e| e.step).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(unroll(0, 0, &text_sample(&[])).is_err());
}

#[test]
fn sample_validation() {
    assert!(text_sample(&[20, STOP])
        .validate(Modality::TextToText)
        .is_ok());
    assert!(text_sample(&[20]).validate(Modality::TextToText).is_err());
    assert!(text_sample(&[STOP, 20, STOP])
        .validate(Modality::TextToText)
        .is_err());
    assert!(matches!(
        text_sample(&[20, STOP]).validate(Modality::ImageTextToText),
        Err(crate::Error::Modality(_))
    ));
}

fn demo(size: usize) -> (super::synth::SynthCorpus, Vocabulary) {
    let corpus = SynthSpec::multitask_demo(size, 11).generate().unwrap();
    let vocab = corpus.vocabulary().unwrap();
    (corpus, vocab)
}

#[test]
fn unrolled_count_is_sum_of_target_lengths() {
    let (corpus, vocab) = demo(40);
    for task in corpus.tasks(&vocab).unwrap() {
        let expected: usize = corpus
            .records(&task.spec.name)
            .unwrap()
            .iter()
            .map(|r| r.tgt.split_whitespace().count() + 1)
            .sum();
        assert_eq!(task.unrolled(0).len(), expected);
        assert_eq!(task.unrolled_count(), expected);
        let stats = synth::CorpusStats::of(&task);
        let mean = task
            .samples
            .iter()
            .map(|s| s.target.len() as f64)
            .sum::<f64>()
            / task.samples.len() as f64;
        assert!((stats.ratio - mean).abs() < 1e-12);
    }
}

#[test]
fn registry_needs_exactly_one_reference() {
    let (corpus, vocab) = demo(20);
    let mut tasks = corpus.tasks(&vocab).unwrap();
    assert!(TaskSet::new(tasks.clone()).is_ok());
    tasks[0].spec.reference = true;
    assert!(TaskSet::new(tasks.clone()).is_err());
    tasks.iter_mut().for_each(|t| t.spec.reference = false);
    assert!(TaskSet::new(tasks).is_err());
    assert!(TaskSet::new(vec![]).is_err());
}

#[test]
fn unknown_target_language_is_rejected() {
    let (corpus, vocab) = demo(5);
    let mut spec = corpus.corpora[0].0.task_spec();
    spec.target_lang = "xx".into();
    assert!(Task::from_records(spec, &vocab, corpus.records("mt_en_de").unwrap()).is_err());
}

#[test]
fn scheduler_draws_one_per_task_and_counts_reference_epochs() {
    let (corpus, vocab) = demo(30);
    let (set, _) = corpus
        .split(&vocab, &["mt_en_de", "ic_en", "mmt_en_de"], 5)
        .unwrap();
    let mut sched = Scheduler::new(&set, 3);
    let per_epoch = sched.steps_per_epoch();
    assert_eq!(per_epoch, set.tasks[set.reference_index()].unrolled_count());
    for step in 1..=2 * per_epoch + 1 {
        let batch = sched.next_batch();
        assert_eq!(batch.len(), 3);
        for (i, ex) in batch.iter().enumerate() {
            assert_eq!(ex.task, i);
        }
        assert_eq!(sched.state().epoch, step / per_epoch, "step {step}");
    }
}

#[test]
fn half_size_task_is_visited_twice_per_reference_epoch() {
    let (corpus, vocab) = demo(40);
    let tasks = corpus.tasks(&vocab).unwrap();
    let reference = tasks.iter().find(|t| t.spec.reference).unwrap().clone();
    let mut small = tasks[0].clone();
    // Keep samples until the small task holds half the reference's cases.
    let half = reference.unrolled_count() / 2;
    let mut kept = Vec::new();
    let mut count = 0;
    for s in small.samples {
        if count + s.target.len() > half {
            break;
        }
        count += s.target.len();
        kept.push(s);
    }
    small.samples = kept;
    let set = TaskSet::new(vec![reference, small]).unwrap();
    let mut sched = Scheduler::new(&set, 9);
    let mut visits: HashMap<(usize, usize), usize> = HashMap::new();
    for _ in 0..sched.steps_per_epoch() {
        let b = sched.next_batch();
        *visits.entry((b[1].sample, b[1].step)).or_default() += 1;
    }
    let total: usize = visits.values().sum();
    let ratio = total as f64 / set.tasks[1].unrolled_count() as f64;
    assert!((ratio - 2.0).abs() < 0.15, "visited {ratio}x");
    assert!(visits.values().all(|&v| (1..=3).contains(&v)));
}

#[test]
fn scheduler_is_deterministic() {
    let (corpus, vocab) = demo(20);
    let (set, _) = corpus.split(&vocab, &["mt_en_de", "mmt_en_de"], 2).unwrap();
    let run = |seed| {
        let mut s = Scheduler::new(&set, seed);
        (0..200).map(|_| s.next_batch()).collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
    let mut skipped = Scheduler::new(&set, 1);
    skipped.skip(150);
    assert_eq!(skipped.next_batch(), run(1)[150]);
}

#[test]
fn two_item_derangement_swaps() {
    assert_eq!(derangement(2, 0).unwrap(), vec![1, 0]);
    assert!(derangement(1, 0).is_err());
    assert!(derangement(0, 0).is_err());
}

#[test]
fn shuffled_images_keep_text_and_multiset() {
    let (corpus, vocab) = demo(30);
    let task = corpus
        .tasks(&vocab)
        .unwrap()
        .into_iter()
        .find(|t| t.spec.name == "mmt_en_de")
        .unwrap();
    let shuffled = shuffle_images(&task, 5).unwrap();
    let key = |s: &Sample| format!("{:?}", s.image.as_ref().unwrap().full.feature);
    let before: HashSet<String> = task.samples.iter().map(key).collect();
    let after: HashSet<String> = shuffled.samples.iter().map(key).collect();
    assert_eq!(before, after);
    for (a, b) in task.samples.iter().zip(&shuffled.samples) {
        assert_eq!(a.source, b.source);
        assert_eq!(a.target, b.target);
        assert_ne!(a.image, b.image);
    }
    let mt = corpus.tasks(&vocab).unwrap().remove(0);
    assert!(shuffle_images(&mt, 0).is_err());
}

#[test]
fn corpora_are_exactly_learnable_by_lookup() {
    let (corpus, vocab) = demo(200);
    let grammar = corpus.spec.image.clone().unwrap();
    let offsets = grammar.offsets();
    let decode_attrs = |s: &Sample| -> Vec<usize> {
        let f = &s.image.as_ref().unwrap().full.feature;
        grammar
            .attributes
            .iter()
            .zip(&offsets)
            .map(|(a, &o)| {
                (0..a.arity())
                    .max_by(|&x, &y| f[o + x].total_cmp(&f[o + y]))
                    .unwrap()
            })
            .collect()
    };
    for task in corpus.tasks(&vocab).unwrap() {
        let mut table: HashMap<Context, TokenId> = HashMap::new();
        for s in &task.samples {
            let attrs = if s.image.is_some() {
                decode_attrs(s)
            } else {
                vec![]
            };
            for t in 0..s.target.len() {
                let key = (s.source.clone(), attrs.clone(), s.target[..t].to_vec());
                let gold = *table.entry(key).or_insert(s.target[t]);
                assert_eq!(
                    gold, s.target[t],
                    "conflicting continuation in {}",
                    task.spec.name
                );
            }
        }
    }
}

#[test]
fn corpus_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = demo(10);
    let path = dir.path().join("c.jsonl");
    let recs = corpus.records("mmt_en_de").unwrap();
    write_corpus(&path, recs).unwrap();
    assert_eq!(read_corpus(&path).unwrap(), recs);
    let missing = read_corpus(&dir.path().join("nope.jsonl"));
    assert!(matches!(missing, Err(crate::Error::MissingFile { .. })));
}

proptest! {
    #[test]
    fn derangements_have_no_fixed_points(n in 2usize..120, seed in any::<u64>()) {
        let p = derangement(n, seed).unwrap();
        let mut sorted = p.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert!(p.iter().enumerate().all(|(i, &v)| i != v));
    }

    #[test]
    fn unroll_length_matches_target(len in 1usize..20) {
        let mut target: Vec<TokenId> = (0..len - 1).map(|i| 10 + i).collect();
        target.push(STOP);
        let s = text_sample(&target);
        let ex = unroll(2, 7, &s).unwrap();
        prop_assert_eq!(ex.len(), len);
        prop_assert!(ex.iter().all(|e| e.task == 2 && e.sample == 7));
        prop_assert_eq!(ex.last().unwrap().gold, STOP);
    }
}
