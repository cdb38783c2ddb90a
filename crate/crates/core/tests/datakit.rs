mod common;

use std::fs;

use proptest::prelude::*;

use lqre_core::datakit::{
    augment_negatives, gen_toy_world, load_dataset, load_fold, make_pseudo_question, save_fold, synthesize_q_pretrain,
    DataFormat, QAPretrainExample, ToyWorldConfig, INTERROGATIVES,
};
use lqre_core::pipeline::NULL_TAIL;

fn world(seed: u64, negatives: f64) -> ToyWorldConfig {
    ToyWorldConfig {
        negative_fraction: negatives,
        seed,
        ..ToyWorldConfig::default()
    }
}

#[test]
fn toy_world_round_trip_is_byte_stable() {
    let fold = gen_toy_world(&world(3, 0.5)).unwrap();
    let manifest = serde_json::json!({ "seed": 3 });
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    save_fold(a.path(), &fold, &manifest).unwrap();
    let loaded = load_fold(a.path()).unwrap();
    assert_eq!(loaded, fold);
    save_fold(b.path(), &loaded, &manifest).unwrap();
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn same_seed_same_world() {
    assert_eq!(
        gen_toy_world(&world(9, 0.5)).unwrap(),
        gen_toy_world(&world(9, 0.5)).unwrap()
    );
    assert_ne!(
        gen_toy_world(&world(9, 0.5)).unwrap(),
        gen_toy_world(&world(10, 0.5)).unwrap()
    );
}

#[test]
fn reqa_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fold.tsv");
    fs::write(
        &p,
        "place of birth\tWhere was XXX born?\tIsaac Nicola\tIsaac Nicola was born in Havana, Cuba.\tHavana\tHavana, Cuba\n\
         employer\tWho employs XXX?\tAda\tAda works at the mill.\tthe mill\n\
         spouse\tWho is XXX married to?\tBo\tBo lives alone.\n",
    )
    .unwrap();
    let insts = load_dataset(&p, DataFormat::ReqaTsv).unwrap();
    assert_eq!(insts.len(), 3);

    assert_eq!(insts[0].tail.as_deref(), Some("Havana"));
    assert_eq!(
        insts[0].accepted(),
        Some(vec!["Havana".to_string(), "Havana, Cuba".to_string()])
    );
    assert_eq!(insts[0].gold_question.as_deref(), Some("Where was Isaac Nicola born?"));
    assert_eq!(insts[0].relation_id, "place of birth");

    assert_eq!(insts[1].accepted(), Some(vec!["the mill".to_string()]));
    assert!(!insts[1].is_negative);

    assert!(insts[2].is_negative);
    assert_eq!(insts[2].tail_text(), NULL_TAIL);
    assert_eq!(insts[2].accepted(), None);
}

#[test]
fn negatives_for_a_large_train_split() {
    let train = gen_toy_world(&world(5, 0.0)).unwrap().train;
    assert!(train.len() >= 500);
    let train = &train[..500];
    let out = augment_negatives(train, 21).unwrap();
    assert_eq!(out.len(), 1000);
    assert_eq!(&out[..500], train);
    for (src, neg) in train.iter().zip(&out[500..]) {
        assert!(neg.is_negative && neg.tail.is_none());
        assert_ne!(neg.relation_id, src.relation_id);
        assert_ne!(neg.relation, src.relation);
        assert_eq!((&neg.context, &neg.head), (&src.context, &src.head));
    }
    assert_eq!(augment_negatives(train, 21).unwrap(), out);
}

#[test]
fn pseudo_question_format() {
    assert_eq!(
        make_pseudo_question("Isaac Nicola", "place of birth"),
        "Isaac Nicola <SEP> place of birth"
    );
    assert_eq!(make_pseudo_question(" X ", "r "), "X <SEP> r");
}

const WORDS: [&str; 12] = [
    "was", "born", "the", "city", "of", "in", "did", "live", "a", "river", "name", "is",
];

fn question_parts() -> impl Strategy<Value = (Vec<usize>, usize, bool)> {
    (
        prop::collection::vec(0usize..WORDS.len() + INTERROGATIVES.len(), 0..8),
        0usize..8,
        any::<bool>(),
    )
}

proptest! {
    #![proptest_config(common::prop_config(256))]

    #[test]
    fn keywords_never_contain_stop_tokens((words, at, qmark) in question_parts(), seed in 0u64..1000) {
        let entity = "Ada Lovelace";
        let mut toks: Vec<String> = words
            .iter()
            .map(|&w| WORDS.get(w).copied().unwrap_or_else(|| INTERROGATIVES[w - WORDS.len()]).to_string())
            .collect();
        toks.insert(at.min(toks.len()), entity.into());
        let mut question = toks.join(" ");
        if qmark {
            question.push_str(" ?");
        }
        let ex = QAPretrainExample {
            passage: format!("{entity} was born in a city ."),
            question: question.clone(),
            answer: "London".into(),
            entities: vec![entity.into()],
        };
        for inst in synthesize_q_pretrain(&[ex], seed) {
            let r: Vec<&str> = inst.relation.split_whitespace().collect();
            prop_assert!(!r.is_empty() && r.len() <= 4);
            for t in r {
                prop_assert!(!INTERROGATIVES.contains(&t.to_lowercase().as_str()));
                prop_assert!(!["?", ".", ",", "Ada", "Lovelace"].contains(&t));
                prop_assert!(question.split_whitespace().any(|w| w == t));
            }
            prop_assert_eq!(inst.head.as_str(), entity);
            prop_assert_eq!(inst.gold_question.as_deref(), Some(question.as_str()));
        }
    }
}
