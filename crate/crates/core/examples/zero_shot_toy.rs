//! Runs the toy zero-shot experiment over several seeds.
//!
//! Environment overrides: SEEDS, LR, LRQ, CLIP, EPOCHS, EVAL, PEPOCHS, QLR,
//! ALR, DIM, KINDS, SKIPNEG.

use lqre_core::experiment::{toy_experiment, ToyExperimentConfig};
use lqre_core::ObjectiveKind;

fn env<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn opt<T: std::str::FromStr>(k: &str) -> Option<T> {
    std::env::var(k).ok().and_then(|v| v.parse().ok())
}

fn main() {
    let mut cfg = ToyExperimentConfig::default();
    cfg.run.lr = env("LR", cfg.run.lr);
    cfg.run.lr_q = opt("LRQ").or(cfg.run.lr_q);
    cfg.run.clip_norm = opt("CLIP").or(cfg.run.clip_norm);
    cfg.run.epochs = env("EPOCHS", cfg.run.epochs);
    cfg.run.eval_every = env("EVAL", cfg.run.eval_every);
    cfg.run.skip_neg_q = env("SKIPNEG", cfg.run.skip_neg_q);
    cfg.pretrain.epochs = env("PEPOCHS", cfg.pretrain.epochs);
    cfg.pretrain.lr_question = env("QLR", cfg.pretrain.lr_question);
    cfg.pretrain.lr_answer = env("ALR", cfg.pretrain.lr_answer);
    cfg.pretrain.dim = env("DIM", cfg.pretrain.dim);
    if let Ok(k) = std::env::var("KINDS") {
        cfg.kinds = k
            .split(',')
            .map(|k| ObjectiveKind::parse(k).expect("objective name"))
            .collect();
    }
    let seeds: Vec<u64> = env("SEEDS", "0,1,2,3,4".to_string())
        .split(',')
        .map(|s| s.parse().expect("seed"))
        .collect();
    let quiet = env("QUIET", false);
    let (mut order_ok, mut off_lr, mut mml_lr, mut n) = (0usize, 0.0f64, 0.0f64, 0usize);
    for seed in seeds {
        let r = toy_experiment(&cfg.with_seed(seed)).expect("experiment");
        let te = |k| r.get(k).map(|x| x.test.te.f1);
        if let (Some(g), Some(p), Some(o)) = (
            te(ObjectiveKind::GoldQ),
            te(ObjectiveKind::PseudoQ),
            te(ObjectiveKind::OffmmlG),
        ) {
            let ok = g >= o && o > p && p > r.base.te.f1;
            order_ok += ok as usize;
            println!(
                "seed {seed} ordering {} (gold {g:.3} off {o:.3} pseudo {p:.3} base {:.3})",
                if ok { "ok" } else { "FAIL" },
                r.base.te.f1
            );
        }
        if let (Some(o), Some(m)) = (r.get(ObjectiveKind::OffmmlG), r.get(ObjectiveKind::MmlMml)) {
            off_lr += (o.test.question_ppl / r.base.question_ppl).ln();
            mml_lr += (m.test.question_ppl / r.base.question_ppl).ln();
            n += 1;
        }
        if quiet {
            continue;
        }
        println!(
            "seed {seed} pretrain A {:.2} Q {:.2} | Base TE {:.3} ZRE {:.3} ppl {:.3}",
            r.pretrain.answer_held_out_trained,
            r.pretrain.question_held_out_trained,
            r.base.te.f1,
            r.base.zre_macro_f1,
            r.base.question_ppl
        );
        for k in &r.results {
            println!(
                "  {:<14} TE {:.3} (P {:.3} R {:.3}) ZRE {:.3} ppl {:.3} last {:.3} best@{} {:.3} ({:.1}s)",
                k.kind.to_string(),
                k.test.te.f1,
                k.test.te.precision,
                k.test.te.recall,
                k.test.zre_macro_f1,
                k.test.question_ppl,
                k.last_question_ppl,
                k.best.step,
                k.best.f1,
                k.seconds
            );
        }
        println!("  total {:.1}s", r.seconds);
    }
    if n > 0 {
        println!(
            "orderings ok {order_ok}; ppl ratio gm off {:.3} mml {:.3}",
            (off_lr / n as f64).exp(),
            (mml_lr / n as f64).exp()
        );
    }
}
