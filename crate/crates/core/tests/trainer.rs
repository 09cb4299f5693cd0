mod common;

use std::fs;
use std::sync::LazyLock;

use serde_json::Value;
use tempfile::TempDir;

use emoface::archive::Archive;
use emoface::dataset::{generate_corpus, load_corpus, Corpus, SyntheticCorpusConfig};
use emoface::emotion::N_EMOTIONS;
use emoface::face_model::SyntheticModelConfig;
use emoface::trainer::{
    evaluate, train, user_conditions, Ablation, EvalOptions, ModelBundle, TrainConfig, TrainOutcome,
};
use emoface::Error;

struct Trained {
    _dir: TempDir,
    corpus: Corpus,
    run: std::path::PathBuf,
    outcome: TrainOutcome,
}

static TRAINED: LazyLock<Trained> = LazyLock::new(|| {
    let dir = TempDir::new().unwrap();
    let corpus = common::small_corpus(&dir.path().join("corpus"), 20, 7);
    let run = dir.path().join("run");
    let outcome = train(&common::quick_train_config(), &corpus, &run).unwrap();
    Trained {
        _dir: dir,
        corpus,
        run,
        outcome,
    }
});

#[test]
fn training_loss_drops_by_half() {
    let log = &TRAINED.outcome.log;
    let a2f: Vec<_> = log.iter().filter(|l| l.stage == "audio2flame").collect();
    let first = a2f.first().unwrap().train_loss;
    let last = a2f.last().unwrap().train_loss;
    assert!(last <= 0.5 * first, "train loss {first} -> {last}");
    for stage in ["predictor", "augment"] {
        let s: Vec<_> = log.iter().filter(|l| l.stage == stage).collect();
        assert!(!s.is_empty());
        assert!(s.last().unwrap().train_loss < s[0].train_loss, "{stage} did not improve");
    }
}

#[test]
fn log_is_json_lines_with_one_best_tag_per_improvement() {
    let text = fs::read_to_string(TRAINED.run.join("train_log.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), TRAINED.outcome.log.len());
    let mut best_val = f64::INFINITY;
    for l in lines.iter().filter(|l| l["stage"] == "audio2flame") {
        let val = l["val_loss"].as_f64().unwrap();
        assert!(l["lr"].as_f64().unwrap() > 0.0);
        assert_eq!(l["best"].as_bool().unwrap(), val < best_val);
        best_val = best_val.min(val);
    }
    let best = lines
        .iter()
        .filter(|l| l["best"] == true)
        .last()
        .unwrap();
    assert_eq!(best["epoch"].as_u64().unwrap() as usize, TRAINED.outcome.best_epoch);
    for name in ["stage1_audio2flame.efc", "stage2_predictor.efc", "model.efc"] {
        assert!(TRAINED.run.join(name).exists(), "{name} missing");
    }
}

#[test]
fn checkpoint_round_trips_and_reproduces_outputs() {
    let loaded = ModelBundle::load(&TRAINED.outcome.checkpoint).unwrap();
    let s = TRAINED.corpus.load_sample(&TRAINED.outcome.splits.val[0]).unwrap();
    let u = user_conditions(1, 0.8, s.meta.frames);
    assert_eq!(
        loaded.run(&s.content, &u).unwrap(),
        TRAINED.outcome.bundle.run(&s.content, &u).unwrap()
    );
    assert_eq!(loaded.hash().unwrap(), TRAINED.outcome.bundle.hash().unwrap());
}

#[test]
fn disabling_the_emotion_module_returns_raw_params() {
    let mut bundle = TRAINED.outcome.bundle.clone();
    bundle.settings.use_emotion_module = false;
    let s = TRAINED.corpus.load_sample(&TRAINED.outcome.splits.val[0]).unwrap();
    let out = bundle.run(&s.content, &user_conditions(2, 1.0, s.meta.frames)).unwrap();
    assert_eq!(out.params, bundle.finish(out.raw.clone()));
    bundle.settings.symmetry = false;
    let out = bundle.run(&s.content, &user_conditions(2, 1.0, s.meta.frames)).unwrap();
    assert_eq!(out.params, out.raw);
}

#[test]
fn training_without_the_emotion_module_skips_its_stages() {
    let dir = TempDir::new().unwrap();
    let config = TrainConfig {
        epochs: 2,
        ablation: Ablation {
            no_emotion_module: true,
            ..Ablation::default()
        },
        ..common::quick_train_config()
    };
    let out = train(&config, &TRAINED.corpus, dir.path()).unwrap();
    assert!(out.log.iter().all(|l| l.stage == "audio2flame"));
    let s = TRAINED.corpus.load_sample(&out.splits.val[0]).unwrap();
    let mut bundle = ModelBundle::load(&out.checkpoint).unwrap();
    assert!(!bundle.settings.use_emotion_module);
    bundle.settings.symmetry = false;
    let r = bundle.run(&s.content, &user_conditions(5, 1.0, s.meta.frames)).unwrap();
    assert_eq!(r.params, r.raw);
}

#[test]
fn divergence_aborts_and_keeps_a_finite_checkpoint() {
    let dir = TempDir::new().unwrap();
    let config = TrainConfig {
        lr_start: 1e300,
        lr_end: 1e300,
        ..common::quick_train_config()
    };
    let err = train(&config, &TRAINED.corpus, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
    let last = ModelBundle::load(&dir.path().join("last_good.efc")).unwrap();
    for set in [&last.a2f.params, &last.style.params, &last.predictor.params, &last.augment.params] {
        assert!(set.all_finite());
    }
    assert!(!dir.path().join("model.efc").exists());
}

#[test]
fn incompatible_checkpoints_are_version_errors() {
    let dir = TempDir::new().unwrap();
    let mut a = Archive::load(&TRAINED.outcome.checkpoint).unwrap();
    a.meta["version"] = 99.into();
    let path = dir.path().join("future.efc");
    a.save(&path).unwrap();
    assert!(matches!(ModelBundle::load(&path), Err(Error::Version(_))));

    let mut a = Archive::load(&TRAINED.outcome.checkpoint).unwrap();
    let w = a.arrays["a2f.conv0.weight"].clone();
    a.put("a2f.conv0.weight", w.slice(ndarray::s![.., 1..]).to_owned());
    a.save(&path).unwrap();
    assert!(matches!(ModelBundle::load(&path), Err(Error::Version(_))));

    let other_root = dir.path().join("other");
    let config = SyntheticCorpusConfig {
        n_clips: 2,
        duration_range: [1.0, 1.2],
        model: SyntheticModelConfig {
            n_expression: 30,
            ..SyntheticModelConfig::default()
        },
        ..SyntheticCorpusConfig::default()
    };
    generate_corpus(&config, &other_root).unwrap();
    let other = load_corpus(&other_root).unwrap();
    let err = evaluate(&TRAINED.outcome.bundle, &other, &other.ids(), &EvalOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Version(_)), "{err}");
}

#[test]
fn evaluation_is_repeatable() {
    let opts = EvalOptions::default();
    let ids = &TRAINED.outcome.splits.val;
    let a = evaluate(&TRAINED.outcome.bundle, &TRAINED.corpus, ids, &opts).unwrap();
    let b = evaluate(&TRAINED.outcome.bundle, &TRAINED.corpus, ids, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let conf = a.confusion.unwrap();
    assert_eq!(conf.matrix.counts.len(), N_EMOTIONS);
    assert!(a.lip.mean_mm.is_finite() && a.lip.max_mm >= a.lip.mean_mm);
}

#[test]
fn single_threaded_training_is_bit_reproducible() {
    let corpus = &TRAINED.corpus;
    let config = TrainConfig {
        epochs: 3,
        predictor_epochs: 2,
        augment_epochs: 2,
        ..common::quick_train_config()
    };
    let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    train(&config, corpus, d1.path()).unwrap();
    train(&config, corpus, d2.path()).unwrap();
    for name in ["model.efc", "train_log.jsonl"] {
        assert_eq!(
            fs::read(d1.path().join(name)).unwrap(),
            fs::read(d2.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn invalid_configs_are_rejected_before_training() {
    let dir = TempDir::new().unwrap();
    let bad = TrainConfig {
        lr_start: 1e-5,
        lr_end: 1e-4,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&bad, &TRAINED.corpus, dir.path()), Err(Error::Config(_))));
}
