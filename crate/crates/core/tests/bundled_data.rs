//! The files under `data/` are generated from `kbdialog::synth`; this test
//! keeps them in sync. Set `KBDIALOG_REGENERATE=1` to rewrite them.

use std::path::PathBuf;

use kbdialog::corpus::{load_corpus, to_metalwoz_lines, to_smd_json, CorpusFormat};
use kbdialog::pipeline::ExperimentConfig;
use kbdialog::synth;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

#[test]
fn bundled_corpora_match_the_generator() {
    let files = [
        ("tiny_smd.json", to_smd_json(&synth::multi_domain_corpus([24, 24, 48], 2024))),
        ("tiny_metalwoz.jsonl", to_metalwoz_lines(&synth::transfer_corpus(160, 2024))),
    ];
    for (name, text) in files {
        let path = data_dir().join(name);
        if std::env::var_os("KBDIALOG_REGENERATE").is_some() {
            std::fs::write(&path, &text).unwrap();
        }
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text, "{name} is stale");
    }
}

#[test]
fn tiny_config_loads_the_bundled_corpora() {
    let cfg = ExperimentConfig::from_file(&data_dir().join("tiny.cfg")).unwrap();
    cfg.validate().unwrap();
    let main = load_corpus(cfg.main_path.as_ref().unwrap(), cfg.main_format).unwrap();
    assert_eq!(main.len(), 96);
    assert_eq!(main.filter_domain(&cfg.target_domain).len(), 48);
    let transfer = load_corpus(cfg.transfer_path.as_ref().unwrap(), CorpusFormat::MetaLwoz).unwrap();
    assert_eq!(transfer.len(), 160);
}
