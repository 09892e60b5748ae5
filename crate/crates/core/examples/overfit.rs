//! Trains the toy encoder on the 64-pair templated corpus and reports
//! per-epoch loss and in-batch accuracy.
//!
//! cargo run --release -p vernqa-core --example overfit -- [batch_size] [epochs]

use std::time::Instant;

use vernqa_core::synth::templated_corpus;
use vernqa_core::textpipe::build_vocab;
use vernqa_core::tinybert::{init_params, EncoderConfig};
use vernqa_core::trainer::{train_epoch_encoded, AdamState, EncodedPairs, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let batch_size = args.next().and_then(|a| a.parse().ok()).unwrap_or(16);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(500);
    let corpus = templated_corpus(64);
    let vocab = build_vocab(&corpus, 8192, 2);
    let cfg = EncoderConfig::toy(vocab.len());
    let mut params = init_params(&cfg).unwrap();
    let mut opt = AdamState::new(&params);
    let data = EncodedPairs::new(&corpus, &vocab, cfg.max_len);
    let tc = TrainConfig {
        batch_size,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    for _ in 0..epochs {
        let r = train_epoch_encoded(&mut params, &mut opt, &data, &tc).unwrap();
        if r.epoch.is_multiple_of(10) || r.diag_accuracy == 1.0 {
            println!(
                "epoch {:4} loss {:.5} acc {:.3} ({:.1?})",
                r.epoch,
                r.mean_loss,
                r.diag_accuracy,
                start.elapsed()
            );
        }
    }
}
