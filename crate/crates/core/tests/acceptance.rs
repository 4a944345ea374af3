//! End-to-end acceptance checks. Runs each criterion in turn, prints one
//! PASS/FAIL line per criterion and exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bytesteady::data::{generate_synthetic, split, Dataset, SyntheticKind, SyntheticParams};
use bytesteady::eval::{run_sweep, SweepAxes, SweepSpec};
use bytesteady::hash::{fnv1a64, HashVariant};
use bytesteady::huffman::{Arity, CodeTable, CodeTree, Compressed, HuffmanCodec, SymbolDictionary};
use bytesteady::model::FeatureBag;
use bytesteady::ngram::hash_gram;
use bytesteady::trainer::{train, IndexerSpec, TrainConfig, TrainOutput};
use bytesteady::{parse_ngram_set, FeatureConfig, FeatureIndexer, Model, NGramSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// The separable two-class set used by several criteria, split 90/10.
fn separable() -> (Dataset, Dataset) {
    let params = SyntheticParams {
        n: 2000,
        num_classes: 2,
        ..SyntheticParams::for_kind(SyntheticKind::SeparableText)
    };
    let data = generate_synthetic(SyntheticKind::SeparableText, &params, 2024).unwrap();
    split(&data, 0.9, 7).unwrap()
}

fn train_dev(config: &TrainConfig, tr: &Dataset, dev: &Dataset) -> TrainOutput {
    train(config, tr, Some(dev)).unwrap()
}

fn loss_f64(a: &[f64], b: &[f64], dim: usize, k: usize, bag: &[usize], label: usize) -> f64 {
    let mut repr = vec![0.0; dim];
    for &r in bag {
        for j in 0..dim {
            repr[j] += a[r * dim + j];
        }
    }
    for v in &mut repr {
        *v /= bag.len() as f64;
    }
    let logits: Vec<f64> = (0..k)
        .map(|c| (0..dim).map(|j| b[c * dim + j] * repr[j]).sum())
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() - logits[label]
}

fn gradient_correctness() -> Outcome {
    const H: f64 = 1e-4;
    const REL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shapes: Vec<(usize, usize, usize)> = [2usize, 5, 7]
        .iter()
        .flat_map(|&k| [4usize, 16].into_iter().flat_map(move |d| [1usize, 3, 10].map(|g| (k, d, g))))
        .collect();
    let rows = 16;
    let features = FeatureConfig {
        ngrams: NGramSet::new([1]).unwrap(),
        indexer: FeatureIndexer::hashed(HashVariant::Fnv1a64, rows as u64).unwrap(),
    };
    let (mut worst, mut checked, mut failures) = (0.0f64, 0usize, 0usize);
    for instance in 0..100 {
        let (k, dim, g) = shapes[instance % shapes.len()];
        let mut model = Model::new(features.clone(), dim, k, rng.gen()).unwrap();
        for v in model.classifier_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        for v in model.embeddings_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let bag: Vec<usize> = (0..g).map(|_| rng.gen_range(0..rows)).collect();
        let label = rng.gen_range(0..k);
        let grads = model.backward(&FeatureBag::new(bag.clone()), label).unwrap();

        let mut a: Vec<f64> = model.embeddings().iter().map(|&v| f64::from(v)).collect();
        let mut b: Vec<f64> = model.classifier().iter().map(|&v| f64::from(v)).collect();
        let mut compare = |analytic: f64, fd: f64| {
            let diff = (analytic - fd).abs();
            let scale = analytic.abs().max(fd.abs());
            checked += 1;
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            }
            if diff > REL * scale && diff > 1e-9 {
                failures += 1;
            }
        };
        for i in 0..b.len() {
            let orig = b[i];
            b[i] = orig + H;
            let up = loss_f64(&a, &b, dim, k, &bag, label);
            b[i] = orig - H;
            let down = loss_f64(&a, &b, dim, k, &bag, label);
            b[i] = orig;
            compare(grads.classifier[i], (up - down) / (2.0 * H));
        }
        for r in 0..rows {
            for j in 0..dim {
                let idx = r * dim + j;
                let orig = a[idx];
                a[idx] = orig + H;
                let up = loss_f64(&a, &b, dim, k, &bag, label);
                a[idx] = orig - H;
                let down = loss_f64(&a, &b, dim, k, &bag, label);
                a[idx] = orig;
                let analytic = grads.embedding_rows.get(&r).map_or(0.0, |row| row[j]);
                compare(analytic, (up - down) / (2.0 * H));
            }
        }
    }
    outcome(
        failures == 0,
        format!("{checked} entries over 100 instances, {failures} out of tolerance, worst relative error {worst:.2e}"),
    )
}

fn synthetic_separability() -> Outcome {
    let (tr, dev) = separable();
    let out = train_dev(&TrainConfig::text_preset(), &tr, &dev);
    let err = out.report.final_dev_error().unwrap();
    outcome(err <= 0.02, format!("dev error {:.2}% (limit 2%)", 100.0 * err))
}

fn ngram_length_effect() -> Outcome {
    let params = SyntheticParams {
        n: 6000,
        num_classes: 6,
        motif_len: 16,
        ..SyntheticParams::for_kind(SyntheticKind::DnaMotif)
    };
    let data = generate_synthetic(SyntheticKind::DnaMotif, &params, 99).unwrap();
    let (tr, dev) = split(&data, 0.9, 3).unwrap();
    let spec = SweepSpec {
        axes: SweepAxes {
            ngram_sets: vec!["16".into(), "1".into()],
            weight_decays: vec![1e-3, 1e-4, 1e-5],
            ..Default::default()
        },
        base: TrainConfig::text_preset(),
        ..Default::default()
    };
    let report = run_sweep(&spec, &tr, &dev).unwrap();
    let best = |set: &str| report.best_for_ngrams(set).and_then(|c| c.dev_error());
    match (best("{16}"), best("{1}")) {
        (Some(long), Some(short)) => outcome(
            short - long >= 0.5,
            format!(
                "best error {{16}} {:.2}%, {{1}} {:.2}% (chance 83.33%), gap {:.1} points (need >= 50)",
                100.0 * long,
                100.0 * short,
                100.0 * (short - long)
            ),
        ),
        _ => outcome(false, "a sweep cell failed"),
    }
}

fn hogwild_consistency() -> Outcome {
    let (tr, dev) = separable();
    let config = TrainConfig {
        indexer: IndexerSpec::Hashed {
            hash: HashVariant::Fnv1a64,
            table_size: 1 << 24,
        },
        ..TrainConfig::text_preset()
    };
    let one = train_dev(&config, &tr, &dev);
    let four = train_dev(&TrainConfig { workers: 4, ..config }, &tr, &dev);
    let (e1, e4) = (one.report.final_dev_error().unwrap(), four.report.final_dev_error().unwrap());
    let (l1, l4) = (one.report.final_loss().unwrap(), four.report.final_loss().unwrap());
    let rate = |o: &TrainOutput| {
        let samples: f64 = o.report.epochs.iter().map(|e| e.samples_per_sec * e.wall_time_s).sum();
        samples / o.report.epochs.iter().map(|e| e.wall_time_s).sum::<f64>()
    };
    let (r1, r4) = (rate(&one), rate(&four));
    let err_ok = (e1 - e4).abs() <= 0.01;
    let loss_ok = (l1 - l4).abs() <= 0.05 * l1;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (speed_ok, speed_note) = if cores >= 4 {
        (r4 >= 2.0 * r1, format!("speedup {:.2}x (need >= 2x)", r4 / r1))
    } else {
        (
            true,
            format!("speedup {:.2}x, not assessed: {cores} core(s) available, 4 required", r4 / r1),
        )
    };
    outcome(
        err_ok && loss_ok && speed_ok,
        format!(
            "dev error {:.2}% vs {:.2}%, train loss {l1:.5} vs {l4:.5} ({:.2}% rel), {speed_note}",
            100.0 * e1,
            100.0 * e4,
            100.0 * (l1 - l4).abs() / l1
        ),
    )
}

fn huffman_losslessness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let strings: Vec<Vec<u8>> = (0..10_000)
        .map(|i| {
            let len = rng.gen_range(0..=4096);
            if i % 2 == 0 {
                (0..len).map(|_| rng.gen()).collect()
            } else {
                (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()
            }
        })
        .collect();
    let mut failures = Vec::new();
    let mut primary_frames = 0usize;
    for arity in [Arity::Bit, Arity::Byte] {
        for m in [1usize, 2, 4, 8] {
            let dict = SymbolDictionary::build(strings.iter().step_by(20), m).unwrap();
            let codec = HuffmanCodec::build(dict, arity);
            for s in &strings {
                let frame = codec.encode(s);
                primary_frames += usize::from(frame.table == CodeTable::Primary);
                let reparsed = Compressed::from_bytes(&frame.to_bytes()).unwrap();
                if codec.decode(&reparsed).ok().as_deref() != Some(s.as_slice()) {
                    failures.push(format!("{arity}:{m} len {}", s.len()));
                    break;
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "10000 strings x 8 codecs, {primary_frames} frames used the observed-symbol table{}",
            if failures.is_empty() { String::new() } else { format!(", failed: {failures:?}") }
        ),
    )
}

/// Minimum of sum(w_i * l_i) over every length vector satisfying Kraft's
/// inequality, which is exactly the set of prefix-code length profiles.
fn optimal_prefix_cost(weights: &[u64]) -> u64 {
    let n = weights.len();
    let max_len = n - 1;
    let mut lengths = vec![1usize; n];
    let mut best = u64::MAX;
    loop {
        let kraft: u64 = lengths.iter().map(|&l| 1u64 << (max_len - l)).sum();
        if kraft <= 1u64 << max_len {
            best = best.min(weights.iter().zip(&lengths).map(|(&w, &l)| w * l as u64).sum());
        }
        let mut i = 0;
        while i < n && lengths[i] == max_len {
            lengths[i] = 1;
            i += 1;
        }
        if i == n {
            return best;
        }
        lengths[i] += 1;
    }
}

fn huffman_optimality() -> Outcome {
    let mut battery: Vec<Vec<u64>> = vec![
        vec![1, 1],
        vec![1, 1, 1],
        vec![1, 1, 1, 1],
        vec![5, 5, 5, 5, 5, 5],
        vec![1, 2, 4, 8, 16, 32],
        vec![1, 1, 2, 3, 5, 8],
        vec![1000, 1, 1, 1, 1, 1],
        vec![1, 1000],
        vec![3, 3, 2, 2, 1],
        vec![10, 9, 8, 7, 6, 5],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2000 {
        let n = rng.gen_range(2..=6);
        let hi = [4u64, 20, 1000][rng.gen_range(0..3)];
        battery.push((0..n).map(|_| rng.gen_range(1..=hi)).collect());
    }
    let mut bad = Vec::new();
    for w in &battery {
        let tree = CodeTree::build(w, 2);
        let cost: u64 = tree.code_lengths().iter().zip(w).map(|(&l, &x)| l as u64 * x).sum();
        let total: u64 = w.iter().sum();
        let entropy: f64 = w
            .iter()
            .map(|&x| {
                let p = x as f64 / total as f64;
                -p * p.log2()
            })
            .sum();
        let mean = cost as f64 / total as f64;
        let in_bounds = mean >= entropy - 1e-12 && mean < entropy + 1.0;
        if cost != optimal_prefix_cost(w) || !in_bounds || !tree.is_prefix_free() {
            bad.push(w.clone());
        }
    }
    outcome(
        bad.is_empty(),
        format!("{} tables of 2..6 symbols, {} mismatches {:?}", battery.len(), bad.len(), bad.iter().take(3).collect::<Vec<_>>()),
    )
}

fn compression_ratio_sanity() -> Outcome {
    let params = SyntheticParams {
        n: 1000,
        num_classes: 1,
        min_len: 1000,
        max_len: 1000,
        ..SyntheticParams::for_kind(SyntheticKind::DnaUniform)
    };
    let dna = generate_synthetic(SyntheticKind::DnaUniform, &params, 8).unwrap();
    let bytes = dna.payload_bytes();
    let bit = HuffmanCodec::build(SymbolDictionary::build(dna.payloads(), 1).unwrap(), Arity::Bit);
    let bit_ratio = bit.compression_ratio(dna.payloads()).unwrap();

    let byte = HuffmanCodec::build(SymbolDictionary::build(dna.payloads(), 2).unwrap(), Arity::Byte);
    let live = byte.dictionary().observed().len();
    let byte_ratio = byte.compression_ratio(dna.payloads()).unwrap();
    outcome(
        bytes == 1_000_000 && (bit_ratio - 0.25).abs() <= 0.01 && live <= 256 && byte_ratio == 0.5,
        format!("{bytes} bytes; bit m=1 ratio {bit_ratio:.6}; byte m=2 ratio {byte_ratio:.6} with {live} live symbols"),
    )
}

fn compressed_learnability() -> Outcome {
    let (tr, dev) = separable();
    let plain = train_dev(&TrainConfig::text_preset(), &tr, &dev);
    let config = TrainConfig {
        codec: Some("byte:2".parse().unwrap()),
        ..TrainConfig::text_preset()
    };
    let packed = train_dev(&config, &tr, &dev);
    let (e0, e1) = (plain.report.final_dev_error().unwrap(), packed.report.final_dev_error().unwrap());
    outcome(
        (e1 - e0).abs() <= 0.03,
        format!(
            "dev error {:.2}% uncompressed vs {:.2}% compressed (ratio {:.4}), limit 3 points",
            100.0 * e0,
            100.0 * e1,
            packed.report.compression_ratio.unwrap()
        ),
    )
}

fn determinism() -> Outcome {
    let (tr, dev) = separable();
    let dir = tempfile::tempdir().unwrap();
    let config = TrainConfig {
        seed: 42,
        ..TrainConfig::text_preset()
    };
    let mut files = Vec::new();
    for run in 0..2 {
        let out = train_dev(&config, &tr, &dev);
        let path = dir.path().join(format!("run{run}.bst"));
        out.model.save(&path).unwrap();
        files.push(path);
    }
    let (a, b) = (std::fs::read(&files[0]).unwrap(), std::fs::read(&files[1]).unwrap());
    let identical = a == b;
    let sets_ok = parse_ngram_set("2[1-8]").unwrap().lengths() == [2, 4, 6, 8, 10, 12, 14, 16]
        && parse_ngram_set("4^[0-2]").unwrap().lengths() == [1, 4, 16];
    outcome(
        identical && sets_ok,
        format!(
            "model files {} ({} bytes, fnv {:016x}); shorthand examples {}",
            if identical { "identical" } else { "differ" },
            a.len(),
            fnv1a64(&a),
            if sets_ok { "reproduced" } else { "wrong" }
        ),
    )
}

fn hash_correctness() -> Outcome {
    let vectors_ok = fnv1a64(b"") == 0xcbf29ce484222325 && fnv1a64(b"a") == 0xaf63dc4c8601ec8c;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut out_of_range = 0usize;
    let sizes = [1u64, 7, 1000, 1 << 18, 1 << 24, (1 << 24) + 3];
    for variant in [HashVariant::Fnv1a64, HashVariant::City64] {
        for &size in &sizes {
            let indexer = FeatureIndexer::hashed(variant, size).unwrap();
            for _ in 0..1_000_000 / sizes.len() / 2 + 1 {
                let len = rng.gen_range(1..=16);
                let gram: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                if hash_gram(&gram, &indexer) as u64 >= size {
                    out_of_range += 1;
                }
            }
        }
    }
    outcome(
        vectors_ok && out_of_range == 0,
        format!(
            "reference vectors {}, {out_of_range} of 1e6 indices out of range",
            if vectors_ok { "match" } else { "differ" }
        ),
    )
}

type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", Some(10), gradient_correctness),
        ("synthetic separability", Some(60), synthetic_separability),
        ("n-gram length effect", Some(300), ngram_length_effect),
        ("HogWILD consistency", None, hogwild_consistency),
        ("Huffman losslessness", Some(30), huffman_losslessness),
        ("Huffman optimality", None, huffman_optimality),
        ("compression ratio sanity", None, compression_ratio_sanity),
        ("compressed-input learnability", None, compressed_learnability),
        ("determinism", None, determinism),
        ("hash correctness", None, hash_correctness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| f == &id || name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let elapsed = started.elapsed();
        let mut o = result.unwrap_or_else(|_| outcome(false, "panicked"));
        if let Some(secs) = limit {
            if elapsed > Duration::from_secs(*secs) {
                o.pass = false;
                o.detail += &format!("; exceeded {secs} s budget");
            }
        }
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all criteria passed");
        ExitCode::SUCCESS
    }
}
