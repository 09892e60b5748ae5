//! Synthetic fixtures: templated QA corpora and seeded Gaussian vectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{Corpus, QaPair};
use crate::simindex::IndexEntry;

const SYMPTOMS: [(&str, &str); 8] = [
    (
        "fever",
        "give fluids and paracetamol and check temperature every four hours",
    ),
    (
        "cough",
        "offer warm water with honey and watch for breathing trouble",
    ),
    ("rash", "keep the skin clean and dry and avoid scratching"),
    (
        "diarrhea",
        "give oral rehydration salts after every loose stool",
    ),
    ("headache", "rest in a dark quiet room and drink water"),
    (
        "vomiting",
        "give small sips of clear fluid and pause solid food",
    ),
    (
        "earache",
        "apply a warm cloth and avoid getting water in the ear",
    ),
    (
        "sore throat",
        "gargle with warm salt water and eat soft food",
    ),
];

const GROUPS: [(&str, &str); 8] = [
    ("an infant", "infants need a clinic visit if feeding stops"),
    ("a toddler", "toddlers should be watched for drowsiness"),
    (
        "a child",
        "children should see a health worker after three days",
    ),
    (
        "a teenager",
        "teenagers can take adult doses if over fifty kilograms",
    ),
    ("an adult", "adults should seek care if it lasts a week"),
    (
        "a pregnant woman",
        "pregnant women must check with a midwife before any medicine",
    ),
    (
        "an elderly person",
        "elderly people need a doctor sooner because of frailty",
    ),
    (
        "a diabetic patient",
        "diabetic patients should monitor blood sugar closely",
    ),
];

const TEMPLATES: [&str; 4] = [
    "what should i do about {s} in {g} ?",
    "how do i treat {s} for {g} ?",
    "{g} has {s} , what can help ?",
    "what is the advice for {s} in {g} ?",
];

/// The first `n` (at most 64) pairs of the symptom × patient-group grid.
/// Every content token occurs in several pairs, so a `min_freq` of 2 keeps
/// the whole vocabulary.
pub fn templated_corpus(n: usize) -> Corpus {
    let total = SYMPTOMS.len() * GROUPS.len();
    assert!(n <= total, "at most {total} templated pairs are available");
    let pairs = (0..n)
        .map(|i| {
            let (sym, sym_advice) = SYMPTOMS[i % SYMPTOMS.len()];
            let (grp, grp_advice) = GROUPS[i / SYMPTOMS.len()];
            let q = TEMPLATES[(i + i / SYMPTOMS.len()) % TEMPLATES.len()]
                .replace("{s}", sym)
                .replace("{g}", grp);
            let a = format!("For {sym} in {grp}, {sym_advice}. Also, {grp_advice}.");
            let mut p = QaPair::new(format!("syn-{i:03}"), q, a);
            p.source = "synthetic".into();
            p
        })
        .collect();
    Corpus::from_pairs("synthetic", pairs).expect("templated pairs are unique")
}

/// `n` vectors of `dim` independent standard normal components.
pub fn gaussian_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Index entries over [`gaussian_vectors`] with ids `g00000`, `g00001`, ...
pub fn gaussian_entries(n: usize, dim: usize, seed: u64) -> Vec<IndexEntry> {
    gaussian_vectors(n, dim, seed)
        .into_iter()
        .enumerate()
        .map(|(i, vector)| IndexEntry {
            answer_id: format!("g{i:05}"),
            vector,
            payload: format!("gaussian vector {i}"),
        })
        .collect()
}
