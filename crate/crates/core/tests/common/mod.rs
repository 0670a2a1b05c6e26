#![allow(dead_code)]

use std::path::Path;

use newsvote::ingest::{write_csv, ColumnMap, Document};
use newsvote::rng::SplitMix64;

fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{}", to_letters(i))).collect()
}

/// Base-26 letters, so pool words survive tokenizing and stemming as
/// distinct tokens.
fn to_letters(mut i: usize) -> String {
    let mut s = String::new();
    loop {
        s.insert(0, (b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            return s;
        }
    }
}

/// News-like documents: a shared vocabulary plus a class-leaning one, with
/// some documents borrowing the other class's words and a little label
/// noise, so no learner separates the classes perfectly.
pub fn synthetic_documents(n: usize, seed: u64) -> Vec<Document> {
    let shared = pool("zork", 300);
    let leaning = [pool("fakx", 120), pool("relq", 120)];
    let authors = ["Ann Lee", "Bo Chen", "", "Cy Diaz", "Dee Ford"];
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|i| {
            let label = (rng.next_f64() < 0.5) as u8;
            let confusion = if rng.next_f64() < 0.1 { 0.5 } else { 0.08 };
            let len = 30 + rng.below(120);
            let mut words = Vec::with_capacity(len);
            for _ in 0..len {
                let r = rng.next_f64();
                let w = if r < 0.2 {
                    let side = if rng.next_f64() < confusion { 1 - label } else { label };
                    &leaning[side as usize][rng.below(120)]
                } else {
                    &shared[rng.below(300)]
                };
                words.push(w.clone());
            }
            if i % 17 == 0 {
                words.push("https://example.com/story".into());
            }
            let title: Vec<String> = (0..5).map(|_| shared[rng.below(300)].clone()).collect();
            let observed = if rng.next_f64() < 0.03 { 1 - label } else { label };
            Document {
                id: i as i64,
                title: title.join(" "),
                author: authors[rng.below(authors.len())].to_string(),
                body: words.join(" "),
                label: Some(observed),
            }
        })
        .collect()
}

pub fn write_corpus(path: &Path, docs: &[Document]) {
    let mut f = std::fs::File::create(path).unwrap();
    write_csv(&mut f, docs, &ColumnMap::default()).unwrap();
}
