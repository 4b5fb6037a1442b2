#![allow(dead_code)]

use labeldist::data::majority_from_counts;
use labeldist::data::{to_record_line, DatasetName, Instance};
use labeldist::rng::SeededRng;
use labeldist::{ClassId, TaskKind};
use std::path::{Path, PathBuf};

/// `n` three-way instances with random counts summing to 100.
pub fn synthetic_three_way(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let a = rng.below(101);
            let b = rng.below(101 - a);
            let counts = vec![a, b, 100 - a - b];
            Instance {
                uid: format!("syn-{i:04}"),
                task_kind: TaskKind::ThreeWay,
                texts: [
                    ("premise".to_string(), format!("Premise number {i}.")),
                    ("hypothesis".to_string(), format!("Hypothesis number {i}.")),
                ]
                .into_iter()
                .collect(),
                majority_label: majority_from_counts(&counts).class,
                label_counts: counts,
                old_label: Some(ClassId(rng.below(3) as usize)),
            }
        })
        .collect()
}

pub fn write_dataset(dir: &Path, name: DatasetName, instances: &[Instance]) -> PathBuf {
    let path = dir.join(format!("{}.jsonl", name.task_tag()));
    let body: Vec<String> = instances.iter().map(|i| to_record_line(i, name)).collect();
    std::fs::write(&path, body.join("\n") + "\n").unwrap();
    path
}
