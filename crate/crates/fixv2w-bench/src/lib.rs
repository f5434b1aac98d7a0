//! Shared setup for the benchmarks: synthetic graphs with a controllable
//! invalid-mapping population over a fixed candidate pool.

use fixv2w_core::embed::{train, EmbeddingModel, TrainingConfig};
use fixv2w_core::graph::{Abstraction, KnowledgeGraph, MappingStatus};
use fixv2w_core::testkit;

/// Graph with `allowed_pool` in-view Allowed CWEs, ten Discouraged CWEs, and
/// `invalid_cves` CVEs each mapped to one Discouraged CWE. The invalid
/// population scales while the candidate pool stays fixed.
pub fn scaling_graph(invalid_cves: usize, allowed_pool: usize) -> KnowledgeGraph {
    let mut builder = testkit::hierarchy_builder();
    for i in 0..allowed_pool {
        testkit::weakness(
            &mut builder,
            2000 + i as u32,
            Abstraction::Base,
            MappingStatus::Allowed,
            true,
        );
    }
    for i in 0..10 {
        testkit::weakness(
            &mut builder,
            3000 + i as u32,
            Abstraction::Class,
            MappingStatus::Discouraged,
            false,
        );
    }
    for v in 0..invalid_cves {
        testkit::mapping(
            &mut builder,
            &format!("CVE-2020-{:05}", 10000 + v),
            3000 + (v % 10) as u32,
        );
    }
    builder.freeze()
}

/// A quickly trained model covering every entity of the graph.
pub fn quick_model(graph: &KnowledgeGraph) -> EmbeddingModel {
    let config = TrainingConfig {
        dim: 16,
        epochs: 5,
        batch_size: 256,
        negatives_per_positive: 4,
        learning_rate: 1e-2,
        seed: 1,
        ..TrainingConfig::default()
    };
    train(graph, &config).expect("benchmark graph trains").model
}
