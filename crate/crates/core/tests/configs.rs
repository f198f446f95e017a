use std::path::PathBuf;

use disagree_lab::experiment::{CorpusSource, ExperimentConfig, ModelKind};
use disagree_lab::kvconfig::KvConfig;
use disagree_lab::synthgen::PopulationSpec;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_population_spec_parses() {
    let kv = KvConfig::from_file(&configs().join("population.conf")).unwrap();
    let spec = PopulationSpec::from_kv(&kv, "").unwrap();
    kv.ensure_all_used().unwrap();
    assert_eq!(spec.n_annotators, 200);
    assert_eq!(spec.attributes[0].categories.len(), 2);
}

#[test]
fn shipped_experiment_configs_parse() {
    let cfg = ExperimentConfig::from_file(&configs().join("experiment.conf")).unwrap();
    assert_eq!(cfg.models.len(), 4);
    assert!(cfg.has(ModelKind::MajorityToxic));
    assert_eq!(cfg.run_seeds.len() * cfg.k, 12);

    let cfg = ExperimentConfig::from_file(&configs().join("files.conf")).unwrap();
    match &cfg.corpus {
        CorpusSource::Files { ingest, sample, .. } => {
            assert_eq!(*sample, Some((5000, 0)));
            assert_eq!(ingest.underage.as_ref().unwrap().categories, ["Under 18"]);
        }
        other => panic!("unexpected source {other:?}"),
    }
    assert_eq!(cfg.attributes.len(), 4);
}
