use std::path::Path;

use organmix::dataset::{CaseSource, InMemoryDataset};
use organmix::io::{
    generate_phantom_cases, generate_phantom_dataset, index_dataset, load_case, read_volume, write_volume,
    DatasetManifest, FileDataset, PhantomSpec, MANIFEST_FILE,
};
use organmix::model::{DatasetIndex, Volume};
use organmix::pipeline::{run, run_in_memory, PipelineConfig, RunManifest, RUN_MANIFEST_FILE};
use organmix::strategies::{AugSpec, StrategyKind};
use organmix::Error;

fn phantom(dir: &Path, n: usize) -> DatasetManifest {
    generate_phantom_dataset(&PhantomSpec::small(21), n, dir).unwrap()
}

#[test]
fn phantom_dataset_reads_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), 3);
    let index = index_dataset(dir.path()).unwrap();
    let cases = generate_phantom_cases(&PhantomSpec::small(21), 3).unwrap();
    let schema = std::sync::Arc::new(index.schema.clone());
    for case in &cases {
        assert_eq!(&load_case(&index, schema.clone(), &case.id).unwrap(), case);
    }
    // The index from disk carries the same statistics as one built in memory.
    let mem = DatasetIndex::from_cases("", cases.iter()).unwrap();
    assert_eq!(index.stats, mem.stats);
    assert_eq!(index.cases.len(), 3);
}

#[test]
fn missing_file_names_the_case() {
    let dir = tempfile::tempdir().unwrap();
    let m = phantom(dir.path(), 2);
    std::fs::remove_file(dir.path().join(&m.cases[1].label)).unwrap();
    let err = index_dataset(dir.path().join(MANIFEST_FILE)).unwrap_err();
    assert!(err.to_string().contains(&m.cases[1].id), "{err}");
}

#[test]
fn oblique_affine_survives_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = organmix::model::Shape::new(3, 4, 5);
    let sform = [[0.0, 0.0, 2.0, 1.0], [0.0, 1.5, 0.0, -2.0], [-1.0, 0.0, 0.0, 3.0]];
    let v = Volume::new(s, [2.0, 1.5, 1.0], [3.0, -2.0, 1.0], 1, (0..60).map(|x| x as f32).collect())
        .unwrap()
        .with_sform(Some(sform));
    let path = dir.path().join("v.nii.gz");
    write_volume(&v, &path).unwrap();
    let back = read_volume(&path).unwrap();
    assert_eq!(back.data(), v.data());
    assert_eq!(back.sform(), Some(sform));
}

#[test]
fn disk_run_matches_memory_run_and_refuses_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    phantom(&input, 4);
    let config = PipelineConfig {
        input: input.clone(),
        output: dir.path().join("out"),
        spec: AugSpec::new(StrategyKind::CarveMix),
        multiplier: 2,
        seed: 5,
        workers: 2,
    };
    let summary = run(&config).unwrap();
    assert_eq!(summary.manifest.ok_count(), 8);

    let saved = RunManifest::load(config.output.join(RUN_MANIFEST_FILE)).unwrap();
    assert_eq!(saved.checksum(), summary.checksum);
    let outputs = index_dataset(&config.output).unwrap();
    assert_eq!(outputs.cases.len(), 8);

    let files = FileDataset::new(index_dataset(&input).unwrap(), false);
    let ds = InMemoryDataset::new(
        files.index().cases.iter().map(|c| (*files.load(&c.id).unwrap()).clone()),
    )
    .unwrap();
    let mem = run_in_memory(&ds, &config.spec, 2, 5, 1).unwrap();
    assert_eq!(mem.manifest.checksum(), summary.checksum);
    let written = FileDataset::new(outputs, false);
    for case in &mem.outputs {
        assert_eq!(&*written.load(&case.id).unwrap(), case);
    }

    assert!(matches!(run(&config), Err(Error::InvalidParams(_))));
}
