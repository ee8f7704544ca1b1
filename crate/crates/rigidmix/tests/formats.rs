use rigidmix::dump::{DumpFrame, StateDump};
use rigidmix::format::{read_labels, read_observations, write_labels, write_observations};
use rigidmix::Error;
use rigidmix_core::init::init_state;
use rigidmix_core::model::{Dim, HyperParams};
use rigidmix_core::synth::{make_rigid_scene, BodySpec, SceneSpec, Shape};

fn scene() -> rigidmix_core::synth::Scene {
    make_rigid_scene(&SceneSpec {
        dim: 2,
        bodies: vec![BodySpec::translating(Shape::Ball { radius: 2.0 }, &[0.0, 0.0], &[0.3, -0.1])],
        dot_density: 3.0,
        background_dots: 40,
        background_translation: vec![0.0, 0.0],
        extent_min: vec![-5.0, -5.0],
        extent_max: vec![5.0, 5.0],
        flicker_prob: 0.2,
        frames: 4,
        seed: 8,
        velocity_noise_std: 0.05,
        velocity_dropout_prob: 0.0,
    })
    .unwrap()
}

#[test]
fn generated_scene_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene();
    let obs = dir.path().join("obs.jsonl");
    let labels = dir.path().join("labels.jsonl");
    write_observations(&obs, &s.frames).unwrap();
    write_labels(&labels, &s.labels).unwrap();
    assert_eq!(read_observations(&obs).unwrap(), s.frames);
    assert_eq!(read_labels(&labels).unwrap(), s.labels);
}

#[test]
fn empty_files_hold_no_frames_and_missing_files_name_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert!(read_observations(&empty).unwrap().is_empty());
    let missing = dir.path().join("missing.jsonl");
    let err = read_observations(&missing).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("missing.jsonl"));
}

#[test]
fn state_dump_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene();
    let hyper = HyperParams::defaults(Dim::Two, 2, 10);
    let state = init_state(&s.frames[0], 2, 10, &hyper, 4).unwrap();
    let dump = StateDump {
        seed: 4,
        hyper,
        frames: vec![DumpFrame {
            t: 0,
            used_indices: (0..s.frames[0].len()).collect(),
            state,
        }],
    };
    let path = dir.path().join("dump.jsonl");
    dump.write(&path).unwrap();
    let first = std::fs::read(&path).unwrap();
    let back = StateDump::read(&path).unwrap();
    assert_eq!(back, dump);
    back.write(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}
