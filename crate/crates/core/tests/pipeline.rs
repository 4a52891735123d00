use std::fs;
use std::path::Path;

use dynscene::io::{self, PipelineConfig};
use dynscene::pipeline::{self, FrameStatus, SequenceState, SyntheticData};
use dynscene::Error;

const SCENE: &str = "
width = 128
height = 128
frames = 3
seed = 3
match_spacing = 0.03
background_spacing = 0.09
supersample = 2
ground = 0.0 3.0
camera = 0  2.051 -2.051 4.0   0 0 0.6   173
camera = 1  2.801 -0.751 4.0   0 0 0.6   173
camera = 2  2.801  0.751 4.0   0 0 0.6   173
object = sphere  0.0 -0.75 0.75   0.35              0.05 0.03 0
object = box     0.0  0.75 0.65   0.30 0.22 0.25  30   -0.03 0.05 0  until=1
";

fn config() -> PipelineConfig {
    io::parse_config(
        "volume_percent_outer = 7.5\nsigma_i = 0.15\nm_unknown = 0.6\nlambda_data = 0.6\nlambda_contrast = 0.5\nncc_window = 7\n",
    )
    .unwrap()
}

fn generate(scene: &str, dir: &Path) -> SyntheticData {
    let spec = pipeline::parse_scene_spec(scene).unwrap();
    pipeline::generate_synthetic(&spec, dir).unwrap()
}

#[test]
fn synthetic_matches_reproject_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(SCENE, dir.path());
    let manifest = io::load_dataset(dir.path()).unwrap();
    assert_eq!(manifest.frame_count, 3);
    assert_eq!(manifest.camera_ids, vec![0, 1, 2]);
    for (t, cloud) in data.matches.iter().enumerate() {
        assert!(cloud.len() > 100);
        for p in &cloud.points {
            assert!(p.observations.len() >= 2);
            for o in &p.observations {
                let cam = data.cameras.iter().find(|c| c.id == o.camera).unwrap();
                let (px, _) = cam.project(&p.position).unwrap();
                assert!((px - o.pixel).norm() < 1e-6, "frame {t}");
            }
        }
        let on_disk = manifest.load_matches(t).unwrap().unwrap();
        assert_eq!(on_disk.len(), cloud.len());
    }
}

#[test]
fn sequence_reuses_stopped_object_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    generate(SCENE, dir.path());
    let manifest = io::load_dataset(dir.path()).unwrap();
    let result = pipeline::run_sequence(&manifest, &config(), None).unwrap();
    assert_eq!(result.frames.len(), 3);
    assert!(!result.any_degraded());

    let frames: Vec<_> = result.frames.iter().map(|f| f.result.as_ref().unwrap()).collect();
    assert!(frames[0].reused.is_empty() && frames[1].reused.is_empty());
    assert_eq!(frames[0].objects.len(), 2);
    assert_eq!(frames[2].reused.len(), 1);
    let id = frames[2].reused[0];
    assert_eq!(frames[2].object(id), frames[1].object(id));
    for f in &frames {
        for v in f.objects.iter().flat_map(|o| &o.views) {
            assert!(v.energy_trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(v.converged && v.sweeps <= 8);
            assert_eq!(
                v.mask.data(),
                &v.depth.data().iter().map(Option::is_some).collect::<Vec<_>>()[..]
            );
        }
    }
    for f in &result.frames {
        let e = f.evaluation.as_ref().unwrap();
        assert_eq!(e.per_view.len(), 3);
        assert!(e.mean.overlap > 0.6, "frame {}: {:?}", f.frame, e.mean);
    }

    let report = result.report();
    let row = |k: &str| report.iter().find(|(n, _)| n == k).map(|r| r.1);
    assert_eq!(row("degraded_frames"), Some(0.0));
    assert_eq!(row("frame_2_objects"), Some(2.0));
    assert_eq!(
        row("frame_1_overlap"),
        Some(result.frames[1].evaluation.as_ref().unwrap().mean.overlap)
    );
    assert!(row("mean_depth_error").is_some());

    // Written outputs evaluate to the same segmentation scores.
    let out = dir.path().join("out");
    let cameras = manifest.cameras().unwrap();
    for (f, r) in result.frames.iter().zip(&frames) {
        pipeline::write_frame_outputs(r, &cameras, &out.join(f.frame.to_string()), false).unwrap();
    }
    let rows = pipeline::evaluate_outputs(&out, dir.path()).unwrap();
    for t in 0..3 {
        let key = format!("frame_{t}_overlap");
        let disk = rows.iter().find(|(n, _)| *n == key).unwrap().1;
        assert_eq!(disk, result.frames[t].evaluation.as_ref().unwrap().mean.overlap);
    }
    assert!(out
        .join("0")
        .join(format!("obj{}.ply", frames[0].objects[0].id))
        .is_file());
}

#[test]
fn corrupt_frame_does_not_stop_the_sequence() {
    let dir = tempfile::tempdir().unwrap();
    generate(SCENE, dir.path());
    fs::write(dir.path().join("matches/1.txt"), "not a match file\n").unwrap();
    let manifest = io::load_dataset(dir.path()).unwrap();
    let result = pipeline::run_sequence(&manifest, &config(), None).unwrap();
    assert!(result.frames[0].result.is_ok());
    assert!(result.frames[1].result.is_err());
    assert!(result.frames[2].result.is_ok());
    assert!(result.any_degraded());
    let report = result.report();
    assert!(report.contains(&("frame_1_degraded".to_string(), 1.0)));
    assert!(report.contains(&("degraded_frames".to_string(), 1.0)));
}

#[test]
fn static_scene_reports_no_motion() {
    let still = SCENE
        .lines()
        .map(|l| match l.strip_prefix("object = ") {
            Some(_) => {
                let mut f: Vec<&str> = l.split_whitespace().collect();
                f.retain(|t| !t.starts_with("until"));
                let n = f.len();
                f[n - 3..].copy_from_slice(&["0", "0", "0"]);
                f.join(" ")
            }
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let dir = tempfile::tempdir().unwrap();
    generate(&still, dir.path());
    let manifest = io::load_dataset(dir.path()).unwrap();
    let mut state = SequenceState::default();
    for t in 0..manifest.frame_count {
        let r = pipeline::reconstruct_frame(&manifest, t, &config(), &mut state, None).unwrap();
        assert_eq!(r.status, FrameStatus::NoMotion, "frame {t}");
        assert!(r.objects.is_empty());
    }
}

#[test]
fn view_subset_and_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    generate(SCENE, dir.path());
    let manifest = io::load_dataset(dir.path()).unwrap();
    let mut state = SequenceState::default();
    let r = pipeline::reconstruct_frame(&manifest, 0, &config(), &mut state, Some(&[1])).unwrap();
    assert!(r.objects.iter().flat_map(|o| &o.views).all(|v| v.camera == 1));
    assert!(matches!(
        pipeline::reconstruct_frame(&manifest, 3, &config(), &mut state, None),
        Err(Error::InvalidArgument(_))
    ));

    fs::remove_file(dir.path().join("frames/2/1.png")).unwrap();
    assert!(matches!(io::load_dataset(dir.path()), Err(Error::Dataset(_))));
    fs::remove_file(dir.path().join("cameras.txt")).unwrap();
    assert!(matches!(
        io::load_dataset(dir.path()),
        Err(Error::CalibrationNotFound(_))
    ));
}
