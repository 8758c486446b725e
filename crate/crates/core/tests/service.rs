use std::sync::{Arc, Barrier};
use std::time::Instant;

use shadowbasis_core::ao::AoStroke;
use shadowbasis_core::bases::build_bases;
use shadowbasis_core::mesh::shapes;
use shadowbasis_core::session::{BuildState, ServiceError, SessionManager, SessionSource};
use shadowbasis_core::{canonical_poses, sample_elm, CameraPose, ImageBuffer, View};

fn prebuilt(manager: &SessionManager, pose: CameraPose, ao: Option<&ImageBuffer>) -> Arc<shadowbasis_core::session::Session> {
    let bases = build_bases(&View::new(&shapes::unit_cube(), pose));
    manager
        .create(SessionSource::Prebuilt {
            ssbb: bases.encode().unwrap(),
            mask: None,
            receiver: Some(bases.receiver().unwrap().encode_png().unwrap()),
            ao: ao.map(|a| a.encode_pfm()),
        })
        .unwrap()
}

#[test]
fn parallel_sessions_match_serial_runs() {
    let manager = SessionManager::default();
    let poses: Vec<CameraPose> = canonical_poses().into_iter().step_by(2).take(8).map(|p| p.with_size(32, 32)).collect();
    let sessions: Vec<_> = poses.iter().map(|&p| prebuilt(&manager, p, None)).collect();
    let serial: Vec<Vec<ImageBuffer>> = sessions
        .iter()
        .enumerate()
        .map(|(i, s)| (0..10).map(|k| s.set_elm(sample_elm((i * 100 + k) as u64)).unwrap().shadow.pixels).collect())
        .collect();

    let barrier = Arc::new(Barrier::new(sessions.len()));
    let parallel: Vec<Vec<ImageBuffer>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sessions
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let barrier = barrier.clone();
                scope.spawn(move || {
                    barrier.wait();
                    (0..10).map(|k| s.set_elm(sample_elm((i * 100 + k) as u64)).unwrap().shadow.pixels).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(parallel, serial);
    // each session keeps its own last shadow
    for (i, s) in sessions.iter().enumerate() {
        assert_eq!(s.shadow(shadowbasis_core::ShadowDomain::Inverse).unwrap().pixels, serial[i][9]);
    }
}

#[test]
fn building_session_answers_immediately() {
    let manager = SessionManager::default();
    let session = manager
        .create(SessionSource::Mesh {
            obj: shapes::lamp_stool().to_obj(),
            pose: CameraPose::new(45.0, 15.0).with_size(128, 128),
            ao_spp: 4,
        })
        .unwrap();
    assert_eq!(session.status().state, BuildState::Building);
    let start = Instant::now();
    for _ in 0..100 {
        assert!(matches!(session.set_elm(sample_elm(0)), Err(ServiceError::NotReady(_))));
    }
    assert!(start.elapsed().as_millis() < 500);
}

#[test]
fn ao_edits_change_only_the_stroke_disk() {
    let manager = SessionManager::default();
    let ao = ImageBuffer::filled(32, 32, 0.9);
    let s = prebuilt(&manager, CameraPose::new(0.0, 15.0).with_size(32, 32), Some(&ao));
    let before = s.export().unwrap().bases_ssbb;
    let stroke = AoStroke { x: 20.0, y: 9.0, radius: 6.0, value: 0.1 };
    s.edit_ao(&[stroke]).unwrap();
    let out = s.export().unwrap();
    assert_eq!(out.bases_ssbb, before);
    let edited = ImageBuffer::decode_pfm(&out.ao_pfm).unwrap();
    for y in 0..32 {
        for x in 0..32 {
            assert_eq!(edited.get(x, y) != ao.get(x, y), stroke.covers(x, y), "({x},{y})");
            assert!(edited.get(x, y) <= ao.get(x, y));
        }
    }
    assert_eq!(s.edit_ao(&[]).unwrap(), edited);
}
