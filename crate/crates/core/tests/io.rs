use proptest::prelude::*;

use shuttletrack::detection_io::{
    read_detections, read_trajectory, read_trajectory_csv, trajectory_to_csv_string, write_detections, write_trajectory,
    DetectionIoError,
};
use shuttletrack::trajectory::TrajectoryFrame;
use shuttletrack::{CameraId, Detection2D, DetectionStream, Mask, PixelPoint, Provenance, Trajectory3D, WorldPoint};

fn stream() -> impl Strategy<Value = DetectionStream> {
    prop::collection::vec((prop::option::weighted(0.8, (-1e4..1e4f64, -1e4..1e4f64)), 0.0..=1.0f64, 1i64..10_000_000), 1..40)
        .prop_map(|rows| {
            let mut t = 0;
            let dets = rows
                .into_iter()
                .enumerate()
                .map(|(i, (p, c, dt))| {
                    t += dt;
                    match p {
                        Some((u, v)) => Detection2D::found(i as u64, t, PixelPoint::new(u, v), c),
                        None => Detection2D::missed(i as u64, t),
                    }
                })
                .collect();
            DetectionStream::new(CameraId::Right, dets).unwrap()
        })
}

fn trajectory() -> impl Strategy<Value = (Trajectory3D, Vec<Provenance>)> {
    prop::collection::vec((prop::option::of((-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64)), any::<bool>()), 0..40).prop_map(|rows| {
        let mut frames = Vec::new();
        let mut prov = Vec::new();
        for (i, (p, comp)) in rows.into_iter().enumerate() {
            let point = p.map(|(x, y, z)| WorldPoint::new(x, y, z));
            let (mask, pv) = match (point, comp) {
                (None, _) => (Mask::Missing, Provenance::Unfilled),
                (Some(_), false) => (Mask::Detected, Provenance::Detected),
                (Some(_), true) => (Mask::Compensated, Provenance::Compensated),
            };
            frames.push(TrajectoryFrame { frame_index: i as u64, timestamp_ns: i as i64 * 6_250_000, point, mask });
            prov.push(pv);
        }
        (Trajectory3D::from_frames(frames).unwrap(), prov)
    })
}

proptest! {
    #[test]
    fn detection_csv_round_trips(s in stream()) {
        let text = s.to_csv_string();
        let back = DetectionStream::read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn trajectory_csv_round_trips((t, prov) in trajectory(), with_prov in any::<bool>()) {
        let p = with_prov.then_some(prov.as_slice());
        let text = trajectory_to_csv_string(&t, p);
        let (back, back_prov) = read_trajectory_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back_prov.as_deref(), p);
        prop_assert_eq!(trajectory_to_csv_string(&back, back_prov.as_deref()), text);
    }
}

#[test]
fn files_round_trip_and_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let s = DetectionStream::new(
        CameraId::Left,
        vec![Detection2D::found(0, 0, PixelPoint::new(1.5, 2.25), 0.5), Detection2D::missed(1, 6_250_000)],
    )
    .unwrap();
    let path = dir.path().join("left.csv");
    write_detections(&s, &path).unwrap();
    assert_eq!(read_detections(&path).unwrap(), s);

    let t = Trajectory3D::from_points([(0, WorldPoint::new(1.0, 2.0, 3.0))]).unwrap();
    let tp = dir.path().join("traj.csv");
    write_trajectory(&t, None, &tp).unwrap();
    assert_eq!(read_trajectory(&tp).unwrap(), (t, None));

    let missing = dir.path().join("absent.csv");
    let err = read_detections(&missing).unwrap_err();
    assert!(matches!(err, DetectionIoError::Io { .. }));
    assert!(err.to_string().contains("absent.csv"));
}

#[test]
fn malformed_rows_report_their_line() {
    let text = "frame,timestamp_ns,camera,u,v,confidence,found\n0,0,L,1,2,0.5,1\n1,10,L,abc,2,0.5,1\n";
    let err = DetectionStream::read_csv(text.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    let text = "frame,timestamp_ns,camera,u,v,confidence,found\n0,100,L,1,2,0.5,1\n1,90,L,1,2,0.5,1\n";
    assert!(matches!(
        DetectionStream::read_csv(text.as_bytes()).unwrap_err(),
        DetectionIoError::NonMonotoneTimestamp { .. }
    ));
}
