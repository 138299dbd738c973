use refnav::io::{read_imu, read_points, read_truth, write_imu, write_points, write_truth};
use refnav::sim::{simulate, Scenario, ScenarioKind};
use refnav::ssc::{train_on_imu, ForestParams, SscConfig, StandstillClassifier};
use refnav::{ImuSample, MotionState};

#[test]
fn sample_counts_follow_rates() {
    let r = simulate(&Scenario::new(ScenarioKind::DriveBy, 10.0, 12.0, 1)).unwrap();
    assert_eq!(r.imu.len(), 1200);
    assert_eq!(r.truth.samples().len(), 1200);
    assert!(!r.points.is_empty());
    assert!(r.points.windows(2).all(|w| w[1].t >= w[0].t));
}

#[test]
fn same_seed_same_bytes() {
    let sc = Scenario::new(ScenarioKind::Figure8, 6.0, 10.0, 5);
    let bytes = || {
        let r = simulate(&sc).unwrap();
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        write_imu(&mut a, &r.imu, None).unwrap();
        write_points(&mut b, &r.points).unwrap();
        write_truth(&mut c, r.truth.samples()).unwrap();
        (a, b, c)
    };
    assert!(bytes() == bytes());
    let other = simulate(&Scenario {
        seed: 6,
        ..sc.clone()
    })
    .unwrap();
    let r = simulate(&sc).unwrap();
    assert_ne!(other.imu, r.imu);
}

#[test]
fn csv_round_trips() {
    let r = simulate(&Scenario::new(ScenarioKind::ParkingLoop, 0.0, 5.0, 2)).unwrap();
    let labels: Vec<MotionState> = r.truth.samples().iter().map(|s| s.motion).collect();
    let mut buf = Vec::new();
    write_imu(&mut buf, &r.imu, Some(&labels)).unwrap();
    let (imu, l) = read_imu(buf.as_slice()).unwrap();
    assert_eq!(imu, r.imu);
    assert_eq!(l.unwrap(), labels);

    let mut buf = Vec::new();
    write_truth(&mut buf, r.truth.samples()).unwrap();
    assert_eq!(read_truth(buf.as_slice()).unwrap(), r.truth.samples());

    let mut buf = Vec::new();
    write_points(&mut buf, &r.points).unwrap();
    let back = read_points(buf.as_slice()).unwrap();
    for (a, b) in back.iter().zip(&r.points) {
        assert!((a.azimuth - b.azimuth).abs() < 1e-12);
        assert_eq!(
            (a.t, a.distance, a.reflectivity),
            (b.t, b.distance, b.reflectivity)
        );
    }
}

#[test]
fn malformed_csv_is_an_error() {
    assert!(read_imu("t,ax\n0.0,1.0\n".as_bytes()).is_err());
    assert!(
        read_imu("t,ax,ay,az,roll_rate,pitch_rate,yaw_rate\n0,0,0,NaN,0,0,0\n".as_bytes()).is_err()
    );
    assert!(read_points("t,distance,azimuth_deg,reflectivity\n0,1,x,3\n".as_bytes()).is_err());
}

#[test]
fn trained_classifier_separates_rest_from_driving() {
    let r = simulate(&Scenario::new(ScenarioKind::ThreeMode, 0.0, 300.0, 1)).unwrap();
    let labels: Vec<MotionState> = r.truth.samples().iter().map(|s| s.motion).collect();
    let cfg = SscConfig::default();
    let model = train_on_imu(&r.imu, &labels, &cfg, &ForestParams::default(), 9).unwrap();

    let mut still = StandstillClassifier::new(model.clone(), cfg).unwrap();
    let quiet = (0..100).map(|k| ImuSample {
        t: k as f64 * 0.01,
        ax: 0.0,
        ay: 0.0,
        az: refnav::sim::GRAVITY,
        roll_rate: 0.0,
        pitch_rate: 0.0,
        yaw_rate: 0.0,
    });
    assert!(quiet.map(|s| still.push(&s).state).last() == Some(MotionState::Standstill));

    let drive = simulate(&Scenario::new(ScenarioKind::DriveBy, 30.0 / 3.6, 5.0, 3)).unwrap();
    let mut moving = StandstillClassifier::new(model, cfg).unwrap();
    let states: Vec<_> = drive.imu.iter().map(|s| moving.push(s).state).collect();
    // until the first window fills the classifier sees padding
    let full = &states[cfg.n_samples..];
    let motion = full.iter().filter(|s| **s == MotionState::Motion).count();
    assert!(motion as f64 > 0.99 * full.len() as f64);
}
