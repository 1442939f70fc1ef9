mod common;

use common::{perturbed, urban_frames};
use mlcalib::geometry::{rotation_angle_distance, Pose, Rotation, Vec3};
use mlcalib::handeye::{Extrinsics, ExtrinsicsSource};
use mlcalib::refinement::*;
use mlcalib::simulation::RigConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear_nearest(points: &[Vec3], q: &Vec3) -> (usize, f64) {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - q).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .unwrap()
}

fn init_for(truth: &Pose) -> Extrinsics {
    let mut e = Extrinsics::new(*truth, ExtrinsicsSource::Init);
    e.tz_observable = false;
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn kdtree_matches_linear_scan(seed in 0u64..1_000_000, n in 1usize..400, k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0)))
            .collect();
        let tree = KdTree::build(&points).unwrap();
        for _ in 0..20 {
            let q = Vec3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-2.0..2.0));
            let nn = tree.nearest(&q);
            let (i, d) = linear_nearest(&points, &q);
            prop_assert_eq!(nn.index, i);
            prop_assert_eq!(nn.distance, d);
            let mut all: Vec<(usize, f64)> = points.iter().enumerate().map(|(i, p)| (i, (p - q).norm())).collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let knn = tree.k_nearest(&q, k);
            prop_assert_eq!(knn.len(), k.min(n));
            for (got, want) in knn.iter().zip(&all) {
                prop_assert_eq!(got.index, want.0);
                prop_assert_eq!(got.distance, want.1);
            }
        }
    }
}

#[test]
fn ransac_finds_tilted_plane_among_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let normal = Vec3::new(0.05, -0.08, 1.0).normalize();
    let offset = 1.3;
    let u = normal.cross(&Vec3::x()).normalize();
    let v = normal.cross(&u);
    let mut points = Vec::new();
    for _ in 0..700 {
        let p = u * rng.random_range(-5.0..5.0) + v * rng.random_range(-5.0..5.0) - normal * offset;
        points.push(p + normal * rng.random_range(-0.01..0.01));
    }
    for _ in 0..300 {
        points.push(Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ));
    }
    let plane = ransac_plane(&points, 500, 0.05, 3).unwrap();
    let angle = plane.normal.dot(&normal).clamp(-1.0, 1.0).acos();
    assert!(angle < 0.02, "normal off by {angle}");
    assert!(plane.normal.z >= 0.0);
    assert!(
        (plane.offset - offset).abs() < 0.02,
        "offset {}",
        plane.offset
    );
    assert!(plane.inlier_count >= 700);
}

#[test]
fn ground_height_of_left_rig() {
    let rig = RigConfig::vehicle_left();
    let frames = urban_frames(&rig, 5, 0.01, 8);
    let ground: Vec<(Vec<Vec3>, Vec<Vec3>)> = frames
        .iter()
        .map(|(a, b)| (a.ground_points(), b.ground_points()))
        .collect();
    let tz = estimate_tz(
        &ground,
        &rig.extrinsic.rotation,
        &GroundParams::default(),
        0,
    )
    .unwrap();
    assert!((tz - rig.extrinsic.translation.z).abs() < 0.02, "t_z {tz}");
    assert!((tz + 1.26).abs() < 0.02);
}

#[test]
fn ground_height_needs_ground() {
    let empty = vec![(Vec::new(), Vec::new())];
    assert!(matches!(
        estimate_tz(&empty, &Rotation::identity(), &GroundParams::default(), 0),
        Err(RefinementError::NoGroundOverlap)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn overlap_is_bounded_and_monotone_in_radius(seed in 0u64..100_000, r in 0.05f64..5.0, grow in 1.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cloud = |n: usize, shift: f64| {
            let pts: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(rng.random_range(0.0..10.0) + shift, rng.random_range(0.0..10.0), rng.random_range(0.0..1.0)))
                .collect();
            PointCloud::new(pts).unwrap()
        };
        let a = cloud(300, 0.0);
        let b = cloud(250, 4.0);
        let t = Pose::new(Rotation::from_yaw(0.2), Vec3::new(0.5, -0.3, 0.0));
        let small = overlap_filter(&a, &b, &t, r);
        let large = overlap_filter(&a, &b, &t, r * grow);
        prop_assert!((0.0..=1.0).contains(&small.omega));
        prop_assert!(small.omega <= large.omega);
        prop_assert!(small.s_a.len() <= large.s_a.len() && small.s_b.len() <= large.s_b.len());
    }
}

#[test]
fn icp_never_worsens_the_alignment() {
    let rig = RigConfig::vehicle_left();
    let frames = urban_frames(&rig, 2, 0.01, 6);
    let params = IcpParams::default();
    for (i, (a, b)) in frames.iter().enumerate() {
        let start = perturbed(
            &rig.extrinsic,
            0.03 * (i as f64 + 1.0),
            0.1 * (i as f64 + 1.0),
        );
        let reg = icp_point_to_plane(b.points(), a.points(), &start, &params).unwrap();
        assert!(
            reg.error <= reg.initial_error,
            "frame {i}: {} > {}",
            reg.error,
            reg.initial_error
        );
        assert!(reg.correspondences > 0 && reg.iterations >= 1);
    }
}

#[test]
fn refinement_stays_at_truth_on_noiseless_data() {
    let rig = RigConfig::vehicle_left();
    let frames = urban_frames(&rig, 1, 0.0, 6);
    let refinement =
        refine_extrinsic(&frames, &init_for(&rig.extrinsic), &RefineParams::default()).unwrap();
    let t = refinement.extrinsics.transform;
    let er = rotation_angle_distance(&t.rotation, &rig.extrinsic.rotation);
    let et = (t.translation - rig.extrinsic.translation).norm();
    assert!(er < 1e-6 && et < 1e-6, "e_r {er}, e_t {et}");
    assert!((refinement.completed_init.translation.z - rig.extrinsic.translation.z).abs() < 1e-6);
}

#[test]
fn refinement_averages_all_converged_frames_when_few() {
    let rig = RigConfig::vehicle_rear();
    let frames = urban_frames(&rig, 3, 0.01, 5);
    let init = init_for(&perturbed(&rig.extrinsic, 0.05, 0.2));
    let refinement = refine_extrinsic(&frames, &init, &RefineParams::default()).unwrap();
    let converged = refinement
        .frames
        .iter()
        .filter(|f| f.registration.as_ref().is_some_and(|r| r.converged))
        .count();
    assert!(converged < 10);
    let candidates = refinement.frames.iter().filter(|f| f.candidate).count();
    assert_eq!(candidates, converged);
    assert_eq!(
        refinement.extrinsics.diagnostics.candidates,
        Some(converged)
    );
    assert_eq!(refinement.extrinsics.source, ExtrinsicsSource::Refined);
    assert!(refinement.extrinsics.tz_observable);
}

#[test]
fn refinement_candidates_are_the_lowest_errors() {
    let rig = RigConfig::vehicle_left();
    let frames = urban_frames(&rig, 4, 0.01, 8);
    let params = RefineParams {
        candidates: 3,
        ..RefineParams::default()
    };
    let refinement = refine_extrinsic(&frames, &init_for(&rig.extrinsic), &params).unwrap();
    let err = |f: &FrameResult| f.registration.as_ref().map(|r| r.error).unwrap();
    let worst_candidate = refinement
        .frames
        .iter()
        .filter(|f| f.candidate)
        .map(err)
        .fold(0.0, f64::max);
    for f in refinement.frames.iter().filter(|f| !f.candidate) {
        if let Some(r) = f.registration.as_ref().filter(|r| r.converged) {
            assert!(r.error >= worst_candidate);
        }
    }
    assert_eq!(refinement.frames.iter().filter(|f| f.candidate).count(), 3);
}

#[test]
fn refinement_without_overlap_fails() {
    let rig = RigConfig::vehicle_left();
    let frames = urban_frames(&rig, 1, 0.01, 3);
    let params = RefineParams {
        omega_gate: OmegaGate::Absolute(1.0),
        ..RefineParams::default()
    };
    assert!(matches!(
        refine_extrinsic(&frames, &init_for(&rig.extrinsic), &params),
        Err(RefinementError::NoUsableFrames {
            frames: 3,
            gated: 0
        })
    ));
    assert!(matches!(
        refine_extrinsic(&[], &init_for(&rig.extrinsic), &RefineParams::default()),
        Err(RefinementError::NoUsableFrames { .. })
    ));
}

#[test]
fn relative_gate_scales_with_the_best_overlap() {
    let rig = RigConfig::vehicle_rear();
    let frames = urban_frames(&rig, 6, 0.01, 6);
    let params = RefineParams {
        omega_gate: OmegaGate::Relative(0.5),
        ..RefineParams::default()
    };
    let refinement = refine_extrinsic(&frames, &init_for(&rig.extrinsic), &params).unwrap();
    let max = refinement
        .frames
        .iter()
        .map(|f| f.omega)
        .fold(0.0, f64::max);
    for f in &refinement.frames {
        assert_eq!(f.gated, f.omega >= 0.5 * max);
    }
}
