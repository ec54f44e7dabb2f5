use bedmake::geometry::{Pixel, Pose, Vec3};
use bedmake::render::{
    apply_lighting, augment, deproject, median_depth, mirror, photometric_set, project, render, side_camera,
    CameraModel, LightingParams, Observation, RenderConfig, RenderError, MISSING_DEPTH,
};
use bedmake::sim::{sample_initial_state, Side, SimConfig, WorldState, TEST_CATALOG};
use image::RgbImage;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn camera() -> CameraModel {
    let cfg = RenderConfig::default();
    side_camera(&WorldState::spread(&SimConfig::default()).frame, Side::A, &cfg)
}

fn observation(seed: u64) -> Observation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RenderConfig::default();
    let world = sample_initial_state(&mut rng, &SimConfig::default(), 2, TEST_CATALOG).unwrap();
    let side = if seed.is_multiple_of(2) { Side::A } else { Side::B };
    let cam = side_camera(&world.frame, side, &cfg);
    let light = LightingParams::sample(&mut rng, &cfg);
    render(&world, &cam, &light, cfg.depth_dropout, &mut rng)
}

fn window_obs(values: &[f32], u: u32, v: u32) -> Observation {
    let pose = Pose::look_at(Vec3::new(0.0, -1.0, 2.0), Vec3::zeros(), Vec3::z());
    let mut depth = vec![MISSING_DEPTH; 640 * 480];
    let mut k = 0;
    for y in v - 5..v + 5 {
        for x in u - 5..u + 5 {
            depth[(y * 640 + x) as usize] = values[k];
            k += 1;
        }
    }
    Observation {
        rgb: RgbImage::new(640, 480),
        depth,
        camera: CameraModel::new(525.0, 525.0, 319.5, 239.5, pose),
        lighting: LightingParams::identity(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deproject_inverts_project(u in 0.0f64..639.0, v in 0.0f64..479.0, z in 0.2f64..3.0, mirrored in any::<bool>()) {
        let cam = if mirrored { camera().mirrored() } else { camera() };
        let p = deproject(&Pixel::new(u, v), z, &cam).unwrap();
        let back = project(&p, &cam).unwrap();
        prop_assert!((back.u - u).abs() < 1e-9 && (back.v - v).abs() < 1e-9);
        let depth = cam.pose.inverse_transform_point(&p).z;
        prop_assert!((depth - z).abs() < 1e-9);
    }

    #[test]
    fn median_ignores_missing_values(
        vals in prop::collection::vec(0.3f32..4.0, 100),
        mask in prop::collection::vec(any::<bool>(), 100),
        u in 5u32..635,
        v in 5u32..475,
    ) {
        let vals: Vec<f32> = vals.iter().zip(&mask).map(|(&d, &m)| if m { MISSING_DEPTH } else { d }).collect();
        let mut valid: Vec<f32> = vals.iter().copied().filter(|&d| d != MISSING_DEPTH).collect();
        valid.sort_by(f32::total_cmp);
        match median_depth(&window_obs(&vals, u, v), &Pixel::new(u as f64, v as f64)) {
            Ok(d) => {
                prop_assert!(!valid.is_empty());
                prop_assert_eq!(d, valid[(valid.len() - 1) / 2] as f64);
                prop_assert!(d != MISSING_DEPTH as f64);
            }
            Err(e) => {
                prop_assert!(valid.is_empty());
                prop_assert!(matches!(e, RenderError::NoDepth { .. }), "{}", e);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn augmentation_keeps_labels_and_commutes(seed in any::<u64>(), u in 0.0f64..639.0, v in 0.0f64..479.0) {
        let cfg = RenderConfig::default();
        let obs = observation(seed);
        let label = Pixel::new(u, v);
        let out = augment(&obs, &label, &cfg);
        prop_assert_eq!(out.len(), 12);
        let photo = photometric_set(&cfg);
        let n = photo.len();
        let flipped = mirror(&obs);
        for (k, (o, l)) in out.iter().enumerate() {
            let (want, base) = if k < n { (label, &obs) } else { (Pixel::new(639.0 - u, v), &flipped) };
            prop_assert_eq!(*l, want);
            prop_assert_eq!(&o.depth, &base.depth);
        }
        // mirror then light == light then mirror
        for (k, light) in photo.iter().enumerate() {
            let mut lit = obs.clone();
            apply_lighting(&mut lit.rgb, light);
            prop_assert_eq!(&mirror(&lit).rgb, &out[n + k].0.rgb);
        }
        prop_assert_eq!(mirror(&mirror(&obs)), obs);
    }

    #[test]
    fn rendering_is_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(observation(seed), observation(seed));
    }
}

