use bedmake::geometry::{Rgb, Vec3};
use bedmake::harness::{
    collect_demonstrations, run_episodes, CollectMode, Distribution, ExperimentConfig, PolicySet, Stream,
};
use bedmake::policies::{featurize, heuristic_grasp, oracle_grasp, train_grasp, PolicyConfig};
use bedmake::render::{project, render, side_camera, LightingParams, RenderConfig};
use bedmake::sim::{sample_initial_state, Distractor, DistractorShape, Side, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The supervisor finishes each side within two attempts in at least 95%
/// of freshly sampled episodes.
#[test]
fn oracle_closes_the_loop_within_two_attempts() {
    let cfg = ExperimentConfig::default();
    let logs = run_episodes(&PolicySet::oracle(), 200, Distribution::Train, Stream::Eval, &cfg).unwrap();
    let quick = logs
        .iter()
        .filter(|l| {
            l.sides.len() == 2
                && l.sides.iter().all(|s| s.attempts.iter().take(2).any(|a| a.oracle_label == 1))
        })
        .count();
    let rate = quick as f64 / logs.len() as f64;
    assert!(rate >= 0.95, "{quick}/200 episodes finished both sides within two attempts");
}

/// A white object left of the Side-A corner captures the heuristic's
/// "left-most white pixel"; the learned head, which pools colour over the
/// whole image, moves less on average.
#[test]
fn learned_head_is_less_distracted_than_the_heuristic() {
    let cfg = ExperimentConfig::default();
    let demos = collect_demonstrations(CollectMode::Bc, cfg.demos.main, None, &cfg, Stream::Collect).unwrap();
    let head = train_grasp(&demos.demos(), &cfg.train, &cfg.render, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let sim = SimConfig::default();
    let rcfg = RenderConfig::default();
    let pcfg = PolicyConfig::default();

    let (mut fixtures, mut seed) = (0, 0u64);
    let (mut heuristic_moves, mut learned_moves) = (0.0, 0.0);
    while fixtures < 50 {
        seed += 1;
        assert!(seed < 500, "too few usable fixtures");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = sample_initial_state(&mut rng, &sim, 0, &[]).unwrap();
        let cam = side_camera(&clean.frame, Side::A, &rcfg);
        let corner = clean.corner_position(Side::A);
        let local = clean.frame.to_local(&corner);
        let mut busy = clean.clone();
        busy.distractors.push(Distractor {
            shape: DistractorShape::Disk,
            color: Rgb([250, 250, 247]),
            center: clean.frame.to_world(&Vec3::new(local.x - 0.09, local.y, clean.frame.height + 0.01)),
            extent: 0.04,
            height: 0.01,
        });
        let Ok(dp) = project(&busy.distractors[0].center, &cam) else {
            continue;
        };
        let light = LightingParams::identity();
        let a = render(&clean, &cam, &light, 0.0, &mut rng);
        let b = render(&busy, &cam, &light, 0.0, &mut rng);
        let (Ok(ha), Ok(hb)) = (heuristic_grasp(&a, Side::A, &pcfg), heuristic_grasp(&b, Side::A, &pcfg)) else {
            continue;
        };
        // the object must sit left of everything white the heuristic saw
        if dp.u + 15.0 >= ha.u {
            continue;
        }
        assert!(oracle_grasp(&clean, &cam).is_ok());
        assert_ne!(ha, hb, "seed {seed}: a white object left of the corner must move the heuristic");
        heuristic_moves += ha.distance(&hb);
        learned_moves += head.predict_pixel(&featurize(&a)).distance(&head.predict_pixel(&featurize(&b)));
        fixtures += 1;
    }
    let (h, l) = (heuristic_moves / 50.0, learned_moves / 50.0);
    assert!(l < h, "learned head moved {l:.1} px on average, heuristic {h:.1} px");
}
