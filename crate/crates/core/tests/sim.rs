mod common;

use common::criteria::data_path;
use sctune::config::Config;
use sctune::controller::MpcParams;
use sctune::scenarios::MovementSet;
use sctune::sim::{run_movement, Scene};

/// The corpus movements are demanding: tracking the operator twist with the
/// same controller but no obstacles in sight runs some robot sphere into the
/// table or a wall, while the obstacle-aware controller keeps its clearance.
#[test]
fn obstacle_awareness_is_what_keeps_clearance() {
    let cfg = Config::default();
    let room = cfg.scene().unwrap();
    let blind = Scene::builtin("empty").unwrap();
    let clock = cfg.eval.clock.build();
    let set = MovementSet::load(&data_path("corpus_seed1.json")).unwrap();
    let r = room.geometry.sphere_radius;

    let mut violating = None;
    for mv in set.movements.iter().take(12) {
        let open = run_movement(mv, &MpcParams::baseline(), &cfg.eval, &blind, clock.as_ref()).unwrap();
        let worst = open
            .trajectory
            .samples
            .iter()
            .map(|s| room.sphere_distances(&s.state.joints).into_iter().fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min);
        if worst < r {
            violating = Some((mv, worst));
            break;
        }
    }
    let (mv, blind_min) = violating.expect("some movement should collide without obstacle awareness");
    let closed = run_movement(mv, &MpcParams::baseline(), &cfg.eval, &room, clock.as_ref()).unwrap();
    assert!(blind_min < r);
    assert!(closed.min_sd >= r, "movement {}: min sd {}", mv.id, closed.min_sd);
    assert!(closed.success);
}
