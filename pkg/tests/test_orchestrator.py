"""End-to-end pipeline: message bus, state machine, failure attribution,
and the built-in ten-object course."""

from __future__ import annotations

import json
import math

import pytest

from clearbot.arm import PickOutcome
from clearbot.orchestrator import (
    DISPATCH_LATENCY,
    GEOMETRY_LATENCY,
    SEG_LATENCY,
    AttemptDiagnostics,
    DepthBiasInjection,
    FailureModule,
    InvalidConfig,
    MessageBus,
    PipelineState,
    ScenarioConfig,
    SequenceRegression,
    SimClock,
    Simulation,
    Topic,
    UnattributableFailure,
    attribute_failure,
    build_benchmark_config,
    config_digest,
    messages_to_ndjson,
    replay_grasp_targets,
    report_to_json,
    run_scenario,
    scenario_to_dict,
    validate_config,
)
from clearbot.scene import BrickDims, ObjectClass, ObjectSpec
from clearbot.segmentation import CutBand

BRICK = BrickDims(0.20, 0.095, 0.057)


def brick(oid: str, x: float, y: float, yaw: float = 0.0) -> ObjectSpec:
    return ObjectSpec(oid, ObjectClass.BRICK, BRICK, x, y, yaw)


def tiny_scenario(objects, **overrides) -> ScenarioConfig:
    kwargs = dict(
        name="tiny",
        objects=tuple(objects),
        ugv_end=(2.5, 0.0),
        speed=0.5,
    )
    kwargs.update(overrides)
    return ScenarioConfig(**kwargs)


# --- clock and bus ---------------------------------------------------------------


def test_clock_only_runs_forward():
    clock = SimClock(3.0)
    clock.advance(0.0)
    clock.advance(1.5)
    assert clock.now() == 4.5
    with pytest.raises(ValueError):
        clock.advance(-1e-9)


def test_bus_orders_messages_and_replays_history():
    bus = MessageBus()
    e0 = bus.publish(Topic.CONTROL_STOP, 1.0, "a")
    e1 = bus.publish(Topic.CONTROL_STOP, 1.0, "b")  # equal times are fine
    e2 = bus.publish(Topic.CONTROL_STOP, 2.0, "c")
    assert [e.seq for e in (e0, e1, e2)] == [0, 1, 2]
    seen = []
    bus.subscribe(Topic.CONTROL_STOP, lambda env: seen.append(env.payload))
    assert seen == ["a", "b", "c"]  # history replayed on subscribe
    bus.publish(Topic.CONTROL_STOP, 3.0, "d")
    assert seen == ["a", "b", "c", "d"]
    assert [e.payload for e in bus.history(Topic.CONTROL_STOP)] == ["a", "b", "c", "d"]


def test_bus_rejects_time_regression_per_topic():
    bus = MessageBus()
    bus.publish(Topic.CAMERA_FRAMES, 5.0, "x")
    with pytest.raises(SequenceRegression):
        bus.publish(Topic.CAMERA_FRAMES, 4.9, "y")
    # an earlier time on a different topic is allowed
    bus.publish(Topic.ARM_STATUS, 0.1, "z")


def test_bus_global_log_preserves_publish_order():
    bus = MessageBus()
    bus.publish(Topic.CAMERA_FRAMES, 0.0, 0)
    bus.publish(Topic.SEGMENTATION_MASKS, 0.5, 1)
    bus.publish(Topic.CAMERA_FRAMES, 1.0, 2)
    assert [e.payload for e in bus.log()] == [0, 1, 2]


# --- config validation ------------------------------------------------------------


def test_validate_config_accepts_empty_scene():
    assert validate_config(tiny_scenario([])) == []


@pytest.mark.parametrize(
    "overrides,path",
    [
        (dict(speed=0.0), "ugv.speed"),
        (dict(stop_latency=-0.1), "ugv.stop_latency"),
        (dict(frame_period=0.0), "frame_period"),
        (dict(ugv_end=(0.0, 0.0)), "ugv.end"),
        (dict(injections=(DepthBiasInjection("ghost", 0.02),)), "injections.depth_bias[0].id"),
        (dict(seg_ops=(CutBand("ghost", 4),)), "corruptions[0].target_id"),
    ],
)
def test_validate_config_reports_field_paths(overrides, path):
    errors = validate_config(tiny_scenario([brick("b", 1.0, 0.0)], **overrides))
    assert path in [p for p, _ in errors]


def test_simulation_rejects_invalid_config():
    with pytest.raises(InvalidConfig) as exc_info:
        Simulation(tiny_scenario([], speed=-1.0))
    assert any(p == "ugv.speed" for p, _ in exc_info.value.errors)


# --- failure attribution ----------------------------------------------------------


def diag(outcome=PickOutcome.MISSED_GRASP, iou=1.0, depth_err=0.0,
         center_err=0.0, yaw_err=0.0) -> AttemptDiagnostics:
    return AttemptDiagnostics(
        outcome=outcome,
        iou=iou,
        median_depth_error=depth_err,
        center_error=center_err,
        yaw_error=yaw_err,
    )


def test_attribution_blames_camera_for_depth_error_under_good_mask():
    blamed = attribute_failure(diag(iou=0.95, depth_err=0.02))
    assert blamed == frozenset({FailureModule.CAMERA})


def test_attribution_blames_segmentation_below_iou_threshold():
    blamed = attribute_failure(diag(iou=0.6, center_err=0.004))
    assert blamed == frozenset({FailureModule.CONTEXT_AWARENESS})


def test_attribution_adds_geometry_when_bad_mask_moves_center():
    blamed = attribute_failure(diag(iou=0.6, center_err=0.05))
    assert blamed == frozenset(
        {FailureModule.CONTEXT_AWARENESS, FailureModule.GEOMETRY_DESCRIPTOR}
    )


def test_attribution_blames_arm_for_boundary_hit_with_clean_inputs():
    blamed = attribute_failure(
        diag(outcome=PickOutcome.BOUNDARY_COLLISION, iou=0.99, center_err=0.002)
    )
    assert blamed == frozenset({FailureModule.ROBOTIC_ARM})


def test_attribution_iou_threshold_is_inclusive():
    # iou exactly at the threshold counts as a good mask
    blamed = attribute_failure(diag(iou=0.8, depth_err=0.02))
    assert blamed == frozenset({FailureModule.CAMERA})


def test_attribution_refuses_when_everything_is_in_tolerance():
    with pytest.raises(UnattributableFailure):
        attribute_failure(diag(iou=0.95, depth_err=0.001, center_err=0.001))


def test_attribution_success_blames_nobody():
    assert attribute_failure(diag(outcome=PickOutcome.SUCCESS)) == frozenset()


# --- small scenario runs -----------------------------------------------------------


def test_empty_scene_drives_to_done():
    report, sim = run_scenario(tiny_scenario([]))
    assert sim.state is PipelineState.DONE
    assert report.attempted == 0 and report.succeeded == 0
    assert sim.bus.history(Topic.CONTROL_STOP) == ()
    assert sim.bus.history(Topic.ARM_COMMANDS) == ()
    assert len(sim.bus.history(Topic.CAMERA_FRAMES)) > 0


def test_single_brick_flow_stops_once_and_picks():
    report, sim = run_scenario(tiny_scenario([brick("b", 1.2, 0.05, 0.3)]))
    assert report.attempted == 1 and report.succeeded == 1
    (rec,) = report.records
    assert rec.object_id == "b" and rec.outcome == "Success"
    assert rec.cause == "" and rec.attribution == ()
    assert rec.elapsed_s == 20.0
    stops = sim.bus.history(Topic.CONTROL_STOP)
    commands = sim.bus.history(Topic.ARM_COMMANDS)
    assert len(stops) == 1 and len(commands) == 1
    assert commands[0].payload.matched_id == "b"
    # the stop precedes the arm command both in publish order and in time
    log = sim.bus.log()
    assert log.index(stops[0]) < log.index(commands[0])
    assert stops[0].t < commands[0].t
    assert sim.world.scene.objects == ()
    assert sim.world.removed == (("b", pytest.approx(commands[0].t + 17.0)),)


def test_vehicle_holds_still_through_the_pick():
    sim = Simulation(tiny_scenario([brick("b", 1.2, 0.0)]))
    while sim.state is not PipelineState.PICKING:
        sim.step()
    parked = sim.distance
    sim.step()  # executes the pick
    assert sim.state is PipelineState.RESUMING
    assert sim.distance == parked
    # standstill frames record a stationary vehicle at the parked pose
    standstill = [
        e.payload for e in sim.bus.history(Topic.CAMERA_FRAMES) if e.payload.standstill
    ]
    assert len(standstill) == 1
    assert standstill[0].ugv.x == pytest.approx(parked)


def test_nearer_of_two_visible_objects_goes_first():
    # both bricks sit inside the reach annulus at the same standstill;
    # the closer one to the arm base must be attempted first
    cfg = tiny_scenario([brick("far", 2.05, -0.28), brick("near", 2.0, 0.1)],
                        ugv_end=(3.5, 0.0))
    report, _ = run_scenario(cfg)
    assert [r.object_id for r in report.records] == ["near", "far"]
    assert report.succeeded == 2


def test_state_transitions_stay_legal():
    legal = {
        (PipelineState.DRIVING, PipelineState.DRIVING),
        (PipelineState.DRIVING, PipelineState.STOPPING),
        (PipelineState.DRIVING, PipelineState.DONE),
        (PipelineState.STOPPING, PipelineState.PICKING),
        (PipelineState.PICKING, PipelineState.RESUMING),
        (PipelineState.RESUMING, PipelineState.DRIVING),
    }
    sim = Simulation(tiny_scenario([brick("b", 1.2, 0.0)]))
    prev = sim.state
    for _ in range(10000):
        state = sim.step()
        assert (prev, state) in legal
        prev = state
        if state is PipelineState.DONE:
            break
    assert sim.state is PipelineState.DONE


# --- the ten-object course ---------------------------------------------------------


FROZEN_TABLE = {
    "b1": ("Success", ()),
    "p1": ("Success", ()),
    "b2": ("MissedGrasp", ("Camera",)),
    "p2": ("Success", ()),
    "b3": ("MissedGrasp", ("ContextAwareness", "GeometryDescriptor")),
    "p3": ("BoundaryCollision", ("RoboticArm",)),
    "b4": ("Success", ()),
    "p4": ("Success", ()),
    "b5": ("Success", ()),
    "p5": ("Success", ()),
}


def test_course_reproduces_the_frozen_outcome_table(benchmark_run):
    report, _, _ = benchmark_run
    assert report.attempted == 10 and report.succeeded == 7
    got = {r.object_id: (r.outcome, r.attribution) for r in report.records}
    assert got == FROZEN_TABLE


def test_course_failures_carry_cause_text(benchmark_run):
    report, _, _ = benchmark_run
    for rec in report.records:
        if rec.outcome == "Success":
            assert rec.cause == ""
        else:
            assert rec.cause != ""


def test_course_elapsed_times_come_from_the_phase_table(benchmark_run):
    report, _, _ = benchmark_run
    by_outcome = {
        "Success": 20.0,
        "MissedGrasp": 12.0,
        "BoundaryCollision": 4.0,
    }
    for rec in report.records:
        assert rec.elapsed_s == by_outcome[rec.outcome]


def test_adaptive_order_rescues_the_boundary_pipe(benchmark_run, adaptive_run):
    default_report, _, _ = benchmark_run
    adaptive_report, _ = adaptive_run
    assert adaptive_report.succeeded == 8
    got = {r.object_id: (r.outcome, r.attribution) for r in adaptive_report.records}
    assert got["p3"] == ("Success", ())
    default_wins = {r.object_id for r in default_report.records if r.outcome == "Success"}
    adaptive_wins = {r.object_id for r in adaptive_report.records if r.outcome == "Success"}
    assert default_wins <= adaptive_wins


def test_objects_are_conserved_at_every_step():
    sim = Simulation(build_benchmark_config())
    total = len(sim.world.scene.objects)
    for _ in range(100000):
        state = sim.step()
        assert len(sim.world.scene.objects) + len(sim.world.removed) == total
        if state is PipelineState.DONE:
            break
    assert len(sim.world.removed) == 7


def test_command_latency_is_fixed_and_subsecond(benchmark_run):
    _, sim, _ = benchmark_run
    frames = {e.payload.frame_index: e.payload for e in sim.bus.history(Topic.CAMERA_FRAMES)}
    commands = sim.bus.history(Topic.ARM_COMMANDS)
    assert len(commands) == 10
    budget = SEG_LATENCY + GEOMETRY_LATENCY + DISPATCH_LATENCY
    for env in commands:
        fd = frames[env.payload.frame_index]
        assert fd.standstill
        assert env.t - fd.t_capture == pytest.approx(budget, abs=1e-12)
        assert env.t - fd.t_capture < 1.0


def test_depth_bias_touches_only_its_own_standstill_frame(benchmark_run):
    _, sim, _ = benchmark_run
    frames = [e.payload for e in sim.bus.history(Topic.CAMERA_FRAMES)]
    biased = [fd for fd in frames if fd.dense_depth is not None]
    assert len(biased) == 1
    assert biased[0].standstill
    # the biased capture is the one that feeds the b2 attempt
    commands = {e.payload.frame_index: e.payload for e in sim.bus.history(Topic.ARM_COMMANDS)}
    assert commands[biased[0].frame_index].matched_id == "b2"


def test_message_times_never_regress_per_topic(benchmark_run):
    _, sim, _ = benchmark_run
    for topic in Topic:
        times = [e.t for e in sim.bus.history(topic)]
        assert times == sorted(times)
        seqs = [e.seq for e in sim.bus.history(topic)]
        assert seqs == list(range(len(seqs)))


# --- determinism and replay ----------------------------------------------------------


def test_same_seed_gives_byte_identical_reports(benchmark_run, benchmark_rerun):
    report_a, sim_a, _ = benchmark_run
    report_b, sim_b = benchmark_rerun
    assert report_to_json(report_a) == report_to_json(report_b)
    assert messages_to_ndjson(sim_a.bus) == messages_to_ndjson(sim_b.bus)
    assert report_a.log_digest == report_b.log_digest


def test_grasp_targets_replay_exactly_from_the_log(benchmark_run):
    _, sim, _ = benchmark_run
    replayed = replay_grasp_targets(
        sim.bus.history(Topic.CAMERA_FRAMES),
        sim.bus.history(Topic.SEGMENTATION_MASKS),
        sim.cfg,
    )
    published = [e.payload for e in sim.bus.history(Topic.GRASP_TARGETS)]
    assert replayed == published
    assert len(published) > 0


def test_report_json_schema(benchmark_run):
    report, _, _ = benchmark_run
    doc = json.loads(report_to_json(report))
    assert set(doc) == {
        "seed", "config_digest", "attempted", "succeeded", "records", "wall_notes"
    }
    assert doc["seed"] == 7
    assert doc["attempted"] == 10 and doc["succeeded"] == 7
    assert "wall clock" in doc["wall_notes"]
    for rec in doc["records"]:
        assert set(rec) == {
            "id", "class", "outcome", "cause", "attribution",
            "elapsed_s", "center_error_m", "yaw_error_rad", "mask_iou",
        }


def test_ndjson_log_is_one_canonical_line_per_message(benchmark_run):
    _, sim, _ = benchmark_run
    text = messages_to_ndjson(sim.bus)
    assert text.endswith("\n")
    lines = text.splitlines()
    assert len(lines) == len(sim.bus.log())
    for line, env in zip(lines, sim.bus.log()):
        doc = json.loads(line)
        assert set(doc) == {"topic", "seq", "t", "payload"}
        assert doc["topic"] == env.topic.value
        assert doc["seq"] == env.seq
        # canonical form: no whitespace, sorted keys
        assert json.dumps(doc, sort_keys=True, separators=(",", ":")) == line
    # image payloads are digested, never inlined
    assert "zbuf" not in text


def test_scenario_dict_roundtrip_preserves_config_and_digest():
    from clearbot.cli import parse_scenario

    cfg = build_benchmark_config()
    doc = scenario_to_dict(cfg)
    assert parse_scenario(doc) == cfg
    assert config_digest(cfg) == config_digest(parse_scenario(doc))
    assert len(config_digest(cfg)) == 64 and int(config_digest(cfg), 16) >= 0


def test_config_digest_tracks_content_not_name():
    base = build_benchmark_config()
    reseeded = build_benchmark_config(seed=8)
    assert config_digest(base) != config_digest(reseeded)
    assert config_digest(base) == config_digest(build_benchmark_config())
