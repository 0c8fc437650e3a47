import json
import math

import numpy as np
import pytest

from feverscreen import (AppearanceVector, BBox, CameraRig, DetectionNoise,
                         DriftProfile, PersonSpec, Scenario, SimConfig,
                         emit_detections, generate_scenario, ground_truth_rows,
                         render_frame_pair)
from feverscreen.simulate import (active_people, head_center_projections,
                                  person_boxes)

from conftest import make_transit


def stationary(z, x=0.0, accessories=(), core=37.0, seed=1, noise=None):
    """One person standing at depth z after an empty warmup."""
    rng = np.random.default_rng(seed)
    person = PersonSpec(id="p0", core_temp=core,
                        trajectory=((0.0, x, z), (10.0, x, z)),
                        accessories=frozenset(accessories),
                        appearance_identity=AppearanceVector.random(rng))
    return Scenario(people=(person,), duration=10.0, rng_seed=seed,
                    detection_noise=noise or DetectionNoise())


class TestGenerateScenario:
    def test_febrile_count_exact(self):
        scen = generate_scenario(SimConfig(n_people=100, febrile_count=5), seed=7)
        febrile = [p for p in scen.people if p.core_temp >= 38.5]
        assert len(febrile) == 5
        assert len(scen.people) == 100

    def test_empty_scenario_valid(self):
        scen = generate_scenario(SimConfig(n_people=0), seed=1)
        assert scen.people == ()
        assert scen.duration > 0

    def test_determinism(self):
        cfg = SimConfig(n_people=12, febrile_count=3)
        a = generate_scenario(cfg, seed=21)
        b = generate_scenario(cfg, seed=21)
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)

    def test_different_seeds_differ(self):
        cfg = SimConfig(n_people=5)
        a = generate_scenario(cfg, seed=1)
        b = generate_scenario(cfg, seed=2)
        assert a.to_dict() != b.to_dict()

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            SimConfig(n_people=3, febrile_count=4)
        with pytest.raises(ValueError):
            SimConfig(z_start=1.0, z_end=2.0)


class TestRenderFramePair:
    def test_zero_distance_reads_core_temp(self):
        scen = stationary(2.0)
        assert scen.skin_temp(37.0, 0.0, 0.0) == pytest.approx(37.0)

    def test_attenuation_closed_form(self):
        scen = stationary(2.0)
        # 22 + 15*exp(-0.1)
        assert scen.skin_temp(37.0, 2.0, 0.0) == pytest.approx(35.5725613, abs=1e-6)

    def test_attenuation_monotone_in_distance(self):
        scen = stationary(2.0)
        temps = [scen.skin_temp(39.0, z, 0.0) for z in np.linspace(0.5, 6.0, 40)]
        assert all(a > b for a, b in zip(temps, temps[1:]))

    def test_out_of_range_time(self):
        scen = stationary(2.0)
        with pytest.raises(ValueError):
            render_frame_pair(scen, -0.5)
        with pytest.raises(ValueError):
            render_frame_pair(scen, scen.duration + 1.0)

    def test_frame_shapes_and_types(self):
        scen = stationary(2.0)
        pair = render_frame_pair(scen, 1.0)
        assert pair.visual.shape == (960, 1280) and pair.visual.dtype == np.uint8
        assert pair.thermal.shape == (252, 336) and pair.thermal.dtype == np.float32

    def test_render_determinism(self):
        scen = stationary(2.0)
        a = render_frame_pair(scen, 1.25)
        b = render_frame_pair(scen, 1.25)
        assert np.array_equal(a.visual, b.visual)
        assert np.array_equal(a.thermal, b.thermal)

    def test_skin_pixels_match_formula(self):
        scen = stationary(2.0, seed=2)
        scen = Scenario(people=scen.people, duration=scen.duration, rng_seed=2,
                        thermal_noise_sigma=0.0, visual_noise_sigma=0.0)
        pair = render_frame_pair(scen, 1.0)
        _, (tx, ty) = head_center_projections(scen.rig, 0.0, 0.0, 2.0)
        assert pair.thermal[int(ty), int(tx)] == pytest.approx(
            scen.skin_temp(37.0, 2.0, 1.0), abs=1e-4)

    def test_black_body_painted_with_drift(self):
        drift = DriftProfile(schedule=((0.0, 0.0), (5.0, 2.0)))
        person = stationary(2.0).people
        scen = Scenario(people=person, duration=10.0, drift=drift,
                        thermal_noise_sigma=0.0, visual_noise_sigma=0.0)
        roi = scen.black_body.roi
        pre = render_frame_pair(scen, 1.0)
        post = render_frame_pair(scen, 6.0)
        window = (slice(int(roi.y), int(roi.y2)), slice(int(roi.x), int(roi.x2)))
        assert pre.thermal[window].mean() == pytest.approx(35.0, abs=1e-4)
        assert post.thermal[window].mean() == pytest.approx(37.0, abs=1e-4)


class TestParallax:
    def test_matches_pinhole_oracle(self):
        rig = CameraRig()
        for z in (0.9, 1.5, 2.0, 3.0, 3.7):
            (vx, _), (tx, _) = head_center_projections(rig, 0.3, 0.0, z)
            offset = vx - tx * rig.scale_x
            assert offset == pytest.approx(rig.thermal_focal * rig.baseline / z
                                           * rig.scale_x, abs=0.5)
            assert offset == pytest.approx(rig.parallax_visual_px(z), abs=1e-9)

    def test_parallax_grows_as_distance_shrinks(self):
        rig = CameraRig()
        assert rig.parallax_visual_px(1.0) > rig.parallax_visual_px(3.6)


class TestEmitDetections:
    def test_zero_noise_gives_four_kinds(self):
        scen = stationary(2.0)
        dets = emit_detections(scen, 1.0, DetectionNoise())
        assert sorted(d.kind for d in dets) == ["body", "eye", "face", "head"]
        assert all(d.truth_id == "p0" for d in dets)

    def test_glasses_suppress_eye(self):
        scen = stationary(2.0, accessories=("glasses",))
        kinds = {d.kind for d in emit_detections(scen, 1.0, DetectionNoise())}
        assert "eye" not in kinds
        assert {"body", "head", "face"} <= kinds

    def test_mask_plus_glasses_suppress_face(self):
        scen = stationary(2.0, accessories=("glasses", "mask"))
        kinds = {d.kind for d in emit_detections(scen, 1.0, DetectionNoise())}
        assert kinds == {"body", "head"}

    def test_full_occlusion_suppresses_everything(self):
        rng = np.random.default_rng(3)
        front = PersonSpec(id="front", core_temp=36.8,
                           trajectory=((0.0, 0.0, 1.5), (10.0, 0.0, 1.5)),
                           appearance_identity=AppearanceVector.random(rng))
        behind = PersonSpec(id="behind", core_temp=36.8,
                            trajectory=((0.0, 0.0, 3.0), (10.0, 0.0, 3.0)),
                            appearance_identity=AppearanceVector.random(rng))
        scen = Scenario(people=(front, behind), duration=10.0)
        dets = emit_detections(scen, 1.0, DetectionNoise())
        assert {d.truth_id for d in dets} == {"front"}

    def test_eye_nested_in_face(self):
        scen = stationary(2.0, noise=DetectionNoise(bbox_jitter_px=3.0))
        for seq in range(0, 60, 7):
            dets = emit_detections(scen, scen.frame_time(seq))
            by_kind = {d.kind: d for d in dets}
            if "eye" in by_kind:
                assert "face" in by_kind
                face, eye = by_kind["face"].bbox, by_kind["eye"].bbox
                assert face.contains_point(eye.cx, eye.cy)

    def test_detection_determinism(self):
        scen = stationary(2.0, noise=DetectionNoise(miss_prob=0.2, bbox_jitter_px=2.0,
                                                    appearance_sigma=0.1))
        assert emit_detections(scen, 1.5) == emit_detections(scen, 1.5)


class TestGroundTruth:
    def test_rows_for_visible_people(self):
        scen = stationary(2.0)
        rows = ground_truth_rows(scen, 1.0)
        assert len(rows) == 1
        row = rows[0]
        assert row.person_id == "p0"
        assert row.distance_m == pytest.approx(2.0)
        assert row.visible

    def test_occluded_person_flagged(self):
        rng = np.random.default_rng(3)
        people = (
            PersonSpec(id="front", core_temp=36.8,
                       trajectory=((0.0, 0.0, 1.5), (10.0, 0.0, 1.5)),
                       appearance_identity=AppearanceVector.random(rng)),
            PersonSpec(id="behind", core_temp=36.8,
                       trajectory=((0.0, 0.0, 3.0), (10.0, 0.0, 3.0)),
                       appearance_identity=AppearanceVector.random(rng)),
        )
        scen = Scenario(people=people, duration=10.0)
        rows = {r.person_id: r for r in ground_truth_rows(scen, 1.0)}
        assert rows["front"].visible
        assert not rows["behind"].visible


class TestDriftProfile:
    def test_step_schedule(self):
        d = DriftProfile(schedule=((0.0, 0.0), (10.0, 5.0), (20.0, -1.0)))
        assert d.offset_at(0.0) == 0.0
        assert d.offset_at(9.99) == 0.0
        assert d.offset_at(10.0) == 5.0
        assert d.offset_at(25.0) == -1.0

    def test_empty_schedule_is_zero(self):
        assert DriftProfile().offset_at(100.0) == 0.0

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            DriftProfile(schedule=((5.0, 1.0), (1.0, 2.0)))


class TestPersonSpec:
    def test_position_interpolation(self):
        p = PersonSpec(id="a", core_temp=37.0,
                       trajectory=((0.0, 0.0, 4.0), (4.0, 1.0, 2.0)))
        assert p.position(2.0) == pytest.approx((0.5, 0.0, 3.0))
        assert p.position(5.0) is None
        assert p.position(-1.0) is None

    def test_core_temp_range_enforced(self):
        with pytest.raises(ValueError):
            PersonSpec(id="a", core_temp=50.0, trajectory=((0.0, 0.0, 2.0),))

    def test_unknown_accessory_rejected(self):
        with pytest.raises(ValueError):
            PersonSpec(id="a", core_temp=37.0, trajectory=((0.0, 0.0, 2.0),),
                       accessories=frozenset({"cape"}))


class TestActivePeople:
    def test_sorted_nearest_first(self):
        scen = make_transit()
        rng = np.random.default_rng(0)
        extra = PersonSpec(id="p1", core_temp=36.5,
                           trajectory=((0.0, 0.5, 1.2), (12.0, 0.5, 1.2)),
                           appearance_identity=AppearanceVector.random(rng))
        scen2 = Scenario(people=scen.people + (extra,), duration=scen.duration,
                         rng_seed=scen.rng_seed)
        order = [p.id for p, _ in active_people(scen2, 4.0)]
        assert order == ["p1", "p0"]

    def test_person_boxes_nested(self):
        rig = CameraRig()
        boxes = person_boxes(rig, 0.0, 0.0, 2.0)
        assert boxes["face"].contains_point(boxes["eye"].cx, boxes["eye"].cy)
        assert boxes["body"].contains_point(boxes["head"].cx, boxes["head"].cy)
        assert boxes["head"].h > boxes["face"].h > boxes["eye"].h
