import filecmp
import os

import numpy as np
import pytest

from feverscreen import (AppearanceVector, DatasetError, PersonSpec, Scenario,
                         SimConfig, generate_scenario, read_dataset,
                         write_dataset)
from feverscreen.dataset import (read_pgm, read_thermal, scenario_json,
                                 write_pgm, write_thermal)


@pytest.fixture(scope="module")
def tiny_scenario():
    return generate_scenario(
        SimConfig(n_people=2, febrile_count=1, duration=1.25), seed=3)


class TestFrameFiles:
    def test_pgm_round_trip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 255, (24, 32), dtype=np.uint8)
        path = str(tmp_path / "x.pgm")
        write_pgm(path, img)
        assert np.array_equal(read_pgm(path), img)
        with open(path, "rb") as f:
            assert f.read(15) == b"P5\n32 24\n255\n" + img.tobytes()[:2]

    def test_thermal_round_trip(self, tmp_path):
        grid = np.random.default_rng(1).normal(30, 3, (12, 16)).astype(np.float32)
        path = str(tmp_path / "x.bin")
        write_thermal(path, grid)
        assert np.array_equal(read_thermal(path), grid)
        with open(path, "rb") as f:
            assert f.readline() == b"16 12\n"

    def test_thermal_header_is_ascii_w_h(self, tmp_path):
        grid = np.zeros((3, 5), dtype=np.float32)
        path = str(tmp_path / "t.bin")
        write_thermal(path, grid)
        raw = open(path, "rb").read()
        assert raw[:5] == b"5 3\n\x00"
        assert len(raw) == 4 + 3 * 5 * 4

    def test_corrupt_thermal_rejected(self, tmp_path):
        path = str(tmp_path / "bad.bin")
        with open(path, "wb") as f:
            f.write(b"4 4\n\x00\x00")
        with pytest.raises(DatasetError):
            read_thermal(path)

    def test_non_pgm_rejected(self, tmp_path):
        path = str(tmp_path / "bad.pgm")
        with open(path, "wb") as f:
            f.write(b"JUNK")
        with pytest.raises(DatasetError):
            read_pgm(path)


class TestDatasetRoundTrip:
    def test_frames_bit_exact(self, tmp_path, tiny_scenario):
        out = str(tmp_path / "ds")
        ds = write_dataset(tiny_scenario, out)
        back = read_dataset(out)
        assert len(back.frames) == tiny_scenario.n_frames
        for a, b in zip(ds.frames, back.frames):
            assert np.array_equal(a.visual, b.visual)
            assert np.array_equal(a.thermal, b.thermal)

    def test_detections_and_truth_round_trip(self, tmp_path, tiny_scenario):
        out = str(tmp_path / "ds")
        ds = write_dataset(tiny_scenario, out)
        back = read_dataset(out)
        for seq in range(tiny_scenario.n_frames):
            assert ds.detections_for(seq) == back.detections_for(seq)
        assert ds.ground_truth == back.ground_truth
        assert back.scenario.to_dict() == tiny_scenario.to_dict()

    def test_write_twice_byte_identical(self, tmp_path, tiny_scenario):
        d1, d2 = str(tmp_path / "a"), str(tmp_path / "b")
        write_dataset(tiny_scenario, d1)
        write_dataset(tiny_scenario, d2)
        names = ["scenario.json", "detections.jsonl", "groundtruth.csv"]
        names += [f"frames/visual_{i:06d}.pgm" for i in range(tiny_scenario.n_frames)]
        names += [f"frames/thermal_{i:06d}.bin" for i in range(tiny_scenario.n_frames)]
        match, mismatch, errors = filecmp.cmpfiles(d1, d2, names, shallow=False)
        assert not mismatch and not errors

    def test_missing_detections_file_named(self, tmp_path, tiny_scenario):
        out = str(tmp_path / "ds")
        write_dataset(tiny_scenario, out)
        os.remove(os.path.join(out, "detections.jsonl"))
        with pytest.raises(DatasetError, match="detections.jsonl"):
            read_dataset(out)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError, match="no-such-dir"):
            read_dataset(str(tmp_path / "no-such-dir"))

    def test_scenario_json_stable(self, tiny_scenario):
        assert scenario_json(tiny_scenario) == scenario_json(tiny_scenario)


class TestGroundTruthConsistency:
    def test_row_count_frames_times_people(self, tmp_path):
        # both people on stage and visible for the whole clip
        rng = np.random.default_rng(5)
        people = (
            PersonSpec(id="a", core_temp=36.9,
                       trajectory=((0.0, -0.5, 2.0), (2.0, -0.5, 2.0)),
                       appearance_identity=AppearanceVector.random(rng)),
            PersonSpec(id="b", core_temp=37.2,
                       trajectory=((0.0, 0.5, 2.5), (2.0, 0.5, 2.5)),
                       appearance_identity=AppearanceVector.random(rng)),
        )
        scen = Scenario(people=people, duration=2.0, rng_seed=5)
        ds = write_dataset(scen, str(tmp_path / "ds"))
        assert len(ds.ground_truth) == scen.n_frames * 2
        assert all(r.visible for r in ds.ground_truth)
