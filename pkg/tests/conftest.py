import numpy as np
import pytest

from feverscreen import (AppearanceVector, PersonSpec, PipelineConfig, Scenario,
                         SimConfig, generate_scenario, run_pipeline)


def make_transit(off_axis: float = 0.0, seed: int = 5, core_temp: float = 37.0,
                 z_start: float = 3.75, z_end: float = 0.86,
                 enter: float = 2.0, duration_walk: float = 7.0,
                 accessories=()) -> Scenario:
    """One person walking straight toward the rig; 2 s empty lead-in."""
    rng = np.random.default_rng(seed)
    person = PersonSpec(
        id="p0", core_temp=core_temp,
        trajectory=((enter, off_axis, z_start),
                    (enter + duration_walk, off_axis, z_end)),
        accessories=frozenset(accessories),
        appearance_identity=AppearanceVector.random(rng),
    )
    return Scenario(people=(person,), duration=enter + duration_walk + 0.5,
                    rng_seed=seed)


@pytest.fixture(scope="session")
def small_run():
    """A 6-person pipeline run shared by pipeline-level tests."""
    scenario = generate_scenario(SimConfig(n_people=6, febrile_count=1), seed=9)
    summary = run_pipeline(scenario, PipelineConfig())
    return scenario, summary
