import numpy as np
import pytest

from lossqec.builder import build_memory_circuit, memory_spec


@pytest.fixture(scope="session")
def plan_cache():
    cache = {}

    def get(d=3, rounds=None, basis="Z", protocol="teleportation", p_d=0.0,
            p_l=0.0, loss_model="simple"):
        key = (d, rounds, basis, protocol, p_d, p_l, loss_model)
        if key not in cache:
            cache[key] = build_memory_circuit(
                memory_spec(d, rounds=rounds, basis=basis, protocol=protocol,
                            p_d=p_d, p_l=p_l, loss_model=loss_model)
            )
        return cache[key]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
