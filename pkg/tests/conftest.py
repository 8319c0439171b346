import numpy as np
import pytest

import waveseg.backend as backend_pkg


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["native", "pure"])
def kernel_backend(request, monkeypatch):
    """Run the test body against one concrete kernel backend."""
    name = request.param
    try:
        module = backend_pkg.get(name)
    except KeyError:
        pytest.skip(f"backend {name} not built")
    monkeypatch.setattr(backend_pkg, "dwt_axis", module.dwt_axis)
    monkeypatch.setattr(backend_pkg, "idwt_axis", module.idwt_axis)
    monkeypatch.setattr(backend_pkg, "nn_distances", module.nn_distances)
    return name
