import math

import numpy as np
import pytest

vlasov = pytest.importorskip("vlasov")


def test_presets_and_derive():
    names = vlasov.presets()
    assert "bdlp" in names and len(names) == 13
    assert vlasov.derive("surgailis") == "-m*rho + sigma"
    text = "const m = 2;\nconst sigma = 1 scale inveps;\ndeath = m;\nbirth = sigma;\n"
    assert vlasov.derive(text) == "-m*rho + sigma"


def test_parse_error_is_value_error():
    with pytest.raises(ValueError):
        vlasov.derive("death = m +;")


def test_solve_matches_closed_form():
    x = np.arange(256) * 10.0 / 256
    rho0 = 1.0 + 0.5 * np.cos(2 * np.pi * x / 10.0)
    rho = vlasov.solve("surgailis", rho0, L=10.0, t_end=1.0)
    assert rho.shape == (256,)
    expect = 2.0 + (rho0 - 2.0) * math.exp(-1.0)
    assert np.max(np.abs(rho - expect)) < 1e-8
    ref = vlasov.reference("surgailis", "surgailis", rho0, L=10.0, t=1.0)
    assert np.max(np.abs(rho - ref)) < 1e-8


def test_simulate_is_reproducible():
    a = vlasov.simulate("bdlp", eps=0.5, times=[0.5, 1.0], replicas=3, seed=4)
    b = vlasov.simulate("bdlp", eps=0.5, times=[0.5, 1.0], replicas=3, seed=4, threads=2)
    assert len(a) == 3
    for ra, rb in zip(a, b):
        assert len(ra["snapshots"]) == 2
        for sa, sb in zip(ra["snapshots"], rb["snapshots"]):
            assert sa.shape[1] == 1
            np.testing.assert_array_equal(sa, sb)


def test_g2_on_poisson_is_one():
    rng = np.random.default_rng(1)
    snaps = [rng.uniform(0, 10, size=(rng.poisson(50), 1)) for _ in range(200)]
    centers, values, se = vlasov.g2(snaps, eps=0.2, L=10.0, bins=5)
    assert len(centers) == 5
    for v, s in zip(values, se):
        assert abs(v - 1.0) < 4 * s + 1e-3


def test_cli_entry_point():
    code, out, err = vlasov.main(["derive", "--catalog"])
    assert code == 0
    assert "all match" in out
    code, _, _ = vlasov.main(["simulate"])
    assert code == 2


def test_selftest_passes():
    res = vlasov.selftest()
    assert set(res) == {"transforms", "minlos", "limits", "catalog"}
    assert all(r[0] for r in res.values())
