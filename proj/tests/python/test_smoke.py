import math

import numpy as np
import pytest

import stoqmps as sq


def test_models():
    h = sq.sdim(1.0)
    assert [t.labels for t in h.terms] == ["XX", "Z", "ZZ", "XIX"]
    assert h.max_range == 3
    assert h.key == "sdim_V=1"
    assert len(sq.measurement_groups(h)) == 2
    assert len(sq.measurement_groups(sq.heisenberg())) == 3
    m = sq.cell_matrix(sq.heisenberg(), 2)
    assert np.allclose(m, m.conj().T)


def test_entropy_and_references():
    assert sq.entropy_density(sq.SpectrumParams.product(0.5)) == pytest.approx(math.log(2))
    assert sq.entropy_density(sq.SpectrumParams.correlated(0.0, 1.0)) == pytest.approx(0.36533, abs=1e-5)
    f = sq.tfim_free_energy(1.0)
    ed = sq.ed_thermodynamics(sq.sdim(0.0), 10, 1.0)
    assert abs(ed["free_energy"] - f) < 0.01 * abs(f)
    assert sq.reference_free_energy(sq.sdim(0.0), 1.0)[1] == "free-fermion"


def test_network_gradient_matches_finite_differences():
    a = sq.random_ansatz(1, 2, seed=3)
    s = sq.SpectrumParams.product(0.3)
    h = sq.sdim(1.0)
    f, g, gs = sq.evaluate(a, s, h, 0.8)
    x = a.parameters
    assert x.shape == (a.parameter_count,)
    eps = 1e-6
    for k in (0, 7, len(x) - 1):
        xp, xm = x.copy(), x.copy()
        xp[k] += eps
        xm[k] -= eps
        a.parameters = xp
        fp = sq.free_energy(a, s, h, 0.8)["free_energy"]
        a.parameters = xm
        fm = sq.free_energy(a, s, h, 0.8)["free_energy"]
        assert (fp - fm) / (2 * eps) == pytest.approx(g[k], abs=1e-6)
    u = a.site_unitary()
    assert np.allclose(u.conj().T @ u, np.eye(4))


def test_optimize_and_sample():
    h = sq.sdim(0.0)
    levels = sq.batch_sequential(h, 1.0, q=1, tau_max=2, n_batch=2, seed=5)
    assert [l["tau"] for l in levels] == [1, 2]
    assert levels[1]["best_f"] <= levels[0]["best_f"] + 1e-12
    assert levels[-1]["best_f"] >= sq.tfim_free_energy(1.0) - 1e-8
    best = levels[-1]
    r = sq.sample_free_energy(best["ansatz"], best["spectrum"], h, 1.0, shots=2000, seed=1)
    assert abs(r["energy"] - r["exact_energy"]) < 4 * r["stderr"]
    assert [t["observable"] for t in r["terms"]] == ["XX", "Z"]


def test_config_and_commands(tmp_path):
    with pytest.raises(sq.ConfigError, match=r"<config>:2:3: unknown key 'nbatch'"):
        sq.parse_config("optimizer:\n  nbatch: 3\n")
    c = sq.parse_config(
        "temperatures: [1.0]\nansatz: {q: 1, tau_max: 1}\noptimizer: {n_batch: 2}\n"
        "sampler: {shots: 100}\noracle: {ed_length: 8, temperatures: [1.0]}\n"
    )
    c.output = tmp_path
    with pytest.raises(sq.MissingArtifact):
        sq.cmd_sample(c)
    files, optimized, _ = sq.cmd_optimize(c)
    assert optimized == 1
    assert sq.cmd_optimize(c)[1] == 0
    files, _, _ = sq.cmd_oracle(c)
    text = files[0].read_text()
    assert text.startswith("# model: sdim")
    assert "T,f,energy,entropy" in text
    files, _, _ = sq.cmd_sample(c)
    assert len(files) == 3
