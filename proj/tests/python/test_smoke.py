"""Smoke tests for the python bindings."""

import math

import calopt


def test_sample_energies_deterministic():
    a = calopt.sample_energies(1.0, 20.0, 100, 7)
    b = calopt.sample_energies(1.0, 20.0, 100, 7)
    assert a == b
    assert len(a) == 100
    assert all(1.0 <= e <= 20.0 for e in a)


def test_regularized_lower_gamma():
    assert math.isclose(
        calopt.regularized_lower_gamma(1.0, 1.0), 1.0 - math.exp(-1.0), rel_tol=1e-9
    )
    assert calopt.regularized_lower_gamma(2.5, 0.0) == 0.0


def test_simulate_conserves_energy():
    design = calopt.DesignVector([1.0, 5.0])
    assert math.isclose(design.scintillator_sum, 5.0)
    energies = calopt.sample_energies(1.0, 20.0, 50, 3)
    batch = calopt.simulate(design, energies, 4)
    assert len(batch.deposits) == 50
    for e, deps in zip(batch.energies_gev, batch.deposits):
        assert len(deps) == 1
        assert deps[0] >= 0.0
        assert sum(deps) <= e + 1e-12


def test_knn_mi_on_correlated_data():
    import random

    rng = random.Random(5)
    rho = 0.9
    s = math.sqrt(1 - rho * rho)
    x, y = [], []
    for _ in range(1500):
        a = rng.gauss(0, 1)
        x.append([a])
        y.append([rho * a + s * rng.gauss(0, 1)])
    v = calopt.knn_mi(x, y, 3)
    truth = -0.5 * math.log(1 - rho * rho)
    assert abs(v - truth) < 0.2


def test_run_study_desk_scale(tmp_path):
    runs = calopt.run_study(
        {
            "study": "custom",
            "variant": "reco",
            "events": "30",
            "candidates": "5",
            "iterations": "2",
            "runs": "1",
            "seed": "11",
            "reco_epoch_scale": "0.05",
            "flow_epoch_scale": "0.05",
            "grad_samples": "30",
            "out": str(tmp_path / "study"),
        }
    )
    assert len(runs) == 1
    rows = runs[0]["rows"]
    assert len(rows) == 3  # initial + 2 iterations
    assert rows[0]["initial"]
    assert all(t >= 0.0 for r in rows for t in r["theta"])
    assert (tmp_path / "study" / "evolution.csv").exists()
