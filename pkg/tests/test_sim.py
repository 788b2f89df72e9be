import numpy as np
import pytest

from pbbound.extbound import OptConfig
from pbbound.selmodels import REContext, p0
from pbbound.sim import (SCENARIOS, Scenario, cells_to_csv,
                         generate_replication, get_scenario, run_scenario)

TINY = OptConfig(k1=20, k2=20, kprime_stride=4, restarts=1, max_iters=80)


def test_preset_table():
    assert set(SCENARIOS) == {"Expe_H_1", "Expe_H_2", "Expe_H_3", "Expe_H_4",
                              "Expe_P_1", "Expe_P_2", "Expe_P_3", "Expe_P_4"}
    h1 = SCENARIOS["Expe_H_1"]
    assert h1.family == "copas-heckman"
    assert (h1.mu, h1.tau) == (1.5, 2.5)
    assert h1.fixed_params == {"rho": 0.8, "g1": 0.2}
    p2 = SCENARIOS["Expe_P_2"]
    assert p2.family == "probit2"
    assert (p2.mu, p2.tau) == (1.0, 1.0)
    assert p2.fixed_params == {"beta": 2.0}
    assert SCENARIOS["Expe_H_3"].p_grid == (0.7,)
    for sc in SCENARIOS.values():
        assert sc.s_count == 25 and sc.replications == 200


def test_get_scenario_overrides():
    sc = get_scenario("Expe_P_1", replications=5, p_grid=(0.5,))
    assert sc.replications == 5 and sc.p_grid == (0.5,)
    # the preset itself is untouched
    assert SCENARIOS["Expe_P_1"].replications == 200
    with pytest.raises(KeyError):
        get_scenario("nope")


def test_generate_replication_deterministic_and_calibrated():
    sc = get_scenario("Expe_P_2")
    c1, p1, m1, r1 = generate_replication(sc, 0.5, rep_seed=3)
    c2, p2_, m2, r2 = generate_replication(sc, 0.5, rep_seed=3)
    np.testing.assert_array_equal(c1.y, c2.y)
    np.testing.assert_array_equal(p1.y, p2_.y)
    assert m1.params == m2.params and r1 == r2
    # the intercept calibration holds on the complete draw
    ctx = REContext(mu=sc.mu, tau=sc.tau)
    probs = np.asarray(p0(m1, c1.y, c1.s, ctx))
    assert float(probs.mean()) == pytest.approx(0.5, abs=1e-8)
    assert c1.n == sc.s_count and 2 <= p1.n <= sc.s_count
    # published studies are a subset of the complete ones
    assert set(zip(p1.y, p1.s)) <= set(zip(c1.y, c1.s))


def test_generate_replication_seed_separation():
    sc = get_scenario("Expe_P_2")
    a = generate_replication(sc, 0.5, rep_seed=3)[0]
    b = generate_replication(sc, 0.5, rep_seed=4)[0]
    assert not np.array_equal(a.y, b.y)
    c = generate_replication(sc, 0.7, rep_seed=3)[0]
    assert not np.array_equal(a.y, c.y)


def test_run_scenario_cells_and_csv():
    sc = get_scenario("Expe_P_2", replications=4, p_grid=(0.5,))
    cells = run_scenario(sc, TINY)
    assert len(cells) == 1
    cell = cells[0]
    assert cell.p == 0.5 and cell.replications == 4 and cell.failed == 0
    assert 0.0 <= cell.exceed_cj <= 100.0
    assert 0.0 <= cell.exceed_ext <= 100.0
    assert 1.0 <= cell.r_q1 <= cell.r_median <= cell.r_q3
    text = cells_to_csv(sc.name, cells)
    lines = text.strip().split("\n")
    assert lines[0].startswith("scenario,p,exceed_cj_pct")
    assert len(lines) == 2 and lines[1].startswith("Expe_P_2,0.5,")


def test_run_scenario_threads_identical():
    sc = get_scenario("Expe_P_2", replications=4, p_grid=(0.5,))
    serial = run_scenario(sc, TINY, threads=1)
    parallel = run_scenario(sc, TINY, threads=2)
    for a, b in zip(serial, parallel):
        assert a == b


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(name="x", family="probit2", fixed_params={"beta": 1.0},
                 mu=0.0, tau=-1.0)
    with pytest.raises(ValueError):
        Scenario(name="x", family="probit2", fixed_params={"beta": 1.0},
                 mu=0.0, tau=1.0, s_count=1)
    with pytest.raises(ValueError):
        Scenario(name="x", family="probit2", fixed_params={"beta": 1.0},
                 mu=0.0, tau=1.0, p_grid=(0.0, 0.5))
    with pytest.raises(ValueError):
        generate_replication(SCENARIOS["Expe_P_2"], 1.5, 0)
