import math

import numpy as np
import pytest

from pbbound.core import load_example
from pbbound.extbound import OptConfig
from pbbound.relik import fit_ml
from pbbound.selmodels import p0
from pbbound.sensitivity import (SWEEP_FAMILIES, adjusted_estimate, sweep,
                                 sweep_to_csv)

FAST = OptConfig(k1=30, k2=30, kprime_stride=5, restarts=1, max_iters=120)

CORTICO = load_example("corticosteroids")


def test_p_equal_one_recovers_ml_fit():
    # no selection: every comparator family returns the naive fit
    ml = fit_ml(CORTICO)
    for fam in SWEEP_FAMILIES:
        adj = adjusted_estimate(CORTICO, fam, 1.0, init=ml)
        assert adj.mu_adj == pytest.approx(ml.mu_hat, abs=1e-12)
        assert adj.tau_adj == pytest.approx(ml.tau_hat, abs=1e-12)


def test_unpublished_count_identity_pins_free_parameter():
    # the fitted model's selection probabilities satisfy
    # mean(1/p0) = 1/p on the (mirrored) observed data
    ml = fit_ml(CORTICO)
    y = -CORTICO.y if ml.mu_hat < 0 else CORTICO.y
    for fam, target in (("logit1", 0.5), ("exp2", 0.3), ("probit2", 0.7)):
        adj = adjusted_estimate(CORTICO, fam, target, init=ml)
        probs = np.asarray(p0(adj.model, y, CORTICO.s))
        assert float(np.mean(1.0 / probs)) == pytest.approx(1.0 / target,
                                                            rel=1e-8)


def test_adjustment_moves_against_selection():
    # one-sided selection favoring the observed (negative) direction
    # means the adjusted estimate moves toward zero or beyond
    ml = fit_ml(CORTICO)
    for fam in ("logit1", "mlogit", "exp1"):
        adj = adjusted_estimate(CORTICO, fam, 0.5, init=ml)
        assert adj.mu_adj > ml.mu_hat


def test_comparator_curves_monotone_on_small_grid():
    # stronger selection (smaller p) implies larger adjustment
    ml = fit_ml(CORTICO)
    for fam in ("logit1", "exp1"):
        vals = [adjusted_estimate(CORTICO, fam, p, init=ml).mu_adj
                for p in (0.8, 0.5, 0.3)]
        assert vals[0] < vals[1] < vals[2]


def test_sweep_rows_and_bounds():
    rows = sweep(CORTICO, [0.7, 0.5], families=["logit1"], config=FAST)
    ml = fit_ml(CORTICO)
    assert [r.p for r in rows] == [0.7, 0.5]
    for row in rows:
        # bounds sit on the estimate scale around the ML fit
        assert row.cj_lower_estimate <= ml.mu_hat <= row.cj_upper_estimate
        assert row.ext_lower_estimate <= row.cj_lower_estimate + 1e-12
        assert row.ext_upper_estimate >= row.cj_upper_estimate - 1e-12
        assert set(row.mu_adjusted_by_model) == {"logit1"}
        assert not row.errors
    # bound columns do not depend on which comparator families run
    rows2 = sweep(CORTICO, [0.7, 0.5], families=[], config=FAST)
    for a, b in zip(rows, rows2):
        assert a.ext_upper_estimate == b.ext_upper_estimate
        assert a.cj_upper_estimate == b.cj_upper_estimate


def test_sweep_pins_two_parameter_slope():
    # the profiled slope is chosen once (at the smallest p) and reused,
    # so refitting at any grid point with that slope reproduces the curve
    rows = sweep(CORTICO, [0.5, 0.3], families=["probit2"], config=FAST)
    ml = fit_ml(CORTICO)
    pinned = adjusted_estimate(CORTICO, "probit2", 0.3, init=ml)
    beta = float(pinned.model.params["beta"])
    for row in rows:
        direct = adjusted_estimate(CORTICO, "probit2", row.p, init=ml,
                                   beta=beta)
        assert row.mu_adjusted_by_model["probit2"] == pytest.approx(
            direct.mu_adj, abs=1e-9)


def test_sweep_csv_shape():
    rows = sweep(CORTICO, [0.5], families=["logit1"], config=FAST)
    text = sweep_to_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == "p,method,family,value,status"
    # 4 bound rows + 1 comparator row
    assert len(lines) == 1 + 5
    assert all(line.endswith(",ok") for line in lines[1:])


def test_validation():
    with pytest.raises(ValueError):
        adjusted_estimate(CORTICO, "nope", 0.5)
    with pytest.raises(ValueError):
        adjusted_estimate(CORTICO, "logit1", 0.0)
    with pytest.raises(ValueError):
        sweep(CORTICO, [])
