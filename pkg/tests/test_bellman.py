import json

import numpy as np
import pytest

from dyadweight.bellman import (
    BellmanPoint,
    BellmanTable,
    bellman_step,
    build_table,
    depth_monotone,
    in_domain,
    verify_midpoint_concavity,
    verify_range,
)

Q = 1.05


@pytest.fixture(scope="module")
def table():
    return build_table(Q, 2, n_xy=17, n_p=5, restarts=16)


def depth_one_closed_form(u):
    # constant weight: (x + dx)^2 + (x - dx)^2 <= 2 and x - dx >= 0
    return np.minimum(u, np.sqrt(1.0 - u ** 2))


@pytest.mark.parametrize("v,expected", [
    (BellmanPoint(1, 1, 0.5, 0.5, 1, 1, Q), True),
    (BellmanPoint(1, 1, 1.0, 0.0, 1, 1, Q), True),
    (BellmanPoint(1, 1, 1.1, 0.0, 1, 1, Q), False),
    (BellmanPoint(1, 1, -0.1, 0.0, 1, 1, Q), False),
    (BellmanPoint(1, 1, 0.5, 0.5, 2, 0.5, Q), True),
    (BellmanPoint(1, 1, 0.5, 0.5, 2, 0.6, Q), False),
    (BellmanPoint(1, 1, 0.5, 0.5, 1, 0.9, Q), False),
    (BellmanPoint(1, 1, 0.5, 0.5, 1, 1, 1.0), False),
    (BellmanPoint(0, 1, 0.0, 0.5, 1, 1, Q), False),
])
def test_domain_examples(v, expected):
    assert in_domain(v) is expected


def test_reduced_coordinates_round_trip():
    v = BellmanPoint.from_reduced(0.3, 0.7, 1.02, Q, X=4.0, Y=0.25, r=3.0)
    assert v.reduced() == pytest.approx((0.3, 0.7, 1.02))
    assert v.scale == pytest.approx(1.0)
    assert in_domain(v)


def test_zero_table_validation():
    with pytest.raises(ValueError):
        BellmanTable.zero(1.0)


def test_depth_one_matches_closed_form_for_constant_weight(table):
    ex = np.outer(depth_one_closed_form(table.xt), depth_one_closed_form(table.yt))
    np.testing.assert_allclose(table.layers[1][:, :, 0], ex, atol=2e-3)
    # room to vary the weight only adds admissible splits
    assert np.all(table.layers[1] >= ex[:, :, None] - 2e-3)


def test_depth_one_dominates_explicit_splits(table):
    # random children averaged into a parent; the table value is a maximum
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 300:
        X, Y = rng.uniform(0.2, 2.0, (2, 2))
        r = rng.uniform(0.5, 2.0, 2)
        s = rng.uniform(1.0, Q, 2) / r
        x = rng.uniform(0, 1, 2) * np.sqrt(X * s)
        y = rng.uniform(0, 1, 2) * np.sqrt(Y * r)
        parent = BellmanPoint(*(np.mean(a) for a in (X, Y, x, y, r, s)), Q)
        if not in_domain(parent):
            continue
        gain = abs(x[0] - x[1]) * abs(y[0] - y[1]) / 4
        bound = table.evaluate(parent, 1)
        err = parent.scale * table.local_interpolation_error(np.array(parent.reduced()), 1)[0]
        assert gain <= bound + err + 1e-12
        checked += 1


def test_zero_average_means_zero_value(table):
    for k in range(table.depth + 1):
        assert np.all(table.layers[k][0] == 0) and np.all(table.layers[k][:, 0] == 0)


def test_depth_monotone(table):
    assert depth_monotone(table)
    assert table.layers[2].max() > table.layers[1].max()


def test_range_bound(table):
    rep = verify_range(table, 0.83)
    assert rep.ok and rep.checked == 17 * 17 * 5
    assert rep.boundary_points == 17 * 17


def test_range_detects_corruption(table):
    bad = BellmanTable(table.Q, table.xt, table.yt, table.p, [l.copy() for l in table.layers])
    bad.layers[-1][3, 3, 2] = 10.0
    bad.layers[-1][4, 4, 2] = -1.0
    rep = verify_range(bad, 0.83)
    assert not rep.ok and len(rep.violations) == 2


def test_midpoint_concavity(table):
    rep = verify_midpoint_concavity(table, samples=3000, seed=1)
    assert rep.ok and rep.checked == 3000


def test_concavity_detects_flattened_layer(table):
    flat = BellmanTable(table.Q, table.xt, table.yt, table.p,
                        [table.layers[0], table.layers[1], np.zeros(table.shape)])
    assert not verify_midpoint_concavity(flat, samples=500).ok


def test_scaling_identity(table):
    v = BellmanPoint.from_reduced(0.4, 0.6, 1.03, Q)
    # f -> 3f, g -> 2g, w -> 5w
    w = BellmanPoint(9 * 5 * v.X, 4 / 5 * v.Y, 3 * v.x, 2 * v.y, 5 * v.r, v.s / 5, Q)
    assert table.evaluate(w) == pytest.approx(6 * table.evaluate(v), rel=1e-12)


def test_bellman_step_reproduces_table_node(table):
    v = BellmanPoint.from_reduced(table.xt[8], table.yt[8], 1.0, Q)
    smaller = BellmanTable(table.Q, table.xt, table.yt, table.p, table.layers[:2])
    assert bellman_step(smaller, v, restarts=64) == pytest.approx(table.layers[2][8, 8, 0], abs=5e-3)
    with pytest.raises(ValueError):
        bellman_step(smaller, BellmanPoint(1, 1, 2, 0, 1, 1, Q))


def test_larger_q_gives_larger_values(table):
    wide = build_table(1.2, 1, n_xy=17, n_p=5, restarts=16)
    pts = np.column_stack([np.full(5, 0.5), np.full(5, 0.5), np.linspace(1.0, Q, 5)])
    assert np.all(wide.reduced_value(pts, 1) >= table.reduced_value(pts, 1) - 1e-3)


def test_json_round_trip(table, tmp_path):
    table.save(tmp_path / "b.json")
    back = BellmanTable.load(tmp_path / "b.json")
    assert back.Q == table.Q and back.depth == table.depth
    for a, b in zip(back.layers, table.layers):
        np.testing.assert_array_equal(a, b)
    d = json.loads((tmp_path / "b.json").read_text())
    assert len(d["points"]) == len(d["values"][0])


@pytest.mark.parametrize("patch", [{"format": "other"}, {"version": 99}])
def test_load_rejects_foreign_files(table, patch):
    with pytest.raises(ValueError):
        BellmanTable.from_dict({**table.to_dict(), **patch})
