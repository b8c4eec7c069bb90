import math

import numpy as np
import pytest

from conelab.errors import UsageError
from conelab.spaces import (
    GOLDEN_ANGLE,
    Word,
    apply,
    apply_word,
    ball_measure,
    base_distance,
    circle_rotation_action,
    identity_action,
    lipschitz_estimate,
    make_space,
    sl2_torus_action,
    su2_action,
)


def brute_torus_distance(x, y):
    """Oracle: minimum over integer lattice translates of the representative."""
    best = math.inf
    for kx in range(-2, 3):
        for ky in range(-2, 3):
            dx = x[0] - y[0] - kx
            dy = x[1] - y[1] - ky
            best = min(best, math.hypot(dx, dy))
    return best / (math.sqrt(2.0) / 2.0)


def test_base_distance_identity(torus):
    assert base_distance(torus, np.array([0.0, 0.0]), np.array([0.0, 0.0])) == 0.0


def test_base_distance_circle_antipodal(circle):
    assert base_distance(circle, np.array([0.0]), np.array([0.5])) == pytest.approx(1.0)


def test_base_distance_torus_diameter_pair(torus):
    x, y = np.array([0.0, 0.0]), np.array([0.5, 0.5])
    d = base_distance(torus, x, y)
    assert d == pytest.approx(1.0, abs=1e-12)
    assert d == pytest.approx(brute_torus_distance(x, y), abs=1e-12)


def test_base_distance_matches_brute_force(torus, rng):
    pts = rng.random((50, 2))
    qts = rng.random((50, 2))
    d = base_distance(torus, pts, qts)
    for k in range(50):
        assert d[k] == pytest.approx(brute_torus_distance(pts[k], qts[k]), abs=1e-12)


def test_base_distance_axioms_sampled(torus, rng):
    a, b = rng.random((200, 2)), rng.random((200, 2))
    dab = base_distance(torus, a, b)
    assert np.all(dab >= 0) and np.all(dab <= 1 + 1e-12)
    assert np.allclose(dab, base_distance(torus, b, a))


def test_sampled_diameter_normalized(rng):
    for kind in ("torus2", "sphere3", "circle"):
        space = make_space(kind)
        a, b = space.sample(rng, 10_000), space.sample(rng, 10_000)
        assert float(space.distance(a, b).max()) <= 1.0 + 1e-9


def test_mismatched_points_rejected(torus):
    with pytest.raises(UsageError):
        base_distance(torus, np.zeros(3), np.zeros(3))


def test_ball_growth_bounded():
    # sup m(B(r)) / r^k stays bounded on r in [1e-3, 1e-1]
    for kind, cap in (("torus2", 2.0), ("sphere3", 7.0), ("circle", 1.1)):
        space = make_space(kind)
        k = space.growth_exponent
        for r in (1e-3, 1e-2, 1e-1):
            assert space.ball_measure_exact(r) / r**k <= cap


def test_apply_sl2_example(sl2):
    out = apply(sl2, "A", np.array([0.25, 0.5]))
    assert np.allclose(out, [0.75, 0.5])


def test_apply_rotation():
    act = circle_rotation_action(0.25)
    assert apply(act, "R", np.array([0.9]))[0] == pytest.approx(0.15)


def test_apply_quaternion_unit_norm(su2, rng):
    pts = su2.space.sample(rng, 100)
    for s in su2.labels:
        out = apply(su2, s, pts)
        assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)


def test_apply_unknown_label(sl2):
    with pytest.raises(UsageError):
        apply(sl2, "nope", np.array([0.0, 0.0]))


def test_apply_word_composition(sl2, rng):
    pts = rng.random((20, 2))
    w = Word(("A", "B", "Ai"))
    direct = apply(sl2, "A", apply(sl2, "B", apply(sl2, "Ai", pts)))
    assert np.allclose(apply_word(sl2, w, pts), direct)
    assert np.allclose(apply_word(sl2, Word(()), pts), pts)
    assert len(w) == 3


def test_apply_word_rotation_accumulates():
    act = circle_rotation_action(0.1)
    out = apply_word(act, ("R", "R", "R"), np.array([[0.95]]))
    assert out[0, 0] == pytest.approx(0.25)


def test_inverse_consistency(sl2, su2, rng):
    for action in (sl2, su2, circle_rotation_action(GOLDEN_ANGLE)):
        pts = action.space.sample(rng, 100)
        for g in action.generators:
            back = apply(action, g.inverse, apply(action, g.label, pts))
            assert float(action.space.distance(back, pts).max()) < 1e-9


def test_measure_preservation_binned(sl2):
    # pushing uniform samples through a generator keeps 32x32 cell weights
    rng = np.random.default_rng(4242)
    pts = rng.random((100_000, 2))
    out = apply(sl2, "A", pts)
    cells = (np.floor(out * 32).astype(int) % 32)
    counts = np.bincount(cells[:, 0] * 32 + cells[:, 1], minlength=1024)
    p = 1.0 / 1024
    se = math.sqrt(p * (1 - p) / 100_000)
    assert np.all(np.abs(counts / 100_000 - p) <= 3.2 * se)


def test_ball_measure_whole_space(torus):
    est = ball_measure(torus, np.array([0.3, 0.3]), 1.0, 1000, seed=1)
    assert est.value == 1.0 and est.stderr <= 1e-3


def test_ball_measure_circle_quarter(circle):
    # rescaled radius 0.25 covers an arc of length 0.25
    est = ball_measure(circle, np.array([0.1]), 0.25, 200_000, seed=2)
    assert est.value == pytest.approx(0.25, abs=4 * est.stderr)
    assert est.value == pytest.approx(circle.ball_measure_exact(0.25), abs=4 * est.stderr)


def test_ball_measure_torus_exact_oracle(torus):
    r = 0.1
    exact = math.pi * (r * math.sqrt(2) / 2) ** 2  # euclidean disc, no wrap
    assert torus.ball_measure_exact(r) == pytest.approx(exact, rel=1e-12)
    est = ball_measure(torus, np.array([0.7, 0.2]), r, 400_000, seed=3)
    assert est.value == pytest.approx(exact, abs=4 * est.stderr)


def test_ball_measure_invalid_args(torus):
    with pytest.raises(UsageError):
        ball_measure(torus, np.array([0.0, 0.0]), 0.0, 10, seed=0)


def test_lipschitz_shear_matches_operator_norm(sl2):
    # largest singular value of [[1,1],[0,1]]: sqrt of the top eigenvalue of
    # M^T M = [[1,1],[1,2]], i.e. (3+sqrt5)/2, giving the golden ratio
    exact = math.sqrt((3.0 + math.sqrt(5.0)) / 2.0)
    assert exact == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-12)
    est = lipschitz_estimate(sl2, "A", 4000, seed=5)
    assert est <= exact * (1 + 1e-6)
    assert est == pytest.approx(exact, rel=0.02)


def test_lipschitz_isometries(su2):
    assert lipschitz_estimate(su2, "Q1", 2000, seed=6) == pytest.approx(1.0, abs=1e-9)
    rot = circle_rotation_action(GOLDEN_ANGLE)
    assert lipschitz_estimate(rot, "R", 2000, seed=7) == pytest.approx(1.0, abs=1e-9)


def test_lipschitz_ratio_bounded_by_declared(sl2, rng):
    for g in sl2.generators:
        est = lipschitz_estimate(sl2, g.label, 2000, seed=8)
        assert est <= g.lipschitz * (1 + 1e-6)


def test_identity_action_fixes_points(torus, rng):
    act = identity_action(torus)
    pts = rng.random((10, 2))
    assert np.allclose(apply(act, "E", pts), pts)


def test_sl2_rejects_non_unimodular():
    with pytest.raises(UsageError):
        sl2_torus_action([("X", np.array([[2, 0], [0, 1]]))])
