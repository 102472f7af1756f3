import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matern_interference import retention
from matern_interference.pointprocess import (
    PointPattern,
    ThinnedPattern,
    Window,
    independent_thinnings,
    matern_thin,
    paired_thinnings,
    sample_ppp,
    write_pattern,
)


def brute_force_flags(points, marks, d):
    """O(n^2) Matérn II rule, one column per thinning."""
    diff = points[:, None, :] - points[None, :, :]
    near = (diff**2).sum(-1) <= d * d
    np.fill_diagonal(near, False)
    out = np.empty(marks.shape, dtype=bool)
    for t in range(marks.shape[1]):
        killer = near & (marks[None, :, t] < marks[:, None, t])
        out[:, t] = ~killer.any(axis=1)
    return out


def min_retained_distance(thinned):
    pts = thinned.points
    if len(pts) < 2:
        return math.inf
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, math.inf)
    return dist.min()


def test_window_validation():
    with pytest.raises(ValueError):
        Window(0.0)
    with pytest.raises(ValueError):
        Window(1.0, -0.1)
    w = Window(10.0, 1.0)
    assert w.sampling_radius == 11.0
    assert w.sampling_area == pytest.approx(121 * math.pi)


def test_pattern_validation():
    w = Window(1.0)
    with pytest.raises(ValueError):
        PointPattern(np.zeros((2, 2)), [0.5], w)
    with pytest.raises(ValueError):
        PointPattern(np.zeros((1, 2)), [1.5], w)
    p = PointPattern(np.zeros((1, 2)), [0.5], w)
    with pytest.raises(ValueError):
        p.points[0, 0] = 1.0


def test_empty_intensity():
    p = sample_ppp(0.0, Window(5.0), np.random.default_rng(0))
    assert len(p) == 0
    assert len(matern_thin(p, 1.0)) == 0


def test_mean_count():
    w = Window(10.0)
    rng = np.random.default_rng(1)
    counts = np.array([len(sample_ppp(1.0, w, rng)) for _ in range(2000)])
    expected = 100 * math.pi
    assert abs(counts.mean() - expected) < 4 * math.sqrt(expected / counts.size)
    assert counts.var() == pytest.approx(expected, rel=0.1)


def test_points_fill_the_guard_ring():
    w = Window(10.0, 1.0)
    rng = np.random.default_rng(2)
    outside = inside = 0
    for _ in range(10_000 // 10):
        p = sample_ppp(1.0, w, rng)
        mask = p.interior()
        inside += mask.sum()
        outside += (~mask).sum()
        assert np.all(p.distances() <= 11.0)
    # annulus area fraction 21/121
    frac = outside / (inside + outside)
    assert frac == pytest.approx(21 / 121, rel=0.02)


def test_single_point_retained():
    p = PointPattern([[0.0, 0.0]], [0.9], Window(1.0))
    assert matern_thin(p, 5.0).retained.tolist() == [True]


def test_two_point_rule():
    p = PointPattern([[0.0, 0.0], [0.5, 0.0]], [0.2, 0.7], Window(1.0))
    assert matern_thin(p, 1.0).retained.tolist() == [True, False]


def test_ties_kill_neither():
    p = PointPattern([[0.0, 0.0], [0.5, 0.0]], [0.4, 0.4], Window(1.0))
    assert matern_thin(p, 1.0).retained.tolist() == [True, True]


def test_zero_distance_keeps_everything():
    p = sample_ppp(2.0, Window(5.0), np.random.default_rng(3))
    assert matern_thin(p, 0.0).retained.all()
    a, b = paired_thinnings(p, 0.0, np.random.default_rng(4))
    assert a.retained.all() and b.retained.all()


def test_mark_length_mismatch():
    p = sample_ppp(1.0, Window(3.0), np.random.default_rng(5))
    with pytest.raises(ValueError):
        matern_thin(p, 1.0, marks=np.zeros(len(p) + 1))
    with pytest.raises(ValueError):
        ThinnedPattern(p, np.ones(len(p) + 1, dtype=bool))


@given(
    seed=st.integers(0, 2**32 - 1),
    lam=st.floats(0.2, 8.0),
    d=st.floats(0.01, 3.0),
    k=st.sampled_from([1, 2, 3]),
)
@settings(max_examples=120, deadline=None)
def test_kernel_matches_brute_force(seed, lam, d, k):
    rng = np.random.default_rng(seed)
    p = sample_ppp(lam, Window(4.0, d), rng)
    thins = independent_thinnings(p, d, k, rng)
    marks = np.column_stack([t.parent.marks for t in thins]) if len(p) else np.empty((0, k))
    expected = brute_force_flags(p.points, marks, d)
    got = np.column_stack([t.retained for t in thins]) if len(p) else np.empty((0, k), bool)
    assert np.array_equal(got, expected)


def test_coarse_marks_follow_tie_rule():
    # quantised marks make ties frequent
    rng = np.random.default_rng(6)
    p = sample_ppp(3.0, Window(5.0, 1.0), rng)
    marks = np.round(rng.random((len(p), 2)) * 4) / 4
    flags = np.column_stack([matern_thin(p, 1.0, marks[:, t]).retained for t in range(2)])
    assert np.array_equal(flags, brute_force_flags(p.points, marks, 1.0))


@pytest.mark.parametrize("d", [0.3, 1.0, 2.0])
def test_hard_core_invariant(d):
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = sample_ppp(3.0, Window(8.0, d), rng)
        for t in paired_thinnings(p, d, rng):
            assert min_retained_distance(t) >= d


def test_guard_beyond_d_does_not_change_interior():
    d = 1.0
    rng = np.random.default_rng(8)
    big = sample_ppp(2.0, Window(6.0, 3.0), rng)
    flags_big = matern_thin(big, d).retained
    dist = big.distances()
    small_mask = dist <= 6.0 + d
    small = PointPattern(big.points[small_mask], big.marks[small_mask], Window(6.0, d))
    flags_small = matern_thin(small, d).retained
    interior = dist[small_mask] <= 6.0
    assert np.array_equal(flags_small[interior], flags_big[small_mask][interior])


def test_relabeling_symmetry():
    rng = np.random.default_rng(9)
    p = sample_ppp(2.0, Window(6.0, 1.0), rng)
    perm = rng.permutation(len(p))
    q = PointPattern(p.points[perm], p.marks[perm], p.window)
    assert np.array_equal(matern_thin(q, 1.0).retained, matern_thin(p, 1.0).retained[perm])


def test_retained_intensity_matches():
    lp, d, radius = 1.0, 1.0, 10.0
    w = Window(radius, d)
    rng = np.random.default_rng(10)
    counts = []
    for _ in range(1500):
        t = matern_thin(sample_ppp(lp, w, rng), d)
        counts.append((t.retained & t.parent.interior()).sum())
    counts = np.array(counts) / (math.pi * radius**2)
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - retention.retained_intensity(lp, d)) < 3 * se


def test_paired_thinnings_match_p1_and_p12():
    # per-pattern ratios, with the standard error from the spread across patterns
    lp, d = 1.0, 1.0
    w = Window(8.0, d)
    rng = np.random.default_rng(11)
    one, both, n = [], [], []
    while sum(n) < 100_000:
        p = sample_ppp(lp, w, rng)
        a, b = paired_thinnings(p, d, rng)
        inside = p.interior()
        n.append(inside.sum())
        one.append((a.retained & inside).sum())
        both.append((a.retained & b.retained & inside).sum())
    n, one, both = map(np.asarray, (n, one, both))
    for hits, ref in ((one, retention.p1(lp, d)), (both, retention.p12(lp, d))):
        est = hits.sum() / n.sum()
        # ratio estimator standard error
        resid = hits - est * n
        se = math.sqrt((resid**2).sum() / (len(n) - 1) / len(n)) / n.mean()
        assert abs(est - ref) < 3 * se


def test_paired_marks_are_independent():
    p = sample_ppp(5.0, Window(4.0), np.random.default_rng(12))
    a, b = paired_thinnings(p, 0.5, np.random.default_rng(13))
    assert a.parent.points is b.parent.points or np.array_equal(a.parent.points, b.parent.points)
    assert not np.array_equal(a.parent.marks, b.parent.marks)


def test_same_seed_same_realization():
    def run():
        rng = np.random.default_rng(99)
        p = sample_ppp(1.0, Window(5.0, 1.0), rng)
        return p, paired_thinnings(p, 1.0, rng)

    (p1, (a1, b1)), (p2, (a2, b2)) = run(), run()
    assert np.array_equal(p1.points, p2.points)
    assert np.array_equal(a1.retained, a2.retained) and np.array_equal(b1.retained, b2.retained)


def test_write_pattern():
    p = PointPattern([[0.0, 0.0], [0.5, 0.0], [3.0, 0.0]], [0.2, 0.7, 0.9], Window(4.0))
    a = matern_thin(p, 1.0)
    b = matern_thin(p, 1.0, marks=[0.9, 0.1, 0.5])
    buf = io.StringIO()
    write_pattern(buf, [a, b])
    lines = buf.getvalue().splitlines()
    assert lines[0].split() == ["0", "0", "0.20000000000000001", "1", "0"]
    assert [line.split()[3:] for line in lines] == [["1", "0"], ["0", "1"], ["1", "1"]]
    with pytest.raises(ValueError):
        write_pattern(buf, [])
