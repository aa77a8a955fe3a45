import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbanrl.analysis import (
    Intersection,
    TermTrace,
    intersection_from_means,
    month_slices,
    reward_at_weight,
    reward_diff,
    transfer_ranks,
    transfer_score,
    weight_intersection,
    weight_sweep,
    write_sweep_svg,
    write_transfer_csv,
    write_weight_sweep_csv,
)
from urbanrl.env import RewardConfig

CFG = RewardConfig()
MODELS = ["A", "B", "C", "D", "E"]


def trace(energy, comfort, n=None):
    if n is not None:
        energy, comfort = np.full(n, energy), np.full(n, comfort)
    return TermTrace(np.asarray(energy, dtype=float), np.asarray(comfort, dtype=float))


def random_trace(seed, n=1460 * 12):
    rng = np.random.default_rng(seed)
    return trace(rng.exponential(3.0, n), 6.0 + rng.exponential(1.0, n))


class TestRewardAtWeight:
    def test_endpoints(self):
        t = random_trace(0, 500)
        assert reward_at_weight(t, 0.0) == pytest.approx(-t.mean_comfort(), abs=1e-12)
        assert reward_at_weight(t, 1.0) == pytest.approx(-t.mean_energy(), abs=1e-12)

    def test_hand_value(self):
        assert reward_at_weight(trace(4.0, 8.0, 10), 0.5) == pytest.approx(-6.0, abs=1e-12)

    def test_affine(self):
        t = random_trace(1)
        rows = weight_sweep(t, t)
        r0, r1 = rows[0][1], rows[-1][1]
        worst = max(abs(r - (r0 + w * (r1 - r0))) for w, r, _ in rows)
        assert worst < 1e-12

    def test_reconstructs_logged_mean(self):
        t = random_trace(2)
        assert reward_at_weight(t, 0.1) == pytest.approx(float(np.mean(t.rewards(CFG))), abs=1e-9)

    def test_weight_range(self):
        with pytest.raises(ValueError):
            reward_at_weight(trace(1.0, 6.0, 3), 1.2)


class TestRewardDiff:
    def test_identical(self):
        t = random_trace(3)
        d = reward_diff(t, t)
        assert d.value == 0.0 and all(m == 0.0 for m in d.monthly)

    def test_uniform_comfort_gain(self):
        base = random_trace(4)
        better = trace(base.energy, base.comfort - 1.0)
        assert reward_diff(better, base).value == pytest.approx(0.9, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(0, 10_000))
    def test_antisymmetry(self, s1, s2):
        a, b = random_trace(s1, 240), random_trace(s2, 240)
        ab, ba = reward_diff(a, b), reward_diff(b, a)
        assert ab.value == -ba.value
        assert list(ab.monthly) == [-m for m in ba.monthly]

    def test_months_are_1460_steps(self):
        slices = month_slices(17_520)
        assert len(slices) == 12
        assert all(s.stop - s.start == 1460 for s in slices)

    def test_monthly_profile(self):
        base = trace(1.0, 6.0, 17_520)
        comfort = np.full(17_520, 6.0)
        comfort[1460 * 3:1460 * 4] = 8.0  # month 4 worse by 2 K
        d = reward_diff(trace(base.energy, comfort), base)
        assert d.monthly[3] == pytest.approx(-1.8, abs=1e-12)
        assert all(m == 0.0 for i, m in enumerate(d.monthly) if i != 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            reward_diff(trace(1.0, 6.0, 10), trace(1.0, 6.0, 11))


class TestIntersection:
    def test_rl_better_everywhere(self):
        assert intersection_from_means(1.0, 6.0, 2.0, 7.0).w is None
        assert str(intersection_from_means(1.0, 6.0, 2.0, 7.0)) == "none"

    def test_symmetric_swap(self):
        assert intersection_from_means(10.0, 4.0, 4.0, 10.0).w == pytest.approx(0.5, abs=1e-12)

    def test_hand_case(self):
        assert intersection_from_means(8.0, 5.0, 2.0, 9.0).w == pytest.approx(0.4, abs=1e-12)

    def test_from_traces(self):
        w = weight_intersection(trace(8.0, 5.0, 100), trace(2.0, 9.0, 100)).w
        assert w == pytest.approx(0.4, abs=1e-12)

    def test_identical_lines(self):
        res = intersection_from_means(3.0, 7.0, 3.0, 7.0)
        assert res.coincident and str(res) == "coincident"

    @settings(max_examples=200)
    @given(*[st.floats(0.0, 50.0) for _ in range(4)])
    def test_lines_meet_at_w(self, e_r, c_r, e_b, c_b):
        res = intersection_from_means(e_r, c_r, e_b, c_b)
        if res.w is not None:
            assert 0.0 <= res.w <= 1.0
            r_rl = -res.w * e_r - (1 - res.w) * c_r
            r_b = -res.w * e_b - (1 - res.w) * c_b
            assert r_rl == pytest.approx(r_b, abs=1e-9)


def dominant_matrix():
    m = np.arange(25, dtype=float).reshape(5, 5) * -1.0  # row 0 best in every column
    return m


class TestTransfer:
    def test_dominant_model_scores_25(self):
        assert transfer_score(dominant_matrix(), MODELS)[0] == ("A", 25)

    def test_mixed_case_scores_17(self):
        m = np.array([
            [10, 10, 10, -99, -99],
            [5, 5, 5, 5, 5],
            [4, 4, 4, 4, 4],
            [3, 3, 3, 3, 3],
            [2, 2, 2, 2, 2],
        ], dtype=float)
        totals = dict(transfer_score(m, MODELS))
        assert totals["A"] == 3 * 5 + 2 * 1 == 17

    def test_all_ties(self):
        scores = transfer_score(np.zeros((5, 5)), MODELS)
        assert scores == [("A", 25), ("B", 20), ("C", 15), ("D", 10), ("E", 5)]

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1), st.lists(st.floats(-100, 100), min_size=5, max_size=5))
    def test_column_shift_invariance(self, seed, shifts):
        m = np.random.default_rng(seed).normal(-10, 3, (5, 5))
        assert np.array_equal(transfer_ranks(m), transfer_ranks(m + np.array(shifts)[None, :]))

    def test_ranks_are_permutations(self):
        ranks = transfer_ranks(np.random.default_rng(0).normal(size=(5, 5)))
        for j in range(5):
            assert sorted(ranks[:, j]) == [1, 2, 3, 4, 5]

    def test_non_finite(self):
        m = np.zeros((5, 5))
        m[2, 2] = np.nan
        with pytest.raises(ValueError):
            transfer_score(m)


class TestReports:
    def test_sweep_csv(self, tmp_path):
        rows = weight_sweep(trace(8.0, 5.0, 10), trace(2.0, 9.0, 10), n_points=3)
        write_weight_sweep_csv(rows, tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_bytes().split(b"\n")
        assert lines[0] == b"w,reward_rl,reward_baseline"
        assert lines[1] == b"0.0,-5.0,-9.0"
        assert b"\r" not in (tmp_path / "s.csv").read_bytes()

    def test_transfer_csv_with_baseline(self, tmp_path):
        write_transfer_csv(np.eye(2), ["a", "b"], ["x", "y"], tmp_path / "t.csv", baseline=[-1.0, -2.0])
        assert (tmp_path / "t.csv").read_text().splitlines() == [
            "model,x,y", "a,1.0,0.0", "b,0.0,1.0", "baseline,-1.0,-2.0",
        ]

    def test_svg_is_byte_stable(self, tmp_path):
        pytest.importorskip("matplotlib")
        rows = weight_sweep(trace(8.0, 5.0, 10), trace(2.0, 9.0, 10), n_points=11)
        for name in ("a.svg", "b.svg"):
            write_sweep_svg(rows, tmp_path / name, Intersection(0.4))
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
