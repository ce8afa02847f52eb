import numpy as np
import pytest
from hypothesis import given, strategies as st

from residual_sbl.signals import (
    IMAGE_IDS,
    MIXED_SPIKES,
    SignalVector,
    example_image,
    example_signal,
    make_grid,
    sample,
    sample_image,
    sample_signal,
    true_edge_vector,
)

PI = np.pi


class TestGrid:
    def test_four_points(self):
        np.testing.assert_allclose(make_grid(4).points, [-PI, -PI / 2, 0, PI / 2], atol=1e-15)

    def test_spacing_at_128(self):
        g = make_grid(128)
        assert g.ds == pytest.approx(2 * PI / 128, rel=1e-15)
        np.testing.assert_allclose(np.diff(g.points), g.ds, rtol=1e-12)
        assert g.points[0] == -PI
        assert g.points[-1] == pytest.approx(PI - g.ds, abs=1e-14)

    @pytest.mark.parametrize("n", [5, 2, 0, -4])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            make_grid(n)

    @given(st.integers(2, 300).map(lambda k: 2 * k))
    def test_points_increase_and_stay_in_domain(self, n):
        pts = make_grid(n).points
        assert np.all(np.diff(pts) > 0)
        assert pts[0] == -PI and pts[-1] < PI


class TestSample:
    def test_constant(self):
        np.testing.assert_array_equal(sample(lambda s: 1.0, make_grid(4)).values, [1, 1, 1, 1])

    def test_sine(self):
        np.testing.assert_allclose(sample(np.sin, make_grid(4)).values, [0, -1, 0, 1], atol=1e-15)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            sample(lambda s: np.where(s > 0, np.nan, 0.0), make_grid(4))

    def test_signal_vector_length_checked(self):
        with pytest.raises(ValueError):
            SignalVector(make_grid(4), np.zeros(5))

    @given(st.integers(2, 100).map(lambda k: 2 * k), st.integers(1, 5))
    def test_periodic_function_wraps(self, n, freq):
        g = make_grid(n)
        v = sample(lambda s: np.cos(freq * s), g).values
        assert np.cos(freq * (g.points[0] + 2 * PI)) == pytest.approx(v[0], abs=1e-12)


class TestExampleSignals:
    def test_f1_at_zero(self):
        assert example_signal("f1", 0.0) == pytest.approx(7 / 4 + 6 * np.sin(-1 / 4), abs=1e-15)

    def test_f4_middle(self):
        assert example_signal("f4", 0.0) == pytest.approx(-6 / PI)

    def test_f5_left(self):
        assert example_signal("f5", -3.0) == -3.0

    def test_f1_left_end(self):
        assert example_signal("f1", -PI) == pytest.approx(11 * PI / 4 - 5 - PI**2 / 5, abs=1e-14)

    def test_breakpoints_belong_to_right_interval(self):
        # U2 = [-pi/2, pi/2) is closed on the left, U3 starts at pi/2
        assert example_signal("f4", -PI / 2) == pytest.approx(-6 / PI)
        assert example_signal("f4", PI / 2) == 1.5

    @pytest.mark.parametrize("s", [PI, -PI - 1e-9, 4.0])
    def test_outside_domain(self, s):
        with pytest.raises(ValueError):
            example_signal("f1", s)

    def test_unknown_id(self):
        with pytest.raises(ValueError):
            example_signal("f9", 0.0)

    def test_mixed_signal_layout(self):
        g = make_grid(128)
        for sid, base in [("mixed1", "f1"), ("mixed2", "f2"), ("mixed3", "f3")]:
            v = sample_signal(sid, g).values
            left = np.flatnonzero(g.points < 0)
            assert set(np.flatnonzero(v[left])) == set(MIXED_SPIKES)
            assert np.all(v[list(MIXED_SPIKES)] == 1.0)
            right = g.points >= 0
            np.testing.assert_array_equal(v[right], sample_signal(base, g).values[right])

    @given(st.floats(-PI, PI, exclude_max=True))
    def test_branch_intervals_partition_domain(self, s):
        # f4 takes a distinct constant on U2, so it reports which interval s is in
        in_u1, in_u2, in_u3 = s < -PI / 2, -PI / 2 <= s < PI / 2, s >= PI / 2
        assert in_u1 + in_u2 + in_u3 == 1
        assert (example_signal("f4", s) == pytest.approx(-6 / PI)) == in_u2


class TestImages:
    def test_h3_center(self):
        # pixel 65 of 128 sits at s = 0
        assert example_image("h3", 65, 65, 128) == pytest.approx(1.0)

    def test_h2_outer_branch(self):
        n = 128
        j, jp = 1, 1  # corner pixel, rho = sqrt(2)*pi
        s = -PI
        assert example_image("h2", j, jp, n) == pytest.approx(np.sin(-s + PI))

    def test_region_boundaries_half_open(self):
        # rho exactly 0.3pi and 0.7pi: with n=20, ds = pi/10, pixel 14 is s = 0.3pi
        n = 20
        inner = example_image("h3", 14, 11, n)
        assert inner == pytest.approx(np.cos(4 * 0.3 * PI))
        outer = example_image("h3", 18, 11, n)
        assert outer == pytest.approx(-0.5 * np.cos(0.7 * PI))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            example_image("h1", 0, 1, 8)
        with pytest.raises(ValueError):
            example_image("h4", 1, 1, 8)

    @pytest.mark.parametrize("iid", IMAGE_IDS)
    def test_sampled_image_matches_pointwise(self, iid):
        n = 16
        img = sample_image(iid, n)
        for j in (1, 5, 9, 16):
            for jp in (1, 8, 13):
                assert img[j - 1, jp - 1] == pytest.approx(example_image(iid, j, jp, n), abs=1e-15)


class TestEdgeVectors:
    def test_f4_jumps(self):
        e = true_edge_vector("f4", make_grid(128))
        np.testing.assert_array_equal(e.support, [31, 95])
        assert e.values[31] == pytest.approx(-6 / PI - 1.5)
        assert e.values[95] == pytest.approx(1.5 + 6 / PI)

    @pytest.mark.parametrize("sid", ["f4", "f5", "f6"])
    def test_constant_signals_have_two_jumps(self, sid):
        assert true_edge_vector(sid, make_grid(128)).support.size == 2

    def test_f1_three_jumps(self):
        e = true_edge_vector("f1", make_grid(128))
        np.testing.assert_array_equal(e.support, [31, 95, 127])
        # one-sided limits written out by hand
        left_u1 = 11 * PI / 4 - 5 - (PI / 2) ** 2 / 5
        right_u2 = 7 / 4 + PI / 4 + 6 * np.sin(-PI / 2 - 1 / 4)
        left_u2 = 7 / 4 - PI / 4 + 6 * np.sin(PI / 2 - 1 / 4)
        right_u3 = 11 * PI / 8 - 5
        assert e.values[31] == pytest.approx(right_u2 - left_u1, abs=1e-13)
        assert e.values[95] == pytest.approx(right_u3 - left_u2, abs=1e-13)
        assert e.values[127] == pytest.approx(-(PI**2) / 5, abs=1e-13)

    def test_jump_sits_between_straddling_samples(self):
        g = make_grid(128)
        for sid in ["f4", "f5", "f6"]:
            f = sample_signal(sid, g).values
            e = true_edge_vector(sid, g)
            diff = np.roll(f, -1) - f
            np.testing.assert_allclose(diff, e.values, atol=1e-13)

    def test_mixed_rejected(self):
        with pytest.raises(ValueError):
            true_edge_vector("mixed1", make_grid(128))
