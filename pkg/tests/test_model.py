import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdspin.model import (
    CouplingMatrix,
    DimensionError,
    FieldSpec,
    SpinConfiguration,
    WeightedGraph,
    discretize,
    energy_and_gradient,
    generalized_energy,
    ising_from_maxcut,
    ising_penalty_ok,
    maxcut_value,
    xy_energy,
    xy_gradient,
)
from oracles import naive_xy_energy, random_dense

PI = math.pi
PAIR = CouplingMatrix.from_dense([[0, 1], [1, 0]])


def fd_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestCouplingMatrix:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            CouplingMatrix.from_dense([[0, 1], [2, 0]])

    def test_rejects_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            CouplingMatrix.from_dense([[1, 0], [0, 0]])

    def test_triplets_validation(self):
        with pytest.raises(ValueError):
            CouplingMatrix.from_triplets(3, [(0, 0, 1.0)])
        with pytest.raises(ValueError, match="duplicate"):
            CouplingMatrix.from_triplets(3, [(0, 1, 1.0), (1, 0, 2.0)])
        with pytest.raises(DimensionError):
            CouplingMatrix.from_triplets(3, [(0, 3, 1.0)])

    def test_read_only(self):
        J = random_dense(4, 0)
        with pytest.raises(ValueError):
            J.to_dense()[0, 1] = 5.0

    def test_storage_conversion_round_trip(self):
        J = random_dense(7, 1)
        S = J.to_sparse()
        assert S.storage == "sparse"
        np.testing.assert_array_equal(S.to_dense(), J.to_dense())
        assert S.to_dense_storage() == J


class TestXYEnergy:
    def test_aligned_pair(self):
        assert xy_energy(PAIR, None, [0.0, 0.0]) == -2.0

    def test_antialigned_pair(self):
        assert xy_energy(PAIR, None, [0.0, PI]) == 2.0

    def test_matches_naive_loops(self, rng):
        J = random_dense(5, 3)
        th = rng.uniform(0, 2 * PI, 5)
        g = rng.uniform(-1, 1, 5)
        dense = J.to_dense().tolist()
        assert xy_energy(J, None, th) == pytest.approx(naive_xy_energy(dense, th), rel=1e-12)
        assert xy_energy(J, g, th) == pytest.approx(naive_xy_energy(dense, th, g), rel=1e-12)

    def test_field_sign_flag(self):
        th = [0.0, 0.0]
        assert xy_energy(PAIR, [1.0, 1.0], th) == 0.0
        assert xy_energy(PAIR, [1.0, 1.0], th, field_sign=-1) == -4.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            xy_energy(PAIR, None, [0.0, 0.0, 0.0])
        with pytest.raises(DimensionError):
            xy_energy(PAIR, [1.0], [0.0, 0.0])

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 15), c=st.floats(-10, 10))
    def test_global_phase_invariance(self, seed, n, c):
        J = random_dense(n, seed)
        th = np.random.default_rng(seed).uniform(0, 2 * PI, n)
        assert abs(xy_energy(J, None, th) - xy_energy(J, None, th + c)) <= 1e-10

    def test_sparse_dense_agree(self, rng):
        for k in range(20):
            J = random_dense(int(rng.integers(2, 30)), k)
            th = rng.uniform(0, 2 * PI, J.n)
            a, b = xy_energy(J, None, th), xy_energy(J.to_sparse(), None, th)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
            # fsum makes the two storages agree exactly
            assert a == b

    def test_fast_path_matches_canonical(self, rng):
        J = random_dense(12, 9)
        th = rng.uniform(0, 2 * PI, 12)
        g = rng.uniform(-3, 3, 12)
        e, _ = energy_and_gradient(J, th, g=g)
        assert e == pytest.approx(xy_energy(J, g, th), rel=1e-12)


class TestXYGradient:
    def test_stationary_aligned(self):
        np.testing.assert_array_equal(xy_gradient(PAIR, None, [0.0, 0.0]), [0.0, 0.0])

    def test_quarter_turn(self):
        np.testing.assert_allclose(xy_gradient(PAIR, None, [PI / 2, 0.0]), [2.0, -2.0], atol=1e-15)

    def test_matches_finite_differences_n6(self, rng):
        J = random_dense(6, 4)
        g = rng.uniform(-2, 2, 6)
        th = rng.uniform(0, 2 * PI, 6)
        fd = fd_gradient(lambda x: xy_energy(J, g, x), th)
        an = xy_gradient(J, g, th)
        assert np.max(np.abs(fd - an)) <= 1e-6 * max(1.0, np.max(np.abs(an)))

    def test_gradient_property_many_instances(self, rng):
        for k in range(100):
            n = int(rng.integers(2, 21))
            J = random_dense(n, 1000 + k)
            th = rng.uniform(0, 2 * PI, n)
            fd = fd_gradient(lambda x: xy_energy(J, None, x), th)
            an = xy_gradient(J, None, th)
            assert np.max(np.abs(fd - an)) <= 1e-6 * max(1.0, np.max(np.abs(an)))

    def test_generalized_gradient(self, rng):
        J = random_dense(5, 8)
        f = FieldSpec({1: rng.uniform(-1, 1, 5), 3: rng.uniform(0, 2, 5)})
        th = rng.uniform(0, 2 * PI, 5)
        _, an = energy_and_gradient(J, th, fields=f, rho_th=0.7)
        fd = fd_gradient(lambda x: generalized_energy(J, f, 0.7, x), th)
        assert np.max(np.abs(fd - an)) <= 1e-6 * max(1.0, np.max(np.abs(an)))


class TestGeneralizedEnergy:
    def test_reduces_to_xy_exactly(self, rng):
        for k in range(10):
            J = random_dense(8, k)
            th = rng.uniform(0, 2 * PI, 8)
            assert generalized_energy(J, FieldSpec(), 1.3, th) == xy_energy(J, None, th)
            assert generalized_energy(J, None, 1.3, th) == xy_energy(J, None, th)

    def test_single_cosine(self):
        J = CouplingMatrix.from_dense([[0.0]])
        assert generalized_energy(J, FieldSpec({2: [1.0]}), 1.0, [0.0]) == -1.0

    def test_matches_naive(self, rng):
        J = random_dense(4, 5)
        h2 = rng.uniform(0, 3, 4)
        h1 = rng.uniform(-1, 1, 4)
        th = rng.uniform(0, 2 * PI, 4)
        rho = 0.4
        d = J.to_dense()
        naive = 0.0
        for i in range(4):
            for j in range(4):
                if i != j:
                    naive -= d[i, j] * math.cos(th[i] - th[j])
            naive -= rho ** (2 / 2 - 1) * h2[i] * math.cos(2 * th[i])
            naive -= rho ** (1 / 2 - 1) * h1[i] * math.cos(th[i])
        got = generalized_energy(J, FieldSpec({1: h1, 2: h2}), rho, th)
        assert got == pytest.approx(naive, rel=1e-12)

    def test_external_field_equivalence(self, rng):
        # h1 = -g sqrt(rho) reproduces the +g cos(theta) Hamiltonian
        J = random_dense(6, 2)
        g = rng.uniform(-2, 2, 6)
        th = rng.uniform(0, 2 * PI, 6)
        rho = 2.5
        f = FieldSpec({1: -g * math.sqrt(rho)})
        assert generalized_energy(J, f, rho, th) == pytest.approx(xy_energy(J, g, th), rel=1e-12)
        np.testing.assert_allclose(f.external_field(rho), -g)

    def test_errors(self):
        with pytest.raises(ValueError):
            generalized_energy(PAIR, None, 0.0, [0, 0])
        with pytest.raises(DimensionError):
            generalized_energy(PAIR, FieldSpec({2: [1.0, 1.0, 1.0]}), 1.0, [0, 0])


class TestFieldSpec:
    def test_invalid_order(self):
        with pytest.raises(ValueError):
            FieldSpec({0: [1.0]})

    def test_model_tags(self):
        assert FieldSpec().model_tag == "xy"
        assert FieldSpec({1: [1.0]}).model_tag == "xy"
        assert FieldSpec.ising(3, 2.0).model_tag == "ising"
        assert FieldSpec.potts(3, 5, 1.0).model_tag == "potts:5"

    def test_ising_condition(self):
        J = random_dense(6, 1)
        m = J.abs_row_sums().max()
        assert ising_penalty_ok(J, FieldSpec.ising(6, 1.01 * m))
        assert not ising_penalty_ok(J, FieldSpec.ising(6, 0.99 * m))
        assert not ising_penalty_ok(J, FieldSpec())


class TestDiscretize:
    def test_ising(self):
        out = discretize(SpinConfiguration([0.1, 3.0]), "ising")
        np.testing.assert_array_equal(out.theta, [0.0, PI])
        assert out.model_tag == "ising"

    def test_potts3(self):
        out = discretize(SpinConfiguration([2.0]), "potts:3")
        assert out.theta[0] == pytest.approx(2 * PI / 3)

    def test_tie_goes_to_smaller(self):
        assert discretize(SpinConfiguration([PI / 2]), "ising").theta[0] == 0.0

    def test_wraps_near_two_pi(self):
        assert discretize(SpinConfiguration([2 * PI - 0.01]), "ising").theta[0] == 0.0

    @settings(max_examples=100, deadline=None)
    @given(th=st.lists(st.floats(-20, 20), min_size=1, max_size=10), q=st.integers(2, 7))
    def test_result_on_lattice(self, th, q):
        tag = "ising" if q == 2 else f"potts:{q}"
        out = discretize(SpinConfiguration(th), tag)
        k = out.theta * q / (2 * PI)
        np.testing.assert_allclose(k, np.round(k), atol=1e-9)
        assert np.all((out.theta >= 0) & (out.theta < 2 * PI))

    def test_xy_tag_rejected(self):
        with pytest.raises(ValueError):
            discretize(SpinConfiguration([0.0]), "xy")


def all_spins(n):
    return [np.array(b) for b in itertools.product((1, -1), repeat=n)]


def ising_h(J, s):
    return -float(s @ J.to_dense() @ s)


def conf_from_spins(s):
    return SpinConfiguration(np.where(np.asarray(s) > 0, 0.0, PI), "ising")


class TestMaxCut:
    TRIANGLE = WeightedGraph(3, ((0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)))

    def test_triangle_best_cut(self):
        J, off = ising_from_maxcut(self.TRIANGLE)
        h_min = min(ising_h(J, s) for s in all_spins(3))
        assert off - h_min / 4 == 2.0

    def test_single_edge(self):
        g = WeightedGraph(2, ((0, 1, 1.0),))
        assert maxcut_value(g, conf_from_spins([1, -1])) == 1.0

    def test_four_cycle(self):
        g = WeightedGraph(4, ((0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)))
        J, off = ising_from_maxcut(g)
        h_min = min(ising_h(J, s) for s in all_spins(4))
        assert off - h_min / 4 == 4.0

    def test_triangle_cut_value(self):
        assert maxcut_value(self.TRIANGLE, conf_from_spins([1, 1, -1])) == 2.0

    def test_uniform_spins_cut_nothing(self):
        assert maxcut_value(self.TRIANGLE, conf_from_spins([1, 1, 1])) == 0.0

    def test_non_ising_rejected(self):
        with pytest.raises(ValueError):
            maxcut_value(self.TRIANGLE, SpinConfiguration([0.0, 1.0, 2.0]))

    def test_graph_validation(self):
        with pytest.raises(ValueError):
            WeightedGraph(3, ((0, 0, 1.0),))
        with pytest.raises(ValueError):
            WeightedGraph(3, ((0, 1, 1.0), (1, 0, 2.0)))

    def test_random_graph_identity(self, rng):
        n = 8
        edges = tuple((i, j, float(rng.uniform(-2, 3))) for i, j in itertools.combinations(range(n), 2)
                      if rng.uniform() < 0.5)
        g = WeightedGraph(n, edges)
        J, off = ising_from_maxcut(g)
        s = rng.choice([-1, 1], n)
        assert maxcut_value(g, conf_from_spins(s)) == pytest.approx(off - ising_h(J, s) / 4, abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(2, 12), seed=st.integers(0, 2**32 - 1))
    def test_identity_all_assignments(self, n, seed):
        rng = np.random.default_rng(seed)
        edges = tuple((i, j, float(rng.integers(-3, 4))) for i, j in itertools.combinations(range(n), 2)
                      if rng.uniform() < 0.4)
        g = WeightedGraph(n, edges)
        J, off = ising_from_maxcut(g)
        S = np.array(list(itertools.product((1, -1), repeat=n)))
        Jd = J.to_dense()
        H = -np.einsum("ki,ij,kj->k", S, Jd, S)
        w = np.array([e[2] for e in edges])
        ii = np.array([e[0] for e in edges], dtype=int)
        jj = np.array([e[1] for e in edges], dtype=int)
        cuts = (S[:, ii] != S[:, jj]) @ w if edges else np.zeros(len(S))
        np.testing.assert_allclose(cuts, off - H / 4, atol=1e-9)
        # spot-check the library path on a few assignments
        for s in S[:: max(1, len(S) // 8)]:
            assert maxcut_value(g, conf_from_spins(s)) == pytest.approx(off - ising_h(J, s) / 4, abs=1e-9)
