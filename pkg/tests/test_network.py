import numpy as np
import pytest

from icenet.network import (Architecture, NetworkParams, StaleCacheError, backward, forward, init, predict,
                            zeros)
from icenet.tensor_engine import DimensionError
from conftest import make_problem
from gradcheck import group_errors, numeric_grad
from oracles import forward_loops


def random_arch(rng):
    n_cat = int(rng.integers(0, 3))
    cards = tuple(int(k) for k in rng.integers(2, 6, size=n_cat))
    dims = tuple(int(rng.integers(1, k)) for k in cards)
    layers = tuple(int(q) for q in rng.integers(1, 6, size=int(rng.integers(1, 4))))
    return Architecture(int(rng.integers(1, 4)), cards, dims, layers)


def random_inputs(arch, n, rng):
    x_cont = rng.uniform(0, 1, size=(n, arch.n_continuous))
    x_cat = np.stack([rng.integers(1, k + 1, size=n) for k in arch.cardinalities], axis=1) \
        if arch.cardinalities else np.zeros((n, 0), np.int64)
    return x_cont, x_cat


class TestArchitecture:
    def test_defaults(self):
        a = Architecture(3, (6, 11), (5, 5))
        assert a.layers == (32, 16, 8)
        assert a.input_dim == 13
        assert a.dims == (13, 32, 16, 8)

    @pytest.mark.parametrize("kw", [dict(layers=()), dict(layers=(4, 0)), dict(embedding_dims=(6,)),
                                    dict(embedding_dims=(5, 5)), dict(activation="tanh")])
    def test_invalid(self, kw):
        base = dict(n_continuous=2, cardinalities=(6,), embedding_dims=(5,))
        base.update(kw)
        with pytest.raises(ValueError):
            Architecture(**base)

    def test_for_schema_caps_embedding_dim(self, problem):
        schema = problem[1]
        a = Architecture.for_schema(schema)
        assert a.embedding_dims == (3,)  # K = 4
        assert Architecture.from_dict(a.to_dict()) == a


class TestInit:
    def test_deterministic(self):
        a = Architecture(3, (6,), (5,))
        p, q = init(a, 7), init(a, 7)
        for x, y in zip(p.arrays(), q.arrays()):
            np.testing.assert_array_equal(x, y)
        assert not np.array_equal(init(a, 8).weights[0], p.weights[0])

    def test_biases_zero_and_bounds(self):
        a = Architecture(3, (6,), (5,))
        p = init(a, 0)
        assert all(not b.any() for b in p.biases) and p.head_bias[0] == 0
        for w in p.weights:
            assert np.abs(w).max() <= np.sqrt(6.0 / sum(w.shape))

    def test_weight_distribution_moments(self):
        a = Architecture(300, (), (), (334,))  # 100,200 weights in layer 1
        w = init(a, 1).weights[0].ravel()
        limit = np.sqrt(6.0 / (300 + 334))
        sigma = limit / np.sqrt(3.0)
        assert abs(w.mean()) < 3 * sigma / np.sqrt(w.size)
        assert w.var() == pytest.approx(sigma**2, rel=0.02)

    def test_embedding_distribution(self):
        a = Architecture(1, (2001,), (50,), (2,))
        e = init(a, 2).embeddings[0].ravel()
        assert abs(e.mean()) < 3 * 0.1 / np.sqrt(e.size)
        assert e.std() == pytest.approx(0.1, rel=0.02)


class TestForward:
    def test_constant_network(self):
        a = Architecture(2, (3,), (2,), (4, 2))
        p = zeros(a)
        p.head_bias[0] = 0.7
        mu, _ = forward(p, np.random.default_rng(0).uniform(size=(5, 2)), np.array([[1], [2], [3], [1], [2]]))
        np.testing.assert_allclose(mu, np.exp(0.7), rtol=1e-15)
        p.head_bias[0] = 0.0
        np.testing.assert_array_equal(forward(p, np.zeros((1, 2)), [[1]])[0], [1.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a = random_arch(rng)
        p = init(a, seed)
        for b in p.biases:
            b[...] = rng.normal(0, 0.3, size=b.shape)
        xc, xk = random_inputs(a, 7, rng)
        np.testing.assert_allclose(forward(p, xc, xk)[0], forward_loops(p, xc, xk), rtol=1e-13)

    def test_deterministic_and_positive(self, problem):
        _, _, data, _, p = problem
        m1, _ = forward(p, data.x_cont, data.x_cat)
        m2, _ = forward(p, data.x_cont, data.x_cat)
        np.testing.assert_array_equal(m1, m2)
        assert np.all(m1 > 0)

    def test_predict_chunks_agree(self, problem):
        _, _, data, _, p = problem
        np.testing.assert_array_equal(predict(p, data.x_cont, data.x_cat, chunk=7),
                                      forward(p, data.x_cont, data.x_cat)[0])

    @pytest.mark.parametrize("xc, xk", [(np.zeros((2, 2)), np.ones((2, 1))), (np.zeros((2, 3)), np.ones((2, 2))),
                                        (np.zeros((2, 3)), np.full((2, 1), 9)), (np.zeros((3, 3)), np.ones((2, 1)))])
    def test_shape_errors(self, problem, xc, xk):
        with pytest.raises(DimensionError):
            forward(problem[4], xc, xk)


class TestBackward:
    def test_zero_upstream(self, problem):
        _, _, data, _, p = problem
        _, cache = forward(p, data.x_cont, data.x_cat)
        assert backward(p, cache, np.zeros(len(data))).is_zero()

    def test_constant_network_head_bias(self):
        a = Architecture(2, (), (), (3,))
        p = zeros(a)
        p.head_bias[0] = 0.3
        mu, cache = forward(p, np.ones((1, 2)), np.zeros((1, 0), np.int64))
        tape = backward(p, cache, np.ones(1))
        assert tape.arrays[-1][0] == pytest.approx(mu[0], rel=1e-15)

    def test_stale_cache(self, problem):
        _, _, data, _, p = problem
        _, cache = forward(p, data.x_cont, data.x_cat)
        p.touch()
        with pytest.raises(StaleCacheError):
            backward(p, cache, np.ones(len(data)))
        with pytest.raises(StaleCacheError):
            backward(p.copy(), cache, np.ones(len(data)))

    def test_upstream_length_checked(self, problem):
        _, _, data, _, p = problem
        _, cache = forward(p, data.x_cont, data.x_cat)
        with pytest.raises(DimensionError):
            backward(p, cache, np.ones(3))

    def test_absent_levels_get_zero_gradient(self):
        a = Architecture(1, (5,), (2,), (3,))
        p = init(a, 0)
        xk = np.array([[1], [3], [3]])
        _, cache = forward(p, np.full((3, 1), 0.5), xk)
        g = backward(p, cache, np.ones(3)).arrays[0]
        assert not g[[1, 3, 4]].any()
        assert g[[0, 2]].any()

    def test_finite_differences_20_configurations(self):
        """Every parameter group matches central differences on 20 kink-free random configurations."""
        accepted, seed = 0, 0
        while accepted < 20:
            seed += 1
            rng = np.random.default_rng(100 + seed)
            a = random_arch(rng)
            p = init(a, seed)
            for b in p.biases:
                b[...] = rng.normal(0, 0.2, size=b.shape)
            xc, xk = random_inputs(a, 6, rng)
            w = rng.normal(size=6)
            _, cache = forward(p, xc, xk)
            if min(np.abs(h).min() for h in cache.pre) < 1e-4:
                continue  # a ReLU kink within finite-difference reach
            analytic = backward(p, cache, w).arrays
            errs = group_errors(analytic, numeric_grad(p, lambda q: float(w @ forward(q, xc, xk)[0])))
            assert max(errs) < 1e-5, (seed, errs)
            accepted += 1


class TestSerialisation:
    def test_round_trip_bit_exact(self, tmp_path, problem):
        p = problem[4]
        p.save(tmp_path / "m.json")
        q = NetworkParams.load(tmp_path / "m.json")
        assert q.arch == p.arch
        for x, y in zip(p.arrays(), q.arrays()):
            assert x.tobytes() == y.tobytes()

    def test_shape_mismatch_rejected(self, problem):
        d = problem[4].to_dict()
        d["parameters"] = d["parameters"][:-1]
        with pytest.raises(DimensionError):
            NetworkParams.from_dict(d)

    def test_copy_is_deep(self, problem):
        p = problem[4]
        q = p.copy()
        q.weights[0][0, 0] += 1.0
        assert q.weights[0][0, 0] != p.weights[0][0, 0]
        assert p.n_parameters() == q.n_parameters() == sum(a.size for a in p.arrays())
