import numpy as np
import pytest

from apgossip.errors import ContractError, ParseError
from apgossip.model import (
    ModelParams,
    ModelSpec,
    grad_weighted_sum,
    init_params,
    load_params,
    logit_weighted_sum,
    save_params,
    score,
    score_and_grad,
    score_grads,
    scores,
)
from conftest import fd_gradient, rel_err


class TestLayout:
    def test_linear_layout(self):
        p = init_params(ModelSpec("linear", 3), seed=0)
        assert p.theta.shape == (4,)
        assert p.theta[-1] == 0.0  # bias starts at zero

    def test_mlp_layout(self):
        spec = ModelSpec("mlp", 300, 28)
        assert spec.n_params == 300 * 28 + 28 + 28 + 1 == 8457
        p = init_params(spec, seed=0)
        assert p.theta.shape == (8457,)

    def test_bad_specs(self):
        with pytest.raises(ContractError):
            ModelSpec("conv", 3)
        with pytest.raises(ContractError):
            ModelSpec("mlp", 3, 0)
        with pytest.raises(ContractError):
            ModelParams(ModelSpec("linear", 3), np.zeros(5))


class TestInit:
    def test_deterministic_in_seed(self):
        a = init_params(ModelSpec("mlp", 10, 5), seed=4)
        b = init_params(ModelSpec("mlp", 10, 5), seed=4)
        assert np.array_equal(a.theta, b.theta)
        c = init_params(ModelSpec("mlp", 10, 5), seed=5)
        assert not np.array_equal(a.theta, c.theta)

    def test_xavier_variance(self):
        # Monte-Carlo estimate: W1 entries of a 300->28 layer should have
        # sample variance 2 / (300 + 28) within 10%.
        spec = ModelSpec("mlp", 300, 28)
        w1 = init_params(spec, seed=1).theta[: 300 * 28]
        target = 2.0 / (300 + 28)
        assert abs(w1.var() - target) < 0.1 * target

    def test_biases_zero(self):
        spec = ModelSpec("mlp", 6, 4)
        theta = init_params(spec, seed=2).theta
        hd = 6 * 4
        assert np.all(theta[hd : hd + 4] == 0.0)
        assert theta[-1] == 0.0


class TestScore:
    def test_zero_params_give_half(self, rng):
        for spec in (ModelSpec("linear", 5), ModelSpec("mlp", 5, 3)):
            p = ModelParams(spec, np.zeros(spec.n_params))
            assert score(p, rng.standard_normal(5)) == 0.5

    def test_sigmoid_asymptotes(self):
        p = ModelParams(ModelSpec("linear", 1), np.array([30.0, 0.0]))
        assert score(p, np.array([1.0])) > 1 - 1e-13
        assert score(p, np.array([-1.0])) < 1e-13

    def test_scores_open_interval(self, rng):
        spec = ModelSpec("mlp", 4, 3)
        for _ in range(50):
            p = ModelParams(spec, rng.normal(0, 5, spec.n_params))
            h = scores(p, rng.normal(0, 5, (20, 4)))
            assert np.all(h > 0.0)
            assert np.all(h < 1.0)

    def test_dimension_mismatch(self):
        p = init_params(ModelSpec("linear", 3), seed=0)
        with pytest.raises(ContractError):
            score(p, np.zeros(4))

    def test_score_and_grad_score_matches_score(self, rng):
        p = init_params(ModelSpec("mlp", 6, 4), seed=3)
        z = rng.standard_normal(6)
        h, _ = score_and_grad(p, z)
        assert h == score(p, z)


class TestGradients:
    def test_linear_closed_form(self, rng):
        p = ModelParams(ModelSpec("linear", 4), rng.standard_normal(5))
        z = rng.standard_normal(4)
        h, g = score_and_grad(p, z)
        expected = h * (1 - h) * np.append(z, 1.0)
        assert np.allclose(g, expected, rtol=1e-14)

    @pytest.mark.parametrize("kind,hidden", [("linear", 0), ("mlp", 5)])
    def test_fd_oracle_100_random_pairs(self, rng, kind, hidden):
        spec = ModelSpec(kind, 6, hidden)
        for _ in range(100):
            p = ModelParams(spec, rng.normal(0, 1.0, spec.n_params))
            z = rng.standard_normal(6)
            _, g = score_and_grad(p, z)
            fd = fd_gradient(lambda q: score(q, z), spec, p.theta)
            assert rel_err(g, fd) < 1e-5

    def test_relu_gates_w1_rows(self, rng):
        spec = ModelSpec("mlp", 3, 2)
        theta = rng.standard_normal(spec.n_params)
        p = ModelParams(spec, theta)
        z = rng.standard_normal(3)
        w1 = theta[:6].reshape(2, 3)
        pre = w1 @ z + theta[6:8]
        _, g = score_and_grad(p, z)
        for unit in range(2):
            if pre[unit] < 0:
                assert np.all(g[unit * 3 : (unit + 1) * 3] == 0.0)

    def test_weighted_sums_match_jacobian(self, rng):
        for spec in (ModelSpec("linear", 4), ModelSpec("mlp", 4, 3)):
            p = ModelParams(spec, rng.standard_normal(spec.n_params))
            x = rng.standard_normal((7, 4))
            w = rng.standard_normal(7)
            h, jac = score_grads(p, x)
            assert np.allclose(grad_weighted_sum(p, x, w), jac.T @ w, rtol=1e-12, atol=1e-14)
            logit_jac = jac / (h * (1 - h))[:, None]
            assert np.allclose(
                logit_weighted_sum(p, x, w), logit_jac.T @ w, rtol=1e-10, atol=1e-12
            )


class TestSerialization:
    @pytest.mark.parametrize("kind,hidden", [("linear", 0), ("mlp", 3)])
    def test_roundtrip_exact(self, tmp_path, rng, kind, hidden):
        spec = ModelSpec(kind, 5, hidden)
        p = ModelParams(spec, rng.standard_normal(spec.n_params))
        path = tmp_path / "model.txt"
        save_params(p, str(path))
        back = load_params(str(path))
        assert back.spec == spec
        assert np.array_equal(back.theta, p.theta)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "model.txt"
        path.write_text("conv 3\n0 0 0\n")
        with pytest.raises(ParseError):
            load_params(str(path))

    def test_wrong_count(self, tmp_path):
        path = tmp_path / "model.txt"
        path.write_text("linear 3\n0.0 1.0\n")
        with pytest.raises(ParseError, match="expected 4"):
            load_params(str(path))
