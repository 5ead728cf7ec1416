import numpy as np
import pytest

from apgossip.errors import ContractError, NumericalError, ParseError, ValidationError
from apgossip.topology import (
    MixingMatrix,
    complete,
    federated_schedule,
    from_file,
    identity,
    mix,
    ring,
    save_matrix,
    schedule_at,
    spectral_gap,
    static_schedule,
)


def dense_gap_oracle(mat: MixingMatrix) -> float:
    """Spectral norm of W - J via full SVD."""
    j = np.full((mat.n, mat.n), 1.0 / mat.n)
    return float(np.linalg.norm(mat.w - j, 2))


class TestBuilders:
    def test_ring6_published_pattern(self):
        # Circulant: exactly 1/3 on the diagonal and on the two ring
        # neighbors, zero elsewhere.
        w = ring(6).w
        for i in range(6):
            for j in range(6):
                expected = 1.0 / 3.0 if (j - i) % 6 in (0, 1, 5) else 0.0
                assert w[i, j] == expected

    def test_ring3_equals_complete(self):
        assert np.allclose(ring(3).w, np.full((3, 3), 1.0 / 3.0), atol=1e-15)

    def test_ring_small_n_falls_back_to_complete(self):
        assert np.array_equal(ring(1).w, [[1.0]])
        assert np.array_equal(ring(2).w, np.full((2, 2), 0.5))

    def test_row_sums_one(self):
        for n in (3, 4, 7, 20):
            assert np.allclose(ring(n).w.sum(axis=1), 1.0, atol=1e-12)
            assert np.allclose(complete(n).w.sum(axis=1), 1.0, atol=1e-12)

    def test_complete_entries(self):
        assert np.array_equal(complete(1).w, [[1.0]])
        assert np.all(complete(4).w == 0.25)

    def test_validate_passes_builders(self):
        for mat in (ring(6), complete(5), identity(4)):
            mat.validate(tol=1e-12)


class TestFromFile:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "w.txt"
        save_matrix(ring(4), str(path))
        loaded = from_file(str(path))
        assert np.array_equal(loaded.w, ring(4).w)

    def test_bad_row_sum_rejected(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("0.5 0.4\n0.4 0.5\n")
        with pytest.raises(ValidationError, match="row 0"):
            from_file(str(path))

    def test_negative_entry_rejected(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("1.5 -0.5\n-0.5 1.5\n")
        with pytest.raises(ValidationError, match="negative"):
            from_file(str(path))

    def test_asymmetry_rejected(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("0.5 0.5 0.0\n0.0 0.5 0.5\n0.5 0.0 0.5\n")
        with pytest.raises(ValidationError, match="asymmetric"):
            from_file(str(path))

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("0.5 x\n0.5 0.5\n")
        with pytest.raises(ParseError, match="line 1"):
            from_file(str(path))


class TestSchedule:
    def test_federated_q1_is_always_complete(self):
        sched = federated_schedule(4, 1)
        for t in range(5):
            assert np.array_equal(schedule_at(sched, t).w, complete(4).w)

    def test_federated_q5_phases(self):
        sched = federated_schedule(3, 5)
        assert np.array_equal(schedule_at(sched, 3).w, identity(3).w)
        assert np.array_equal(schedule_at(sched, 4).w, complete(3).w)

    def test_static_constant(self):
        sched = static_schedule(ring(4))
        for t in (0, 7, 123):
            assert schedule_at(sched, t) is ring(4) or np.array_equal(
                schedule_at(sched, t).w, ring(4).w
            )

    def test_negative_round_rejected(self):
        with pytest.raises(ContractError):
            schedule_at(static_schedule(ring(4)), -1)


class TestSpectralGap:
    def test_complete_is_zero(self):
        for n in (1, 2, 5, 9):
            assert spectral_gap(complete(n)) == 0.0

    def test_identity(self):
        assert spectral_gap(identity(4)) == pytest.approx(1.0, abs=1e-9)
        assert spectral_gap(identity(1)) == 0.0

    def test_ring4_exact_third(self):
        assert spectral_gap(ring(4)) == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_matches_dense_oracle(self):
        for mat in (ring(5), ring(8), ring(20), identity(6)):
            assert spectral_gap(mat) == pytest.approx(dense_gap_oracle(mat), abs=1e-9)

    def test_random_doubly_stochastic_matches_oracle(self, rng):
        # Symmetrized random walk matrices: W = I - c L of a random graph.
        for trial in range(5):
            n = 6
            a = rng.random((n, n)) < 0.5
            adj = np.triu(a, 1)
            adj = adj + adj.T
            deg = adj.sum(axis=1)
            lap = np.diag(deg) - adj
            w = np.eye(n) - lap / (deg.max() + 1.0)
            mat = MixingMatrix(w)
            mat.validate(tol=1e-9)
            assert spectral_gap(mat) == pytest.approx(dense_gap_oracle(mat), abs=1e-8)

    def test_nonconvergence_reports(self):
        with pytest.raises(NumericalError, match="iterations"):
            spectral_gap(ring(12), rel_tol=0.0, max_iter=3)


class TestMix:
    def test_identity_noop(self, rng):
        v = rng.standard_normal((4, 7))
        assert np.array_equal(mix(identity(4), v), v)

    def test_complete_averages(self, rng):
        v = rng.standard_normal((5, 3))
        out = mix(complete(5), v)
        assert np.allclose(out, v.mean(axis=0), atol=1e-14)

    def test_mean_preserved(self, rng):
        for mat in (ring(6), complete(6)):
            v = rng.standard_normal((6, 11))
            out = mix(mat, v)
            assert np.max(np.abs(out.mean(axis=0) - v.mean(axis=0))) <= 1e-12

    def test_contraction_bound(self, rng):
        # ||Wx - Jx|| <= lambda ||x - Jx||
        for mat in (ring(8), ring(5)):
            lam = spectral_gap(mat)
            for _ in range(20):
                v = rng.standard_normal((mat.n, 6))
                centered = v - v.mean(axis=0)
                out = mix(mat, v)
                out_centered = out - out.mean(axis=0)
                assert np.linalg.norm(out_centered) <= lam * np.linalg.norm(centered) + 1e-9

    def test_shape_mismatch(self, rng):
        with pytest.raises(ContractError):
            mix(ring(4), rng.standard_normal((3, 2)))
