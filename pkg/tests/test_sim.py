import dataclasses
import math

import pytest

from apgossip.data import gen_synthetic, serialize_libsvm
from apgossip.errors import ConfigError
from apgossip.metrics import evaluate
from apgossip.model import load_params
from apgossip.sim import CSV_HEADER, ExperimentConfig, model_output_path, run_experiment, validate_config


def base_cfg(tmp_path, **kw):
    cfg = ExperimentConfig(
        synthetic_n=240,
        synthetic_dim=5,
        synthetic_pos_frac=0.1,
        synthetic_separation=1.5,
        n_nodes=4,
        b=2,
        m=8,
        eta=0.02,
        rounds=12,
        eval_every=4,
        seed=7,
        output=str(tmp_path / "metrics.csv"),
    )
    return dataclasses.replace(cfg, **kw)


class TestValidateConfig:
    def test_default_like_config_ok(self, tmp_path):
        assert validate_config(base_cfg(tmp_path)) == []

    def test_zero_nodes_rejected(self, tmp_path):
        errors = validate_config(base_cfg(tmp_path, n_nodes=0))
        assert any("n_nodes" in e for e in errors)

    def test_topology_file_size_mismatch(self, tmp_path):
        from apgossip.topology import ring, save_matrix

        path = tmp_path / "w.txt"
        save_matrix(ring(3), str(path))
        errors = validate_config(
            base_cfg(tmp_path, topology="file", topology_path=str(path), n_nodes=4)
        )
        assert any("n_nodes=4" in e for e in errors)

    def test_bad_algorithm(self, tmp_path):
        errors = validate_config(base_cfg(tmp_path, algorithm="adam"))
        assert any("algorithm" in e for e in errors)

    def test_run_experiment_raises_on_invalid(self, tmp_path):
        with pytest.raises(ConfigError):
            run_experiment(base_cfg(tmp_path, rounds=0))


class TestRowAccounting:
    def test_t1_two_rows(self, tmp_path):
        rows = run_experiment(base_cfg(tmp_path, rounds=1, eval_every=1))
        assert [r.round for r in rows] == [0, 1]

    def test_ceil_rule_with_final_partial(self, tmp_path):
        rows = run_experiment(base_cfg(tmp_path, rounds=10, eval_every=4))
        assert [r.round for r in rows] == [0, 4, 8, 10]
        assert len(rows) == 1 + math.ceil(10 / 4)

    def test_rounds_strictly_increasing(self, tmp_path):
        rows = run_experiment(base_cfg(tmp_path, rounds=9, eval_every=3))
        rounds = [r.round for r in rows]
        assert rounds == sorted(set(rounds))


class TestDeterminism:
    def test_same_config_byte_identical_csv(self, tmp_path):
        cfg_a = base_cfg(tmp_path, output=str(tmp_path / "a.csv"))
        cfg_b = base_cfg(tmp_path, output=str(tmp_path / "b.csv"))
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        assert open(cfg_a.output, "rb").read() == open(cfg_b.output, "rb").read()

    def test_parallel_matches_serial_bytewise(self, tmp_path):
        cfg_s = base_cfg(tmp_path, output=str(tmp_path / "serial.csv"), parallel=False)
        cfg_p = base_cfg(tmp_path, output=str(tmp_path / "parallel.csv"), parallel=True)
        run_experiment(cfg_s)
        run_experiment(cfg_p)
        assert open(cfg_s.output, "rb").read() == open(cfg_p.output, "rb").read()

    def test_csv_header_exact(self, tmp_path):
        cfg = base_cfg(tmp_path)
        run_experiment(cfg)
        first = open(cfg.output).readline().rstrip("\n")
        assert first == CSV_HEADER == "round,mean_train_surrogate,test_ap,consensus_error,clamp_events,elapsed_ms"

    def test_timing_column_zero_by_default(self, tmp_path):
        rows = run_experiment(base_cfg(tmp_path))
        assert all(r.elapsed_ms == 0 for r in rows)


class TestAlgorithms:
    def test_slate_m_alpha_one_matches_slate_columns(self, tmp_path):
        cfg_s = base_cfg(tmp_path, algorithm="slate", output=str(tmp_path / "s.csv"))
        cfg_m = base_cfg(
            tmp_path,
            algorithm="slate_m",
            alpha=1.0,
            init_batch=cfg_s.b,
            output=str(tmp_path / "m.csv"),
        )
        rows_s = run_experiment(cfg_s)
        rows_m = run_experiment(cfg_m)
        assert [r.test_ap for r in rows_s] == [r.test_ap for r in rows_m]

    def test_federated_q1_matches_complete(self, tmp_path):
        cfg_f = base_cfg(tmp_path, topology="federated", period_q=1, output=str(tmp_path / "f.csv"))
        cfg_c = base_cfg(tmp_path, topology="complete", output=str(tmp_path / "c.csv"))
        run_experiment(cfg_f)
        run_experiment(cfg_c)
        assert open(cfg_f.output, "rb").read() == open(cfg_c.output, "rb").read()

    def test_dpsgd_runs_and_logs(self, tmp_path):
        rows = run_experiment(base_cfg(tmp_path, algorithm="dpsgd", sgd_batch=8))
        assert len(rows) == 4
        assert all(0.0 <= r.test_ap <= 1.0 for r in rows)

    def test_label_skew_partition_runs(self, tmp_path):
        rows = run_experiment(base_cfg(tmp_path, partition_scheme="label_skew"))
        assert rows[-1].round == 12


class TestArtifacts:
    def test_final_model_saved_and_eval_reproduces_ap(self, tmp_path):
        # Explicit test file so eval sees exactly the run's test split.
        test_ds = gen_synthetic(150, 5, 0.1, 1.5, seed=99)
        test_path = tmp_path / "test.svm"
        test_path.write_text(serialize_libsvm(test_ds))
        cfg = base_cfg(tmp_path, test=str(test_path))
        rows = run_experiment(cfg)
        params = load_params(model_output_path(cfg))
        assert evaluate(params, test_ds)["ap"] == rows[-1].test_ap

    def test_incremental_csv_matches_rows(self, tmp_path):
        cfg = base_cfg(tmp_path)
        rows = run_experiment(cfg)
        lines = open(cfg.output).read().strip().splitlines()
        assert len(lines) == len(rows) + 1
        assert lines[1].startswith("0,")

    def test_scaled_run(self, tmp_path):
        rows = run_experiment(base_cfg(tmp_path, scale=True))
        assert len(rows) == 4

    def test_drop_frac_applied(self, tmp_path):
        rows = run_experiment(base_cfg(tmp_path, drop_frac=0.5, synthetic_pos_frac=0.3))
        assert rows[-1].round == 12

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_nonfinite_abort_names_round(self, tmp_path):
        # A 1e308-scale feature overflows the first SGD step to -inf.
        from apgossip.errors import NumericalError

        data = tmp_path / "blowup.svm"
        data.write_text("+1 1:1e308 2:1.0\n-1 1:1.0 2:1.0\n+1 2:2.0\n-1 1:0.5\n")
        cfg = base_cfg(
            tmp_path,
            data=str(data),
            test=str(data),
            n_nodes=1,
            algorithm="dpsgd",
            eta=1e10,
            sgd_batch=4,
            rounds=3,
            eval_every=1,
        )
        with pytest.raises(NumericalError, match="round 1"):
            run_experiment(cfg)
