import json

import pytest

from app.api.dependencies import build_run_config, build_sweep_config, parse_scores, resolve_seed
from app.datamanager.data_manager_files import curve_csv, parse_config_text, sweep_csv
from app.datamanager.exception_classes import ConfigFileError, InvalidArgumentError, InvalidInputError
from app.schemas.pydantic_models import EpochRecord, MetricsRecord, SweepRow


@pytest.fixture
def config_text():
    """
        Config file with comments, blank lines and mixed key spellings.
        `lr` is left unset so the task default applies.
    """
    return (
        "# quick sort run\n"
        "task = sort\n"
        "\n"
        "N-Samples = 3   # per step\n"
        "epochs=2\n"
        "lr = none\n"
    )


class TestConfigFiles:

    def test_parse(self, config_text):
        assert parse_config_text(config_text) == {"task": "sort", "n_samples": "3", "epochs": "2", "lr": None}

    @pytest.mark.parametrize("text, line", [
        ("task = sort\njust words\n", 2),
        ("= 3\n", 1),
        ("seed = 1\nseed = 2\n", 2),
    ])
    def test_malformed(self, text, line):
        with pytest.raises(ConfigFileError) as exc_info:
            parse_config_text(text, "run.cfg")
        assert exc_info.value.line_number == line
        assert f"run.cfg:{line}" in str(exc_info.value)

    def test_missing_file(self, data_manager, tmp_path):
        with pytest.raises(ConfigFileError):
            data_manager.read_config(tmp_path / "absent.cfg")

    def test_flags_override_file(self, config_text, tmp_path):
        # Setup
        path = tmp_path / "run.cfg"
        path.write_text(config_text, encoding="utf-8")

        # Execute
        config = build_run_config(path, epochs=4, seed=None)

        # Verify
        assert (config.task, config.n_samples, config.epochs, config.lr, config.seed) == ("sort", 3, 4, 0.05, 0)

    def test_unknown_key_is_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("task = sort\nbogus = 1\n", encoding="utf-8")
        with pytest.raises(ValueError):
            build_run_config(path)

    def test_sweep_config_from_file(self, tmp_path):
        path = tmp_path / "sweep.cfg"
        path.write_text("taus = 1,2\nsamples_unused = \nseed = 7\n", encoding="utf-8")
        config = build_sweep_config(path, n_samples=3)
        assert (config.taus, config.n_samples, config.seed) == ((1.0, 2.0), 3, 7)


class TestSeedsAndScores:

    def test_seed_precedence(self, monkeypatch):
        monkeypatch.setenv("UNISORT_SEED", "11")
        assert resolve_seed(5, {"seed": "3"}) == 5
        assert resolve_seed(None, {"seed": "3"}) == 3
        assert resolve_seed(None) == 11
        monkeypatch.delenv("UNISORT_SEED")
        assert resolve_seed(None) == 0

    def test_invalid_env_seed(self, monkeypatch):
        monkeypatch.setenv("UNISORT_SEED", "abc")
        with pytest.raises(InvalidArgumentError):
            resolve_seed(None)

    def test_parse_scores(self):
        assert parse_scores(["9", "1,5", "2"]) == [9.0, 1.0, 5.0, 2.0]

    @pytest.mark.parametrize("tokens", [[], ["a"], ["1", "inf"], [","]])
    def test_invalid_scores(self, tokens):
        with pytest.raises(InvalidInputError):
            parse_scores(tokens)


class TestResultFiles:

    def test_curve_csv(self):
        text = curve_csv([EpochRecord(epoch=1, train_loss=0.1, valid_metric=0.5)])
        assert text == "epoch,train_loss,valid_metric\n1,0.10000000000000001,0.5\n"

    def test_sweep_csv(self):
        assert sweep_csv([SweepRow(tau=2.0, log_variance=-1.25)]) == "tau,log_variance\n2,-1.25\n"

    def test_write_files(self, data_manager, tmp_path):
        # Setup
        rows = [SweepRow(tau=1.0, log_variance=0.5)]
        metrics = MetricsRecord(task="sort", mode="deterministic", tau=1.0, exact_perm_accuracy=0.5,
                                element_rank_accuracy=0.75)

        # Execute
        sweep_path = data_manager.write_sweep(rows, tmp_path / "nested" / "sweep.csv")
        json_path = data_manager.write_json(metrics, tmp_path / "metrics.json")

        # Verify
        assert sweep_path.read_bytes() == b"tau,log_variance\n1,0.5\n"
        assert json.loads(json_path.read_text())["element_rank_accuracy"] == 0.75
