"""Command line: exit codes, output files and determinism."""

import json

import pytest

from zico_nas.cli import main
from zico_nas.space import PRESETS, Genome, count_params, genome_serialize

SMALL = ["--data", "gratings:per_class=20", "--batch-size", "16"]


def write_genome(tmp_path, genes=(3, 0, 3, 3, 0, 3), name="g.json"):
    path = tmp_path / name
    path.write_text(genome_serialize(Genome("cell", genes)))
    return str(path)


def run(tmp_path, *argv):
    return main(list(argv) + ["--out", str(tmp_path / "out")])


class TestScore:
    def test_params_exact(self, tmp_path, capsys):
        genes = (3, 0, 3, 3, 0, 3)
        assert run(tmp_path, "score", "--genome", write_genome(tmp_path, genes), "--proxy", "params", *SMALL) == 0
        obj = json.loads(capsys.readouterr().out)
        assert obj["value"] == count_params(PRESETS["cell-desk64"].to_spec(Genome("cell", genes), (1, 8, 8), 10))
        assert json.loads((tmp_path / "out" / "score.json").read_text())["value"] == obj["value"]

    def test_zico_repeatable(self, tmp_path, capsys):
        g = write_genome(tmp_path)
        assert run(tmp_path, "score", "--genome", g, *SMALL) == 0
        first = capsys.readouterr().out
        assert run(tmp_path, "score", "--genome", g, *SMALL) == 0
        assert capsys.readouterr().out == first

    def test_one_batch_rejected(self, tmp_path):
        assert run(tmp_path, "score", "--genome", write_genome(tmp_path), "--batches", "1", *SMALL) == 2

    def test_bad_gene(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"space": "cell", "genes": [0, 0, 9, 0, 0, 0]}')
        assert run(tmp_path, "score", "--genome", str(path), *SMALL) == 2

    def test_missing_genome_file(self, tmp_path):
        assert run(tmp_path, "score", "--genome", str(tmp_path / "nope.json"), *SMALL) == 2

    def test_unknown_proxy(self, tmp_path):
        assert run(tmp_path, "score", "--genome", write_genome(tmp_path), "--proxy", "zen") == 2


class TestSearch:
    def test_zero_steps_emits_initial(self, tmp_path):
        assert run(tmp_path, "search", "--steps", "0", *SMALL) == 0
        best = json.loads((tmp_path / "out" / "search_best.json").read_text())
        assert best["genes"] == [0] * 6
        assert len((tmp_path / "out" / "search_log.jsonl").read_text().splitlines()) == 2

    def test_infeasible_budget(self, tmp_path):
        assert run(tmp_path, "search", "--budget", "10", *SMALL) == 2

    def test_deterministic_log(self, tmp_path):
        args = ["search", "--steps", "30", "--proxy", "params", *SMALL]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("search_log.jsonl", "search_best.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestBounds:
    def test_zero_trials(self, tmp_path):
        assert run(tmp_path, "bounds", "--trials", "0") == 2

    def test_linear_quick(self, tmp_path, capsys):
        assert run(tmp_path, "bounds", "--which", "linear", "--trials", "50") == 0
        assert "mean-gradient bound satisfied: 50/50" in capsys.readouterr().out
        assert (tmp_path / "out" / "linear_mean_bound.csv").exists()


class TestConfig:
    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"stepz": 3}')
        assert run(tmp_path, "search", "--config", str(cfg)) == 2

    def test_config_sets_default_and_flags_win(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"steps": 0, "proxy": "params", "batch_size": 16,
                                   "data": "gratings:per_class=20"}))
        assert run(tmp_path, "search", "--config", str(cfg)) == 0
        assert len((tmp_path / "out" / "search_log.jsonl").read_text().splitlines()) == 2
        assert run(tmp_path, "search", "--config", str(cfg), "--steps", "3") == 0
        assert len((tmp_path / "out" / "search_log.jsonl").read_text().splitlines()) == 5

    def test_not_json(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{steps")
        assert run(tmp_path, "search", "--config", str(cfg)) == 2


class TestBench:
    def test_sample_too_small(self, tmp_path):
        assert run(tmp_path, "bench", "--sample", "1", *SMALL) == 2

    def test_bad_jobs(self, tmp_path):
        assert run(tmp_path, "bench", "--jobs", "0", *SMALL) == 2

    def test_bad_train_option(self, tmp_path):
        assert run(tmp_path, "bench", "--train", "speed=3", "--sample", "3", *SMALL) == 2

    @pytest.mark.parametrize("jobs", ["1", "2"])
    def test_outputs_do_not_depend_on_jobs(self, tmp_path, jobs):
        args = ["bench", "--sample", "3", "--train", "epochs=1", *SMALL]
        assert main(args + ["--out", str(tmp_path / "ref")]) == 0
        assert main(args + ["--jobs", jobs, "--out", str(tmp_path / "j")]) == 0
        for name in ("bench.csv", "bench_report.json"):
            assert (tmp_path / "ref" / name).read_bytes() == (tmp_path / "j" / name).read_bytes()

    def test_ablate_from_records(self, tmp_path):
        args = ["--sample", "3", "--train", "epochs=1", *SMALL]
        assert run(tmp_path, "bench", *args) == 0
        csv = str(tmp_path / "out" / "bench.csv")
        # the batch-size axis goes up to 128, so two batches need 256 samples
        assert run(tmp_path, "ablate", "--axis", "batchsize", "--records", csv,
                   "--data", "gratings:per_class=40") == 0
        lines = (tmp_path / "out" / "ablation_batchsize.csv").read_text().splitlines()
        assert len(lines) == 1 + 8
