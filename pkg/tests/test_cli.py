import os

import pytest

from app.cli import apply_overrides, build_parser, main


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--output-dir", str(out)])
    return code, out


def small_return_stats(*extra):
    return [
        "return-stats",
        "--seed",
        "4",
        "--rho",
        "0.015625",
        "0.00390625",
        "--n-centers",
        "12",
        "--n-starts",
        "3",
        "--a-frak",
        "1.0",
        "--bootstrap",
        "10",
        *extra,
    ]


class TestParser:
    def test_seed_is_required(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["chen-stein"])
        assert exc.value.code == 2

    def test_dotted_flags_build_nested_tables(self):
        args = build_parser().parse_args(["return-stats", "--seed", "1", "--system", "cat", "--metric", "torus_euclid"])
        document = apply_overrides({"system": {"kind": "doubling"}, "n_centers": 5}, args)
        assert document["system"] == {"kind": "cat", "metric": "torus_euclid"}
        assert document["n_centers"] == 5
        assert document["seed"] == 1


class TestExitCodes:
    def test_success(self, tmp_path):
        code, out = run(tmp_path, "cs", "chen-stein", "--seed", "1", "--n-markov", "3")
        assert code == 0
        assert sorted(os.listdir(out)) == ["chen_stein.csv", "chen_stein.json"]

    def test_config_file(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text('rho_grid = [0.015625]\nn_centers = 4\nn_starts_per_center = 2\n\n[system]\nkind = "doubling"\n')
        code, out = run(tmp_path, "rs", "return-stats", "--config", str(config), "--seed", "2", "--bootstrap", "5")
        assert code == 0
        assert (out / "summary.csv").exists()

    def test_invalid_config(self, tmp_path):
        code, _ = run(tmp_path, "bad", "return-stats", "--seed", "1", "--rho", "0.01", "0.1")
        assert code == 2

    def test_missing_config_file(self, tmp_path):
        code, _ = run(tmp_path, "missing", "return-stats", "--seed", "1", "--config", str(tmp_path / "nope.toml"))
        assert code == 2

    def test_hypothesis_violation(self, tmp_path):
        code, _ = run(tmp_path, "ns", "chen-stein", "--seed", "1", "--n-markov", "2", "--initial", "1", "0")
        assert code == 3

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("x")
        code = main(["chen-stein", "--seed", "1", "--n-markov", "1", "--output-dir", str(blocker)])
        assert code == 4


class TestDeterminism:
    def test_reruns_are_byte_identical(self, tmp_path):
        code_a, a = run(tmp_path, "a", *small_return_stats("--workers", "1"))
        code_b, b = run(tmp_path, "b", *small_return_stats("--workers", "3"))
        assert code_a == code_b == 0
        names = sorted(os.listdir(a))
        assert names == sorted(os.listdir(b))
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
