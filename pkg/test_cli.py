import numpy as np
import orjson
import pytest

from artifacts import read_header, read_table
from cli import float_list, guess_count, int_range, run
from markov_model import Smoothing, SmoothingKind, enumerate_best_first, load_model, save_model, train_sequences
from sax_core import SaxParams, encode_dataset
from trace_io import parse_trace_file, DELIMITED_TEXT

SMALL = ["--seed", "5", "--threads", "2", "--log-level", "WARNING"]


@pytest.fixture
def synth_csv(tmp_path):
    path = tmp_path / "synth.csv"
    assert run(["gen-synth", "--accounts", "10", "--samples", "3", "--points", "32", "--out", str(path)] + SMALL) == 0
    return path


def test_argument_types():
    assert int_range("4..7") == [4, 5, 6, 7]
    assert int_range("4,6") == [4, 6]
    assert guess_count("2^10") == 1024
    assert float_list("0.1,0.5") == [0.1, 0.5]


def test_gen_synth_is_byte_identical_on_rerun(synth_csv, tmp_path):
    again = tmp_path / "again.csv"
    assert run(["gen-synth", "--accounts", "10", "--samples", "3", "--points", "32", "--out", str(again)] + SMALL) == 0
    assert synth_csv.read_bytes() == again.read_bytes()
    dataset = parse_trace_file(synth_csv.read_bytes(), DELIMITED_TEXT)
    assert len(dataset) == 30
    assert read_header(synth_csv)["subcommand"] == "gen-synth"


def test_sweep_params(synth_csv, tmp_path, capsys):
    grid = tmp_path / "grid.csv"
    compare = tmp_path / "compare.csv"
    code = run(["sweep-params", "--dataset", str(synth_csv), "--omega", "4..5", "--beta", "3..4",
                "--impostor-cap", "5", "--compare-out", str(compare), "--out", str(grid)] + SMALL)
    assert code == 0
    table = read_table(grid)
    assert list(zip(table.omega, table.beta)) == [(4, 3), (4, 4), (5, 3), (5, 4)]
    assert list(read_table(compare).recognizer) == ["sax", "dtw", "protractor"]
    assert "Best:" in capsys.readouterr().out


def test_score_prints_a_record(synth_csv, capsys):
    code = run(["score", "--recognizer", "dtw", "--template", str(synth_csv), "--attempt", str(synth_csv)] + SMALL)
    assert code == 0
    record = orjson.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert record["recognizer"] == "dtw"
    assert record["score"] == 0.0


def test_train_then_one_guess_attack(synth_csv, tmp_path):
    model_path = tmp_path / "model.jsonl"
    curve_path = tmp_path / "curve.csv"
    sax = ["--omega", "4", "--beta", "3"]
    assert run(["train", "--dataset", str(synth_csv), "--n", "2", "--smoothing", "none",
                "--out", str(model_path)] + sax + SMALL) == 0
    assert run(["attack", "--model", str(model_path), "--targets", str(synth_csv), "--max-guesses", "1",
                "--out", str(curve_path)] + SMALL) == 0

    model = load_model(model_path)
    top = next(enumerate_best_first(model, 1)).symbols
    words = encode_dataset(parse_trace_file(synth_csv.read_bytes(), DELIMITED_TEXT), SaxParams(omega=4, beta=3))
    targets = [ws[0].flat() for ws in words.values()]
    curve = read_table(curve_path)
    assert curve.guesses.tolist() == [1]
    assert curve.cracked_fraction.iloc[0] == pytest.approx(targets.count(top) / len(targets))


def test_crossval_attack(synth_csv, tmp_path):
    out = tmp_path / "cv.csv"
    assert run(["attack", "--dataset", str(synth_csv), "--folds", "2", "--omega", "4", "--beta", "3", "--n", "2",
                "--smoothing", "additive", "--max-guesses", "2^6", "--out", str(out)] + SMALL) == 0
    assert read_table(out).guesses.tolist() == [1, 2, 4, 8, 16, 32, 64]


@pytest.mark.parametrize("method", ["histogram", "stream"])
def test_pgm_on_uniform_model(uniform_model, tmp_path, method):
    model_path = save_model(uniform_model, tmp_path / "uniform.jsonl")
    out = tmp_path / "report.csv"
    assert run(["pgm", "--model", str(model_path), "--alpha", "0.2", "--method", method,
                "--max-guesses", "64", "--out", str(out)] + SMALL) == 0
    row = read_table(out).iloc[0]
    assert row.mu_alpha == 13
    assert row.g_alpha == pytest.approx(51 / 64 * 13 + 91 / 64)
    assert row.method == method


def test_pgm_stream_budget_is_reported_as_such(tmp_path, capsys):
    model = train_sequences([[0, 1, 2], [2, 1, 0]], alphabet_size=3, n=2,
                            smoothing=Smoothing(SmoothingKind.ADDITIVE, 1.0), word_length=3)
    model_path = save_model(model, tmp_path / "complete.jsonl")
    out = tmp_path / "report.csv"
    base = ["pgm", "--model", str(model_path), "--alpha", "0.9", "--method", "stream", "--out", str(out)] + SMALL
    assert run(base + ["--max-guesses", "27"]) == 0
    assert read_table(out).lambda_mu.iloc[0] >= 0.9
    capsys.readouterr()

    assert run(base + ["--max-guesses", "2"]) == 1
    err = capsys.readouterr().err
    assert "budget" in err
    assert "incomplete" not in err


def test_bounds(synth_csv, tmp_path):
    out = tmp_path / "bounds.csv"
    assert run(["bounds", "--dataset", str(synth_csv), "--fractions", "0.5,1", "--alpha", "0.1",
                "--omega", "4", "--beta", "3", "--bucket-width", "0.05", "--out", str(out)] + SMALL) == 0
    table = read_table(out)
    assert sorted(set(table.bound)) == ["lower", "upper"]
    assert len(table) == 4


def test_pattern_commands(tmp_path, capsys):
    corpus = tmp_path / "patterns.txt"
    report = tmp_path / "pattern_report.csv"
    assert run(["pattern", "gen-synth", "--count", "200", "--out", str(corpus)] + SMALL) == 0
    assert run(["pattern", "pgm", "--corpus", str(corpus), "--alpha", "0.2", "--out", str(report)] + SMALL) == 0
    assert read_table(report).bits.iloc[0] > 0
    assert run(["pattern", "count"] + SMALL) == 0
    assert "389112 valid unlock patterns" in capsys.readouterr().out


def test_bias_commands(synth_csv, tmp_path):
    heatmap = tmp_path / "heatmap.csv"
    ngrams = tmp_path / "ngrams.csv"
    assert run(["bias", "heatmap", "--dataset", str(synth_csv), "--grid", "4x4", "--out", str(heatmap)] + SMALL) == 0
    assert len(read_table(heatmap)) == 2 * 16
    assert run(["bias", "ngrams", "--dataset", str(synth_csv), "--n", "2", "--top", "5", "--omega", "4",
                "--beta", "3", "--out", str(ngrams)] + SMALL) == 0
    assert np.all(np.diff(read_table(ngrams)["count"]) <= 0)


def test_exit_codes(synth_csv, tmp_path, capsys):
    assert run(["sweep-params", "--dataset", str(tmp_path / "missing.csv")] + SMALL) == 1
    assert "not found" in capsys.readouterr().err
    assert run(["sweep-params", "--dataset", str(synth_csv), "--omega", "4..5", "--beta", "30"] + SMALL) == 1
    assert run(["sweep-params", "--dataset", str(synth_csv), "--omega", "four"] + SMALL) == 2
    assert run(["no-such-command"]) == 2

    config_file = tmp_path / "bad.json"
    config_file.write_text('{"colour": "blue"}')
    assert run(["pattern", "count", "--config", str(config_file)] + SMALL) == 1
