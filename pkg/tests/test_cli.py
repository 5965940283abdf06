import json

import pytest

from hypoquant.infrastructure.reports import read_csv
from hypoquant.presentation.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run


@pytest.fixture(scope="module")
def small_study(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-study")
    status = run([
        "phantom", "--output", str(root), "--subjects", "9",
        "--width", "32", "--height", "32", "--seed", "3",
    ])
    assert status == EXIT_OK
    return root / "manifest.json"


def _result_files(directory):
    return {
        p.relative_to(directory): p.read_bytes()
        for p in directory.rglob("*")
        if p.is_file() and p.name != "run.log"
    }


class TestUsage:
    def test_unknown_flag(self, capsys):
        assert run(["binary", "--bogus"]) == EXIT_USAGE
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert run([]) == EXIT_USAGE

    def test_invalid_worker_count(self, small_study, tmp_path):
        status = run(["binary", "--manifest", str(small_study), "--output", str(tmp_path),
                      "--workers", "0"])
        assert status == EXIT_USAGE

    def test_out_of_range_fraction(self, small_study, tmp_path):
        status = run(["nonbinary", "--manifest", str(small_study), "--output", str(tmp_path),
                      "--fraction", "1.5"])
        assert status == EXIT_USAGE


class TestDataErrors:
    def test_missing_manifest(self, tmp_path):
        status = run(["binary", "--manifest", str(tmp_path / "none.json"),
                      "--output", str(tmp_path / "out")])
        assert status == EXIT_DATA

    def test_reference_mode_without_rectangle(self, study_writer, tmp_path):
        manifest = study_writer([{"id": "a"}, {"id": "b"}, {"id": "c"}])
        status = run(["binary", "--manifest", str(manifest), "--threshold", "reference",
                      "--output", str(tmp_path / "out")])
        assert status == EXIT_DATA

    def test_adaptive_mode_needs_labels(self, study_writer, tmp_path):
        manifest = study_writer([{"id": "a"}, {"id": "b"}, {"id": "c"}])
        out = tmp_path / "out"
        status = run(["binary", "--manifest", str(manifest), "--output", str(out)])
        assert status == EXIT_DATA
        events = [json.loads(line) for line in (out / "run.log").read_text().splitlines()]
        assert events[0]["type"] == "run_started"
        assert events[-1]["type"] == "error"

    def test_evaluate_against_unlabeled_truth(self, study_writer, tmp_path):
        manifest = study_writer([{"id": "a"}, {"id": "b"}, {"id": "c"}])
        ranking = tmp_path / "ranking.csv"
        ranking.write_text("rank,id\n1,a\n2,b\n3,c\n")
        out = tmp_path / "eval"
        status = run(["evaluate", "--predicted", str(ranking), "--truth", str(manifest),
                      "--output", str(out)])
        assert status == EXIT_DATA
        events = [json.loads(line) for line in (out / "run.log").read_text().splitlines()]
        assert events[-1]["error_type"] == "UnlabeledDatasetError"
        assert events[-1]["error"].endswith("a, b, c")

    def test_variance_sweep_needs_labels(self, study_writer, tmp_path):
        manifest = study_writer([{"id": "a"}, {"id": "b"}, {"id": "c"}],
                                reference_rect=[0, 0, 2, 2])
        out = tmp_path / "out"
        status = run(["nonbinary", "--manifest", str(manifest), "--output", str(out),
                      "--threshold", "reference", "--fraction-sweep", "0.5,0.9"])
        assert status == EXIT_DATA
        assert not (out / "variance_sweep.csv").exists()
        events = [json.loads(line) for line in (out / "run.log").read_text().splitlines()]
        assert events[-1]["type"] == "error"


class TestSubcommands:
    def test_phantom_outputs(self, small_study):
        root = small_study.parent
        assert (root / "planted.csv").is_file()
        assert len(list((root / "images").glob("*.pgm"))) == 9
        assert len(list((root / "masks").glob("*.pbm"))) == 18

    def test_binary(self, small_study, tmp_path):
        status = run(["binary", "--manifest", str(small_study), "--output", str(tmp_path),
                      "--k", "51", "--tessellation", "4"])
        assert status == EXIT_OK
        rows = read_csv(tmp_path / "hypoload.csv")
        assert len(rows) == 9
        assert list(rows[0]) == ["id", "threshold", "hypo_count", "total", "hypoload",
                                 "f1", "f2", "f3", "f4"]
        report = read_csv(tmp_path / "threshold_report.csv")
        assert len(report) == 51
        assert sum(row["chosen"] == "1" for row in report) == 1
        ranking = read_csv(tmp_path / "ranking.csv")
        assert [row["rank"] for row in ranking] == [str(i) for i in range(1, 10)]
        events = [json.loads(line) for line in (tmp_path / "run.log").read_text().splitlines()]
        assert events[-1]["type"] == "run_completed"
        assert "threshold_selected" in {event["type"] for event in events}

    def test_reference_threshold_uses_manifest_rect(self, small_study, tmp_path):
        status = run(["binary", "--manifest", str(small_study), "--output", str(tmp_path),
                      "--threshold", "reference"])
        assert status == EXIT_OK
        assert not (tmp_path / "threshold_report.csv").exists()

    def test_nonbinary_with_sweep(self, small_study, tmp_path):
        status = run(["nonbinary", "--manifest", str(small_study), "--output", str(tmp_path),
                      "--fraction-sweep", "0.5,0.7,0.9"])
        assert status == EXIT_OK
        distances = read_csv(tmp_path / "distances.csv")
        assert min(float(row["distance"]) for row in distances) == 0.0
        sweep = read_csv(tmp_path / "variance_sweep.csv")
        assert [row["fraction"] for row in sweep] == ["0.5", "0.7", "0.9"]

    def test_features(self, small_study, tmp_path):
        status = run(["features", "--manifest", str(small_study), "--output", str(tmp_path),
                      "--sampling", "shuffle"])
        assert status == EXIT_OK
        assert len(read_csv(tmp_path / "features_binary.csv")) == 9
        assert len(read_csv(tmp_path / "features_nonbinary.csv")) == 9

    def test_correlate_writes_three_heatmaps(self, small_study, tmp_path):
        status = run(["correlate", "--manifest", str(small_study), "--output", str(tmp_path),
                      "--tessellation", "5", "--features", "binary,nonbinary"])
        assert status == EXIT_OK
        for pair in ("binary_binary", "nonbinary_nonbinary", "binary_nonbinary"):
            assert (tmp_path / f"heatmap_{pair}.csv").is_file()
            assert (tmp_path / f"heatmap_{pair}.ppm").read_bytes().startswith(b"P6\n")
        header = (tmp_path / "heatmap_binary_binary.csv").read_text().splitlines()[0]
        assert header == "feature,b1,b2,b3,b4,b5"

    def test_correlate_multiple_descriptions(self, small_study, tmp_path):
        status = run(["correlate", "--manifest", str(small_study), "--output", str(tmp_path),
                      "--features", "binary", "--mode", "multiple", "--max-description", "3"])
        assert status == EXIT_OK
        header = (tmp_path / "heatmap_binary_binary.csv").read_text().splitlines()[0]
        assert header == "feature,binary-1,binary-2,binary-3"
        assert not (tmp_path / "heatmap_nonbinary_nonbinary.csv").exists()

    def test_evaluate_against_manifest(self, small_study, tmp_path):
        ranked = tmp_path / "ranked"
        assert run(["binary", "--manifest", str(small_study), "--output", str(ranked)]) == 0
        out = tmp_path / "eval"
        status = run(["evaluate", "--predicted", str(ranked / "ranking.csv"),
                      "--truth", str(small_study), "--output", str(out)])
        assert status == EXIT_OK
        rows = read_csv(out / "accuracy.csv")
        assert [row["cluster"] for row in rows] == ["light", "mid", "dark", "all"]
        assert "Accuracy:" in (out / "accuracy_report.txt").read_text()

    def test_evaluate_against_ratios(self, tmp_path):
        ranking = tmp_path / "ranking.csv"
        ranking.write_text("rank,id\n1,a\n2,b\n3,c\n4,d\n")
        ratios = tmp_path / "ratios.csv"
        ratios.write_text("id,ratio\na,0.1\nb,0.2\nc,0.8\nd,0.9\n")
        status = run(["evaluate", "--predicted", str(ranking), "--truth-ratios", str(ratios),
                      "--output", str(tmp_path / "eval")])
        assert status == EXIT_OK
        rows = read_csv(tmp_path / "eval" / "accuracy.csv")
        assert rows[-1]["cluster"] == "all" and rows[-1]["ratio"] == "1"


class TestDeterminism:
    @pytest.mark.parametrize("command", [
        ["binary"],
        ["nonbinary", "--sampling", "shuffle"],
        ["correlate", "--tessellation", "4", "--runs", "2"],
    ])
    def test_outputs_independent_of_worker_count(self, small_study, tmp_path, command):
        outputs = []
        for workers in ("1", "4"):
            out = tmp_path / f"w{workers}"
            status = run(command + ["--manifest", str(small_study), "--output", str(out),
                                    "--workers", workers, "--seed", "11"])
            assert status == EXIT_OK
            outputs.append(_result_files(out))
        assert outputs[0] and outputs[0] == outputs[1]

    def test_phantom_repeatable(self, tmp_path):
        for name in ("a", "b"):
            assert run(["phantom", "--output", str(tmp_path / name), "--subjects", "6",
                        "--width", "32", "--height", "32", "--workers", "3"]) == EXIT_OK
        assert _result_files(tmp_path / "a") == _result_files(tmp_path / "b")
