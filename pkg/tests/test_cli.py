import dataclasses
import json

import pytest

from chartpeak import cli
from chartpeak.charts import read_tracks_csv, write_tracks_csv
from chartpeak.enrich import FixtureTransport, read_features_csv, write_features_csv
from chartpeak.synthetic import make_tracks

HEADER = "rank,uri,track_name,artist,streams\n"


def write_charts(directory):
    directory.mkdir()
    days = {
        "2024-01-01": [(1, "a", 900), (12, "b", 500), (60, "c", 100)],
        "2024-01-02": [(2, "a", 850), (8, "b", 600), (70, "d", 90)],
        "2024-01-03": [(5, "a", 700), (55, "e", 120), (80, "d", 80)],
    }
    for day, rows in days.items():
        text = HEADER + "".join(f"{r},spotify:track:{u},Song {u},Art,{s}\n" for r, u, s in rows)
        (directory / f"{day}.csv").write_text(text)


def fixture_for(features):
    return {f.track_uri: {k: v for k, v in dataclasses.asdict(f).items() if k != "track_uri"}
            for f in features}


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    root = tmp_path_factory.mktemp("prepared")
    tracks, features = make_tracks(n=200, seed=7)
    write_tracks_csv(tracks, root / "tracks.csv")
    write_features_csv(features, root / "features.csv")
    code = cli.main(["prepare", "--tracks", str(root / "tracks.csv"),
                     "--features", str(root / "features.csv"), "--out", str(root / "data")])
    assert code == 0
    return root / "data"


FAST = ["--param", "rf.n_estimators=10", "--param", "gbt.n_rounds=5", "--param", "gbt.max_depth=3",
        "--param", "logreg.max_iters=200"]


# -- ingest ------------------------------------------------------------------

def test_ingest_writes_tracks(tmp_path, capsys):
    write_charts(tmp_path / "charts")
    out = tmp_path / "tracks.csv"
    assert cli.main(["ingest", str(tmp_path / "charts"), "--out", str(out)]) == 0
    records = {t.track_uri: t for t in read_tracks_csv(out)}
    assert len(records) == 5
    assert records["spotify:track:b"].peak_rank == 8
    assert records["spotify:track:b"].previous_rank == 12
    assert "TOP10=2, MID11_50=0, TAIL51PLUS=3" in capsys.readouterr().out


def test_ingest_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert cli.main(["ingest", str(tmp_path / "empty")]) == 2
    assert "no chart files" in capsys.readouterr().err


def test_ingest_bad_row_exit_2(tmp_path, capsys):
    charts = tmp_path / "charts"
    charts.mkdir()
    (charts / "2024-01-01.csv").write_text(HEADER + "1,a,A,X,100\n2,b,B,Y,lots\n")
    assert cli.main(["ingest", str(charts), "--out", str(tmp_path / "t.csv")]) == 2
    err = capsys.readouterr().err
    assert "2024-01-01.csv" in err and "row 3" in err


# -- enrich ------------------------------------------------------------------

@pytest.fixture
def five_tracks(tmp_path):
    tracks, features = make_tracks(n=5, proportions=(0.2, 0.2, 0.6), seed=3, missing_features=0)
    write_tracks_csv(tracks, tmp_path / "tracks.csv")
    (tmp_path / "fixture.json").write_text(json.dumps(fixture_for(features)))
    return tmp_path, tracks


def test_enrich_mock(five_tracks):
    root, tracks = five_tracks
    out = root / "features.csv"
    code = cli.main(["enrich", str(root / "tracks.csv"), "--mock", str(root / "fixture.json"),
                     "--out", str(out), "--interval", "0"])
    assert code == 0
    assert [f.track_uri for f in read_features_csv(out)] == [t.track_uri for t in tracks]
    assert (root / "features.misses.txt").read_text() == ""


def test_enrich_resumes(five_tracks, monkeypatch):
    root, tracks = five_tracks
    out = root / "features.csv"
    args = ["enrich", str(root / "tracks.csv"), "--mock", str(root / "fixture.json"),
            "--out", str(out), "--interval", "0"]
    assert cli.main(args) == 0
    rows = out.read_text().splitlines()
    out.write_text("\n".join(rows[:3]) + "\n")  # header plus two tracks survive

    seen = []
    original = FixtureTransport.from_file.__func__

    def spy(cls, path):
        transport = original(cls, path)
        seen.append(transport)
        return transport

    monkeypatch.setattr(FixtureTransport, "from_file", classmethod(spy))
    assert cli.main(args) == 0
    (transport,) = seen
    gets = [r for r in transport.requests if r.method == "GET"]
    assert sorted(gets[0].uris) == sorted(t.track_uri for t in tracks[2:])
    assert sorted(f.track_uri for f in read_features_csv(out)) == sorted(t.track_uri for t in tracks)


def test_enrich_without_credentials(five_tracks, monkeypatch, capsys):
    root, _ = five_tracks
    monkeypatch.delenv("CLIENT_ID", raising=False)
    monkeypatch.delenv("CLIENT_SECRET", raising=False)
    assert cli.main(["enrich", str(root / "tracks.csv"), "--out", str(root / "f.csv")]) == 3
    assert "MissingCredentials" in capsys.readouterr().err


# -- prepare / evaluate ------------------------------------------------------

def test_prepare_outputs(prepared):
    names = sorted(p.name for p in prepared.iterdir())
    assert names == ["dataset.audio.csv", "dataset.full.csv", "preprocess.json"]
    state = json.loads((prepared / "preprocess.json").read_text())
    assert len(state["full"]["columns"]) == 16 and len(state["audio_only"]["columns"]) == 13


def test_evaluate_rf_audio_cv(prepared, tmp_path):
    out = tmp_path / "rf"
    code = cli.main(["evaluate", "--data", str(prepared), "--model", "rf", "--features", "audio_only",
                     "--cv", "5", "--seed", "42", "--out", str(out), *FAST])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["model"] == "rf" and report["features"] == "audio_only"
    assert len(report["cv"]["fold_macro_f1"]) == 5
    assert {"mean", "std"} <= set(report["cv"])
    assert len(report["importances"]) == 13
    assert {"importances.svg", "importances_rf.svg", "correlation.svg"} <= {p.name for p in out.iterdir()}


def test_evaluate_all_models(prepared, tmp_path, capsys):
    out = tmp_path / "all"
    assert cli.main(["evaluate", "--data", str(prepared), "--model", "all", "--out", str(out), *FAST]) == 0
    reports = json.loads((out / "report.json").read_text())
    assert [r["model"] for r in reports] == ["logreg", "knn", "rf", "gbt"]
    table = capsys.readouterr().out.splitlines()
    assert len(table) == 5 and table[1].startswith("logreg")


def test_evaluate_grid(prepared, tmp_path, capsys):
    grid = tmp_path / "rf.json"
    grid.write_text(json.dumps({"max_depth": [2, None], "n_estimators": [5]}))
    out = tmp_path / "grid"
    assert cli.main(["evaluate", "--data", str(prepared), "--model", "rf", "--grid", str(grid),
                     "--cv", "3", "--out", str(out), "--no-plots"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["grid"]["evaluated"]) == 2
    assert report["params"]["n_estimators"] == 5
    assert "best grid config" in capsys.readouterr().out


def test_evaluate_is_byte_deterministic(prepared, tmp_path):
    def run(name):
        out = tmp_path / name
        cli.main(["evaluate", "--data", str(prepared), "--model", "gbt", "--cv", "3",
                  "--no-timestamp", "--out", str(out), *FAST])
        return (out / "report.json").read_bytes(), (out / "importances.svg").read_bytes()

    assert run("a") == run("b")


def test_timestamp_present_by_default(prepared, tmp_path):
    out = tmp_path / "ts"
    cli.main(["evaluate", "--data", str(prepared), "--model", "knn", "--out", str(out), "--no-plots"])
    assert "generated_at" in json.loads((out / "report.json").read_text())


@pytest.mark.parametrize("argv", [
    ["evaluate", "--model", "svm"],
    ["frobnicate"],
    [],
    ["evaluate", "--data", "/nonexistent"],
    ["evaluate", "--param", "n_estimators=3"],
])
def test_usage_errors_exit_1(argv, prepared, capsys):
    if argv and argv[-1] == "n_estimators=3":
        argv = argv[:1] + ["--data", str(prepared)] + argv[1:]
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(cli.main(argv))
    assert exc.value.code == 1


def test_evaluation_error_exit_4(tmp_path, capsys):
    tracks, features = make_tracks(n=30, proportions=(0.1, 0.3, 0.6), seed=1, missing_features=0)
    write_tracks_csv(tracks, tmp_path / "t.csv")
    write_features_csv(features, tmp_path / "f.csv")
    assert cli.main(["prepare", "--tracks", str(tmp_path / "t.csv"), "--features", str(tmp_path / "f.csv"),
                     "--out", str(tmp_path / "d")]) == 0
    code = cli.main(["evaluate", "--data", str(tmp_path / "d"), "--model", "rf", "--cv", "5",
                     "--out", str(tmp_path / "o"), "--no-plots", *FAST[:2]])
    assert code == 4
    assert "ClassSmallerThanK" in capsys.readouterr().err
