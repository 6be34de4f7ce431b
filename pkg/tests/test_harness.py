import csv
import json
from pathlib import Path

import pytest

from rfpp import starlattice
from rfpp.cli import main
from rfpp.config import ConfigError, default_config
from rfpp.harness import RunManifest, compare_manifests, rerun, run


def _csv(path):
    return list(csv.reader(Path(path).open()))


def test_enumerate_matches_oracle(tmp_path):
    cfg = default_config("enumerate")
    cfg.checks = ["naive_match", "sigma_bound"]
    m = run(cfg, tmp_path)
    rows = _csv(tmp_path / "enumeration.csv")
    assert rows[0][:3] == ["n", "S_n", "A_n"]
    assert [int(r[1]) for r in rows[1:]] == list(starlattice.count_connected_sets_naive(6, 2))
    assert [int(r[2]) for r in rows[1:]] == [1, 4, 20, 110, 638, 3832]  # polyplets, OEIS A006770
    assert m.passed


def test_enumerate_fekete_recorded_as_failure(tmp_path):
    # S_2 = 4 * S_1^2 in count form, so log S_n is not subadditive at (1, 1)
    m = run(default_config("enumerate"), tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert not summary["checks"]["fekete_subadditive"]["passed"] and not m.passed


def test_distance_brackets_five(tmp_path):
    m = run(default_config("distance"), tmp_path)
    rows = _csv(tmp_path / "distances.csv")
    value, lo, hi = map(float, rows[1][1:4])
    assert lo <= 5.0 <= hi and value == pytest.approx(5.0, rel=1e-12)
    assert m.passed


def test_run_rejects_invalid(tmp_path):
    cfg = default_config("distance")
    cfg.solver.h = 0
    with pytest.raises(ConfigError) as exc:
        run(cfg, tmp_path)
    assert exc.value.errors[0].startswith("solver.h")
    cfg = default_config("enumerate")
    cfg.checks = ["no_such_check"]
    with pytest.raises(ConfigError):
        run(cfg, tmp_path)


@pytest.mark.parametrize("kind", ["field", "lattice-verify", "geodesic"])
def test_rerun_identical(tmp_path, kind):
    cfg = default_config(kind)
    if kind == "lattice-verify":
        cfg.params["random_sets"] = 50
    a = run(cfg, tmp_path / "a")
    b = rerun(tmp_path / "a" / "manifest.json", tmp_path / "b")
    assert compare_manifests(a, b) == []
    for f in a.files:
        assert (tmp_path / "a" / f["path"]).read_bytes() == (tmp_path / "b" / f["path"]).read_bytes()


def test_manifest_complete(tmp_path):
    cfg = default_config("geodesic")
    m = run(cfg, tmp_path)
    listed = {f["path"] for f in m.files}
    on_disk = {p.name for p in tmp_path.iterdir()} - {"manifest.json"}
    assert listed == on_disk
    back = RunManifest.load(tmp_path / "manifest.json")
    assert back == m and back.config_hash == cfg.digest()
    assert back.seeds is not None and back.timings["total"] > 0


def test_seed_changes_field(tmp_path):
    a = default_config("field")
    b = default_config("field")
    b.stats.base_seed = 1
    ma, mb = run(a, tmp_path / "a"), run(b, tmp_path / "b")
    assert "field.csv" in compare_manifests(ma, mb)


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["enumerate", "--out", str(tmp_path / "e")]) == 1
    out = capsys.readouterr().out
    assert "FAIL  fekete_subadditive" in out and "PASS  naive_match" in out
    assert main(["distance", "--out", str(tmp_path / "d"), "--seed", "0x10"]) == 0
    cfg = default_config("distance")
    cfg.solver.h = 0.0
    bad = cfg.save(tmp_path / "bad.toml")
    assert main(["validate", str(bad)]) == 2
    assert main(["distance", "--config", str(bad)]) == 2
    good = default_config("field").save(tmp_path / "field.toml")
    assert main(["validate", str(good)]) == 0
    assert main(["distance", "--config", str(good)]) == 2  # kind mismatch
    assert main(["rerun", str(tmp_path / "d" / "manifest.json"), "--out", str(tmp_path / "d2")]) == 0
    assert "identical" in capsys.readouterr().out


def test_cli_default_config_roundtrip(tmp_path, capsys):
    assert main(["default-config", "mu"]) == 0
    p = tmp_path / "mu.toml"
    p.write_text(capsys.readouterr().out)
    assert main(["validate", str(p)]) == 0


def test_cli_seed_out_of_range():
    with pytest.raises(SystemExit):
        main(["enumerate", "--seed", str(2**64)])
