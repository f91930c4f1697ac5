"""Smoke test for the mvsfit Python module.

Build and install first:
    pip install --no-build-isolation -e crates/py
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import mvsfit


def check_mesh_and_metrics(tmp: Path) -> None:
    sphere = mvsfit.TriMesh.icosphere(2, 1.0)
    assert sphere.num_vertices() == 162, sphere
    path = tmp / "sphere.ply"
    sphere.write(str(path))
    back = mvsfit.TriMesh.read(str(path))
    assert back.vertices == sphere.vertices
    assert back.faces == sphere.faces

    bigger = mvsfit.TriMesh.icosphere(2, 1.1)
    stats, dists = mvsfit.accuracy(bigger, sphere)
    stats = json.loads(stats)
    assert len(dists) == bigger.num_vertices()
    assert 0.09 < stats["mean"] < 0.1 + 1e-9, stats
    comp, _ = mvsfit.completion(bigger, sphere)
    assert json.loads(comp)["count"] == sphere.num_vertices()


def check_umeyama() -> None:
    src = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    c, s = math.cos(0.3), math.sin(0.3)
    dst = [[2.0 * (c * x - s * y) + 1.0, 2.0 * (s * x + c * y) - 2.0, 2.0 * z + 0.5] for x, y, z in src]
    t = mvsfit.umeyama(src, dst)
    assert abs(t.scale - 2.0) < 1e-12, t
    for p, q in zip(src, dst):
        assert max(abs(a - b) for a, b in zip(t.apply(p), q)) < 1e-12
    try:
        mvsfit.umeyama(src[:2], dst[:2])
    except ValueError:
        pass
    else:
        raise AssertionError("two points must be rejected")


def check_pipeline(tmp: Path) -> None:
    synth = json.dumps({"n_views": 5, "width": 96, "height": 72})
    config = json.dumps(
        {
            "viewsel": {"num_sources": 2},
            "patchmatch": {"iterations": 1},
            "fusion": {"min_consistent_views": 2},
            "fit": {"stiffness_schedule": [20.0], "landmark_weight_schedule": [5.0], "inner_max_iters": 2},
        }
    )
    manifest = mvsfit.synth_head(str(tmp / "proj"), synth, config)
    report = json.loads(mvsfit.stage(str(manifest), "triangulate"))
    assert report["stage"] == "triangulate" and report["counts"]["landmarks"] > 10, report
    try:
        mvsfit.stage(str(manifest), "fit")
    except mvsfit.ConfigError as e:
        assert "align" in str(e), e
    else:
        raise AssertionError("fit before align must fail")
    reports = [json.loads(r) for r in mvsfit.pipeline(str(manifest))]
    assert [r["stage"] for r in reports][-1] == "eval"
    summary = json.loads((tmp / "proj" / "out" / "eval.json").read_text())
    assert summary["accuracy"]["mean"] < 0.1 * summary["gt_diagonal"], summary
    fitted = mvsfit.TriMesh.read(str(tmp / "proj" / "out" / "fitted.ply"))
    assert fitted.num_vertices() == 10242


def main() -> int:
    with tempfile.TemporaryDirectory() as d:
        tmp = Path(d)
        check_mesh_and_metrics(tmp)
        check_umeyama()
        check_pipeline(tmp)
    print("python smoke test: OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
