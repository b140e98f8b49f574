from __future__ import annotations

import json
import os

import pytest

from elsrgm import __version__
from elsrgm.cli import main
from elsrgm.errors import InputError
from elsrgm.graph import make_graph, read_edge_list, write_edge_list
from elsrgm.graphspace import FeatureSpace
from elsrgm.pipeline import RunConfig, fit_model, generate, write_outputs

G_TEST1 = make_graph(8, [(1, 6), (1, 7), (2, 3), (2, 4), (2, 5), (2, 6), (2, 7), (3, 4),
                         (3, 5), (3, 6), (3, 7), (4, 5), (4, 6), (4, 7), (5, 6), (5, 7)])

SMALL = dict(samples=3, T=150, mc_samples=500, walk_steps=3000, neighborhood_size=80,
             refit_iters=10, fit_iters=100)


def test_config_defaults_and_validation():
    cfg = RunConfig()
    assert (cfg.kappa, cfg.kappa_h, cfg.alpha, cfg.T, cfg.samples) == (140.0, 400.0, 0.5,
                                                                      1000, 100)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    for bad in ({"kappa": -1}, {"T": 0}, {"features": "edge,bogus"}, {"mc_samples": 5},
                {"max_atoms": 10}):
        with pytest.raises(InputError):
            RunConfig(**bad)
    with pytest.raises(InputError):
        RunConfig.from_dict({"nonsense": 1})


def test_tiny_neighborhood_gives_actionable_error():
    cfg = RunConfig(walk_steps=0, **{k: v for k, v in SMALL.items() if k != "walk_steps"})
    with pytest.raises(InputError, match="walk_steps"):
        fit_model(G_TEST1, cfg)


def test_generate_is_deterministic(tmp_path):
    cfg = RunConfig(seed=5, **SMALL)
    a = generate(G_TEST1, cfg)
    b = generate(G_TEST1, cfg)
    assert [g.bits for g in a.samples] == [g.bits for g in b.samples]
    pa = write_outputs(a, str(tmp_path / "a"))
    pb = write_outputs(b, str(tmp_path / "b"))
    with open(pa["manifest"], "rb") as fa, open(pb["manifest"], "rb") as fb:
        assert fa.read() == fb.read()
    man = json.load(open(pa["manifest"]))
    assert man["version"] == __version__ and man["config"]["seed"] == 5
    assert len(man["samples"]) == 3 and man["final_K"] >= man["initial_K"]
    files = sorted(os.listdir(pa["samples"]))
    assert files == ["sample_000.edges", "sample_001.edges", "sample_002.edges"]
    assert read_edge_list(os.path.join(pa["samples"], files[0])).n == 8
    assert open(pa["kl_trace"]).readline().strip() == "step,K,kl"


def test_shared_target_reuses_one_draw():
    res = generate(G_TEST1, RunConfig(seed=2, shared_target=True, **SMALL))
    ys = {tuple(s["y_star"]) for s in res.manifest["samples"]}
    assert len(ys) == 1
    res = generate(G_TEST1, RunConfig(seed=2, **SMALL))
    assert len({tuple(s["y_star"]) for s in res.manifest["samples"]}) == 3


# ------------------------------------------------------------------ CLI


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_enumerate_n3(capsys, tmp_path):
    out = tmp_path / "s3.csv"
    code, _, err = run(capsys, "enumerate", "--nodes", "3", "--out", str(out))
    assert code == 0 and "total_weight=8" in err
    space = FeatureSpace.from_csv(out.read_text())
    assert len(space) == 4 and space.total_weight == 8


def test_cli_exit_codes(capsys, tmp_path):
    assert run(capsys, "enumerate", "--nodes", "9")[0] == 3
    assert run(capsys, "enumerate", "--nodes", "4", "--features", "edge,square")[0] == 2
    assert run(capsys, "gof", "--observed", str(tmp_path / "missing.edges"),
               "--samples", str(tmp_path))[0] == 2
    assert run(capsys, "--threads", "0", "iso", "--nodes", "3")[0] == 2


def test_cli_iso_and_diameter(capsys, tmp_path):
    code, out, _ = run(capsys, "iso", "--nodes", "5", "--out", str(tmp_path / "a.json"))
    assert code == 0 and "classes=34" in out
    code, out, _ = run(capsys, "diameter", "--nodes", "5", "--atlas", str(tmp_path / "a.json"))
    assert code == 0 and out.splitlines()[0] == "edge,triangle,weight,diameter"
    assert out.splitlines()[1] == "0,0,1,0"


def test_cli_degeneracy(capsys, tmp_path):
    space = tmp_path / "s6.csv"
    run(capsys, "enumerate", "--nodes", "6", "--out", str(space))
    code, out, _ = run(capsys, "degeneracy", "--space", str(space), "--feature", "15,20")
    rep = json.loads(out)
    assert code == 0 and rep["type1_degenerate"] and not rep["type2_degenerate"]
    g = tmp_path / "g.edges"
    write_edge_list(make_graph(6, [(0, 1), (1, 2), (2, 0), (3, 4)]), g)
    code, out, _ = run(capsys, "degeneracy", "--space", str(space), "--graph", str(g))
    assert code == 0 and json.loads(out)["x_star"] == [4, 1]


def test_cli_generate_fit_sample_gof(capsys, tmp_path):
    ex = tmp_path / "g1.edges"
    write_edge_list(G_TEST1, ex)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**SMALL, "seed": 11}))
    code, out, err = run(capsys, "generate", "--config", str(cfg), "--example", str(ex),
                         "--T", "100", "--out", str(tmp_path / "run"))
    assert code == 0 and "seed: 11" in err and "gof_coverage=" in out
    man = json.load(open(tmp_path / "run" / "manifest.json"))
    assert man["config"]["T"] == 100 and man["config"]["seed"] == 11
    for name in ("gof.csv", "gof_degree.svg", "gof_esp.svg", "gof_triad.svg",
                 "gof_geodesic.svg", "kl_trace.csv"):
        assert (tmp_path / "run" / name).exists()

    code, out, _ = run(capsys, "fit", "--config", str(cfg), "--example", str(ex),
                       "--out", str(tmp_path / "fit"))
    assert code == 0 and out.startswith("K=")
    code, _, _ = run(capsys, "sample", "--model-dir", str(tmp_path / "fit"), "--example",
                     str(ex), "--count", "3", "--T", "50", "--seed", "1",
                     "--out", str(tmp_path / "smp"))
    assert code == 0 and len(os.listdir(tmp_path / "smp")) == 3
    code, _, _ = run(capsys, "sample", "--model-dir", str(tmp_path / "fit"), "--example",
                     str(ex), "--count", "2", "--T", "50", "--seed", "1", "--dp",
                     "--mc-samples", "500", "--out", str(tmp_path / "smp_dp"))
    assert code == 0 and len(os.listdir(tmp_path / "smp_dp")) == 2
    code, out, _ = run(capsys, "gof", "--observed", str(ex), "--samples",
                       str(tmp_path / "smp"), "--out", str(tmp_path / "gof"))
    assert code == 0 and "coverage=" in out
    code, _, err = run(capsys, "embed", "--graphs", str(tmp_path / "run" / "samples"),
                       "--p", "2", "--out", str(tmp_path / "e.json"))
    assert code == 0 and "p=2" in err


def test_cli_synthesizes_and_prints_a_seed(capsys, tmp_path):
    ex = tmp_path / "g1.edges"
    write_edge_list(G_TEST1, ex)
    code, _, err = run(capsys, "fit", "--example", str(ex), "--walk-steps", "2000",
                       "--neighborhood-size", "60", "--mc-samples", "500",
                       "--fit-iters", "20", "--out", str(tmp_path / "f"))
    assert code == 0 and err.startswith("seed: ")
