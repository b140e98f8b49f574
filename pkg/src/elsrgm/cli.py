"""Command-line entry point: ``elsrgm <command> [options]``.

Exit codes: 0 success, 2 input error, 3 unsupported size or dimension,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .errors import ElsrgmError, InputError
from .features import EDGE_TRIANGLE, FeatureSpec, feature_vector
from .graph import read_edge_list, write_edge_list
from .graphspace import (FeatureSpace, IsoAtlas, cell_diameter, default_workers,
                         enumerate_iso_classes, enumerate_labeled,
                         space_from_atlas)

THREADS_ENV = "ELSRGM_THREADS"


def _emit(text: str, out: str | None) -> None:
    if out:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _seed(args) -> int:
    """Use ``--seed`` or synthesize one; either way report it."""
    seed = args.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2 ** 31))
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _spec(args, default: FeatureSpec = EDGE_TRIANGLE) -> FeatureSpec:
    return FeatureSpec.parse(args.features) if args.features else default


def _load_atlas(args) -> IsoAtlas:
    if getattr(args, "atlas", None):
        with open(args.atlas) as fh:
            return IsoAtlas.from_json(fh.read())
    return enumerate_iso_classes(args.nodes)


def _parse_feature(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(","))
    except ValueError as exc:
        raise InputError(f"cannot parse feature vector {text!r}") from exc


# --------------------------------------------------------------- commands


def cmd_enumerate(args) -> int:
    spec = _spec(args)
    spec.validate(args.nodes)
    t0 = time.time()
    space = enumerate_labeled(args.nodes, spec, workers=args.threads,
                              allow_large=args.allow_large)
    _emit(space.to_csv(), args.out)
    print(f"n={space.n} support={len(space)} total_weight={space.total_weight} "
          f"seconds={time.time() - t0:.1f}", file=sys.stderr)
    return 0


def cmd_iso(args) -> int:
    t0 = time.time()
    atlas = enumerate_iso_classes(args.nodes)
    if args.out:
        _emit(atlas.to_json(), args.out)
    print(f"n={atlas.n} classes={len(atlas)} labeled_total={atlas.labeled_total()} "
          f"seconds={time.time() - t0:.1f}")
    return 0


def cmd_diameter(args) -> int:
    spec = _spec(args)
    atlas = _load_atlas(args)
    space = space_from_atlas(atlas, spec)
    diam = cell_diameter(atlas, space, allow_large=args.allow_large)
    lines = [",".join(list(spec.terms) + ["weight", "diameter"])]
    for x, w in space.support.items():
        lines.append(",".join(str(v) for v in (*x, w, diam[x])))
    _emit("\n".join(lines) + "\n", args.out)
    print(f"cells={len(diam)} max_diameter={max(diam.values())}", file=sys.stderr)
    return 0


def cmd_degeneracy(args) -> int:
    from .ergm import degeneracy_report

    if args.space:
        with open(args.space) as fh:
            space = FeatureSpace.from_csv(fh.read())
    elif args.nodes:
        spec = _spec(args)
        space = enumerate_labeled(args.nodes, spec, workers=args.threads)
    else:
        raise InputError("give --space or --nodes")
    if args.graph:
        x = feature_vector(read_edge_list(args.graph, space.n), space.spec)
    elif args.feature:
        x = _parse_feature(args.feature)
    else:
        raise InputError("give --graph or --feature")
    report = degeneracy_report(space, x)
    _emit(report.to_json() + "\n", args.out)
    return 0


def cmd_embed(args) -> int:
    from .embed import spherical_embedding

    if args.space:
        with open(args.space) as fh:
            feats = FeatureSpace.from_csv(fh.read()).keys()
    else:
        spec = _spec(args)
        paths = sorted(glob.glob(os.path.join(args.graphs, "*.edges")))
        if not paths:
            raise InputError(f"no .edges files in {args.graphs}")
        feats = list(dict.fromkeys(feature_vector(read_edge_list(p, args.nodes), spec)
                                   for p in paths))
    emb = spherical_embedding(feats, p=args.p)
    _emit(emb.to_json() + "\n", args.out)
    print(f"K={emb.K} p={emb.p} radius={emb.radius!r}", file=sys.stderr)
    return 0


def _run_config(args):
    from .pipeline import RunConfig

    base = {}
    if args.config:
        base = RunConfig.from_json_file(args.config).to_dict()
    overrides = {
        "features": args.features, "walk_steps": args.walk_steps, "max_edit": args.max_edit,
        "neighborhood_size": args.neighborhood_size, "walk_seed": args.walk_seed,
        "p": args.p, "kappa": args.kappa, "kappa_h": args.kappa_h, "alpha": args.alpha,
        "T": args.T, "samples": getattr(args, "samples", None),
        "mc_samples": args.mc_samples, "refit_every": args.refit_every,
        "refit_iters": args.refit_iters, "fit_iters": args.fit_iters,
        "reembed_every": args.reembed_every, "max_atoms": args.max_atoms,
        "out": getattr(args, "out", None),
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "shared_target", False):
        base["shared_target"] = True
    if args.seed is None and "seed" in base:
        args.seed = base["seed"]
    base["seed"] = _seed(args)
    return RunConfig.from_dict(base)


def cmd_fit(args) -> int:
    from .pipeline import fit_model

    cfg = _run_config(args)
    example = read_edge_list(args.example, args.nodes)
    fm = fit_model(example, cfg)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    fm.model.save(os.path.join(out, "model.json"), os.path.join(out, "graphs.jsonl"))
    with open(os.path.join(out, "embedding.json"), "w") as fh:
        fh.write(fm.emb.to_json())
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump({"version": __version__, **cfg.to_dict()}, fh, indent=2, sort_keys=True)
    print(f"K={fm.model.K} p={fm.emb.p} radius={fm.emb.radius!r} kl={fm.initial_kl!r}")
    return 0


def _write_gof(observed, samples, out: str) -> float:
    from .gof import FAMILIES, summarize, summary_svg

    summary = summarize(observed, samples)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "gof.csv"), "w") as fh:
        fh.write(summary.to_csv())
    for fam in FAMILIES:
        with open(os.path.join(out, f"gof_{fam}.svg"), "w") as fh:
            fh.write(summary_svg(summary, fam))
    return summary.coverage()


def cmd_generate(args) -> int:
    from .pipeline import generate, write_outputs

    cfg = _run_config(args)
    out = cfg.out or "elsrgm_out"
    example = read_edge_list(args.example, args.nodes)
    progress = None
    if args.verbose:
        def progress(s, res):
            print(f"sample {s}: K={res.report.final_K} edges={res.graph.num_edges}",
                  file=sys.stderr)
    result = generate(example, cfg, progress=progress)
    write_outputs(result, out)
    cov = _write_gof(example, result.samples, out)
    kl = result.kl_trace
    print(f"samples={len(result.samples)} K={result.model.K} kl_initial={kl[0][1]!r} "
          f"kl_final={kl[-1][1]!r} gof_coverage={cov:.3f} out={out}")
    return 0


def cmd_sample(args) -> int:
    from .embed import Embedding
    from .mixture import MixtureModel
    from .samplers import DpOptions, DpState, mcmc_dp_sample, mh_sample

    d = args.model_dir
    model = MixtureModel.load(os.path.join(d, "model.json"))
    if not model.graph_refs:
        raise InputError("the model has no graph file; refit with `elsrgm fit`")
    example = read_edge_list(args.example, args.nodes)
    seed = _seed(args)
    seeds = np.random.SeedSequence(seed).spawn(args.count)
    out = args.out or "samples"
    os.makedirs(out, exist_ok=True)
    st = None
    if args.dp:
        with open(os.path.join(d, "embedding.json")) as fh:
            emb = Embedding.from_json(fh.read())
        spec = _spec(args, default=FeatureSpec.parse(",".join(_config_terms(d))))
        st = DpState(model, emb, example, model.baseline.kappa,
                     DpOptions(spec, mc_samples=args.mc_samples or 5000))
    width = max(3, len(str(args.count - 1)))
    for s in range(args.count):
        rng = np.random.default_rng(seeds[s])
        if st is None:
            g = mh_sample(model, model.baseline, args.T, rng, example=example).graph
        else:
            g = mcmc_dp_sample(st.model, st.baseline, st.emb, args.T, rng,
                               example=example, dp_state=st).graph
        write_edge_list(g, os.path.join(out, f"sample_{s:0{width}d}.edges"))
    print(f"wrote {args.count} samples to {out}")
    return 0


def _config_terms(model_dir: str) -> list[str]:
    path = os.path.join(model_dir, "config.json")
    if os.path.exists(path):
        with open(path) as fh:
            return json.load(fh)["features"].split(",")
    return list(EDGE_TRIANGLE.terms)


def cmd_gof(args) -> int:
    observed = read_edge_list(args.observed, args.nodes)
    paths = sorted(glob.glob(os.path.join(args.samples, "*.edges")))
    if not paths:
        raise InputError(f"no .edges files in {args.samples}")
    samples = [read_edge_list(p, observed.n) for p in paths]
    cov = _write_gof(observed, samples, args.out or ".")
    print(f"samples={len(samples)} coverage={cov:.3f}")
    return 0


# ----------------------------------------------------------------- parser


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with run settings; flags override it")
    p.add_argument("--example", required=True, help="edge list of the example graph")
    p.add_argument("--nodes", type=int, help="node count override for the edge list")
    p.add_argument("--features", help="comma-separated terms, e.g. edge,kstar2,triangle")
    p.add_argument("--walk-steps", type=int)
    p.add_argument("--max-edit", type=int)
    p.add_argument("--neighborhood-size", type=int)
    p.add_argument("--walk-seed", type=int)
    p.add_argument("--p", type=int, help="embedding dimension")
    p.add_argument("--kappa", type=float)
    p.add_argument("--kappa-h", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--T", type=int, help="chain length per sample")
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--refit-every", type=int)
    p.add_argument("--refit-iters", type=int)
    p.add_argument("--fit-iters", type=int)
    p.add_argument("--reembed-every", type=int)
    p.add_argument("--max-atoms", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="elsrgm", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"elsrgm {__version__}")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker cap (default: ${THREADS_ENV} or CPU count)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="weighted feature support over all labeled graphs")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--features")
    p.add_argument("--allow-large", action="store_true", help="full labeled sweep for n=8")
    p.add_argument("--out")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("iso", help="isomorphism classes of n-node graphs")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--out", help="write the class atlas as JSON")
    p.set_defaults(func=cmd_iso)

    p = sub.add_parser("diameter", help="feature cell diameters in the perturbation graph")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--atlas", help="atlas JSON from `iso --out`")
    p.add_argument("--features")
    p.add_argument("--allow-large", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diameter)

    p = sub.add_parser("degeneracy", help="ERGM fit and degeneracy report for one graph")
    p.add_argument("--space", help="support CSV from `enumerate`")
    p.add_argument("--nodes", type=int)
    p.add_argument("--features")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--graph", help="edge list of the observed graph")
    g.add_argument("--feature", help="observed feature vector, e.g. 16,16")
    p.add_argument("--out")
    p.set_defaults(func=cmd_degeneracy)

    p = sub.add_parser("embed", help="spherical embedding of feature vectors")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--space", help="support CSV from `enumerate`")
    src.add_argument("--graphs", help="directory of .edges files")
    p.add_argument("--nodes", type=int)
    p.add_argument("--features")
    p.add_argument("--p", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("fit", help="neighborhood, embedding and mixture weights")
    _add_run_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("generate", help="full pipeline: fit, sample, GOF summary")
    _add_run_options(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--shared-target", action="store_true",
                   help="reuse one target draw for every sample")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", help="draw graphs from a fitted model")
    p.add_argument("--model-dir", required=True, help="output directory of `fit`")
    p.add_argument("--example", required=True)
    p.add_argument("--nodes", type=int)
    p.add_argument("--features")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--dp", action="store_true", help="allow unseen graphs (DP sampler)")
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gof", help="GOF summary of samples against an observed graph")
    p.add_argument("--observed", required=True)
    p.add_argument("--samples", required=True, help="directory of .edges files")
    p.add_argument("--nodes", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gof)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = default_workers()
    elif args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    os.environ[THREADS_ENV] = str(args.threads)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except ElsrgmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
