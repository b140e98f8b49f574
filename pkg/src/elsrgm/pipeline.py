"""End-to-end generation: neighborhood walk, features, embedding, mixture
fit, and repeated Dirichlet-process chains.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .embed import Embedding, spherical_embedding
from .errors import InputError
from .features import EXPERIMENT_SPEC, FeatureSpec, feature_vector
from .graph import Graph, format_edge_list, random_walk_neighborhood
from .mixture import KlObjective, MixtureModel, fit_pi
from .samplers import DpOptions, DpState, mcmc_dp_sample
from .vmf import VmfParams


@dataclass
class RunConfig:
    """Every tunable of a generation run; defaults match the reference experiments."""

    features: str = ",".join(EXPERIMENT_SPEC.terms)
    walk_steps: int = 20000
    max_edit: int | None = 3
    neighborhood_size: int = 300
    walk_seed: int | None = None
    p: int | None = None
    kappa: float = 140.0
    kappa_h: float = 400.0
    alpha: float = 0.5
    T: int = 1000
    samples: int = 100
    mc_samples: int = 5000
    refit_every: int = 25
    refit_iters: int = 50
    fit_iters: int = 500
    reembed_every: int = 25
    max_atoms: int | None = 2000
    shared_target: bool = False
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        self.validate()

    @property
    def spec(self) -> FeatureSpec:
        return FeatureSpec.parse(self.features)

    def validate(self) -> None:
        self.spec  # parses the tags
        checks = [
            (self.walk_steps >= 0, "walk_steps must be >= 0"),
            (self.max_edit is None or self.max_edit >= 1, "max_edit must be >= 1"),
            (self.neighborhood_size >= 3, "neighborhood_size must be >= 3"),
            (self.p is None or self.p >= 2, "p must be >= 2"),
            (math.isfinite(self.kappa) and self.kappa >= 0, "kappa must be >= 0"),
            (math.isfinite(self.kappa_h) and self.kappa_h > 0, "kappa_h must be > 0"),
            (math.isfinite(self.alpha) and self.alpha >= 0, "alpha must be >= 0"),
            (self.T >= 1, "T must be >= 1"),
            (self.samples >= 1, "samples must be >= 1"),
            (self.mc_samples >= 100, "mc_samples must be >= 100"),
            (self.refit_every >= 1, "refit_every must be >= 1"),
            (self.refit_iters >= 1 and self.fit_iters >= 1, "iteration caps must be >= 1"),
            (self.reembed_every >= 0, "reembed_every must be >= 0 (0 disables)"),
            (self.max_atoms is None or self.max_atoms >= self.neighborhood_size,
             "max_atoms must be at least neighborhood_size"),
            (self.seed >= 0, "seed must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InputError(msg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise InputError(f"config {path} is not valid JSON: {exc}") from exc


@dataclass
class FittedModel:
    model: MixtureModel
    emb: Embedding
    example: Graph
    neighborhood: list[Graph]
    initial_kl: float
    fit_trace: list[float] = field(default_factory=list)


def fit_model(example: Graph, cfg: RunConfig) -> FittedModel:
    """Neighborhood, embedding, vMF baseline at the example, and initial weights."""
    spec = cfg.spec
    walk_seed = cfg.seed if cfg.walk_seed is None else cfg.walk_seed
    nb = random_walk_neighborhood(example, cfg.walk_steps, cfg.max_edit, walk_seed,
                                  max_members=cfg.neighborhood_size)
    graphs = list(nb.members)
    feats = [feature_vector(g, spec) for g in graphs]
    uniq = list(dict.fromkeys(feats))
    need = (cfg.p or 2) + 1
    if len(uniq) < need:
        raise InputError(
            f"the neighborhood has {len(uniq)} distinct feature vectors but at least "
            f"{need} are needed; increase walk_steps, max_edit or neighborhood_size")
    emb = spherical_embedding(uniq, p=cfg.p)
    row = {x: i for i, x in enumerate(uniq)}
    atoms = np.vstack([emb.points[row[x]] for x in feats])
    baseline = VmfParams(emb.points[row[feature_vector(example, spec)]], cfg.kappa)
    obj = KlObjective(atoms, baseline, cfg.kappa_h, cfg.mc_samples, cfg.seed)
    res = fit_pi(atoms, baseline, cfg.kappa_h, max_iter=cfg.fit_iters, objective=obj)
    model = MixtureModel(atoms, res.pi, cfg.kappa_h, baseline, cfg.alpha, graphs)
    return FittedModel(model, emb, example, graphs, res.objective, res.trace)


@dataclass
class GenerateResult:
    samples: list[Graph]
    manifest: dict
    kl_trace: list[tuple[int, float]]
    model: MixtureModel


def generate(example: Graph, cfg: RunConfig, fitted: FittedModel | None = None,
             progress=None) -> GenerateResult:
    """Draw ``cfg.samples`` graphs with sequential DP chains.

    Each chain gets its own generator spawned from ``cfg.seed`` and starts
    from the model left behind by the previous chain.
    """
    fitted = fitted or fit_model(example, cfg)
    opts = DpOptions(cfg.spec, cfg.refit_every, cfg.reembed_every, cfg.mc_samples,
                     cfg.refit_iters, cfg.seed, cfg.max_atoms)
    st = DpState(fitted.model, fitted.emb, example, cfg.kappa, opts)
    st.kl_trace.append((fitted.model.K, fitted.initial_kl))
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.samples + 1)
    shared = None
    if cfg.shared_target:
        from .vmf import vmf_sample

        shared = vmf_sample(st.baseline, None, np.random.default_rng(seeds[-1]))
    samples, runs = [], []
    for s in range(cfg.samples):
        res = mcmc_dp_sample(st.model, st.baseline, st.emb, cfg.T,
                             np.random.default_rng(seeds[s]), example=example,
                             y_star=shared, dp_state=st)
        samples.append(res.graph)
        runs.append({
            "index": s,
            "edges": res.graph.num_edges,
            "acceptance_rate": res.state.acceptance_rate,
            "y_star": [float(v) for v in res.state.y_star],
            "new_graphs": len(res.report.new_graphs),
            "K": res.report.final_K,
        })
        if progress:
            progress(s, res)
    manifest = {
        "version": __version__,
        "example": {"n": example.n, "edges": [list(e) for e in example.edges()]},
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out"},
        "embedding": {"p": fitted.emb.p, "radius": fitted.emb.radius},
        "initial_K": fitted.model.K,
        "final_K": st.model.K,
        "refit_count": st.refit_count,
        "reembed_count": st.reembed_count,
        "samples": runs,
    }
    return GenerateResult(samples, manifest, list(st.kl_trace), st.model)


def write_outputs(result: GenerateResult, out: str) -> dict[str, str]:
    """Numbered edge lists, the manifest, and the KL trace CSV."""
    os.makedirs(out, exist_ok=True)
    sdir = os.path.join(out, "samples")
    os.makedirs(sdir, exist_ok=True)
    width = max(3, len(str(len(result.samples) - 1)))
    for i, g in enumerate(result.samples):
        with open(os.path.join(sdir, f"sample_{i:0{width}d}.edges"), "w") as fh:
            fh.write(format_edge_list(g))
    paths = {"samples": sdir,
             "manifest": os.path.join(out, "manifest.json"),
             "kl_trace": os.path.join(out, "kl_trace.csv")}
    with open(paths["manifest"], "w") as fh:
        json.dump(result.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["kl_trace"], "w") as fh:
        fh.write("step,K,kl\n")
        for i, (k, v) in enumerate(result.kl_trace):
            fh.write(f"{i},{k},{v!r}\n")
    return paths
