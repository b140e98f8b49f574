"""Graph samplers: direct multinomial draws, Metropolis-Hastings given a
spherical target, and the Dirichlet-process variant that grows its atom set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .embed import Embedding, out_of_sample, spherical_embedding
from .errors import InputError
from .features import FeatureSpec, feature_vector
from .graph import Graph
from .mixture import KlObjective, MixtureModel, baseline_init, fit_pi
from .vmf import VmfParams, vmf_sample


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def direct_sample(graphs, pi, count: int, seed=None) -> list[Graph]:
    """I.i.d. multinomial draws of graphs with probabilities ``pi``."""
    pi = np.asarray(pi, dtype=float).ravel()
    graphs = list(graphs)
    if len(graphs) != pi.size:
        raise InputError("one probability per graph is required")
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
        raise InputError("probabilities must be non-negative and sum to 1")
    idx = _rng(seed).choice(len(graphs), size=count, p=pi / pi.sum())
    return [graphs[i] for i in idx]


def propose(g: Graph, seed=None) -> Graph:
    """Toggle one uniformly chosen node pair."""
    if g.num_pairs == 0:
        raise InputError("a 1-node graph has no pair to toggle")
    k = int(_rng(seed).integers(g.num_pairs))
    return Graph(g.n, g.bits ^ (1 << k))


def log_proposal(src: Graph, dst: Graph) -> float:
    """``ln Q(dst | src)`` for the single-toggle proposal."""
    if (src.bits ^ dst.bits).bit_count() != 1:
        return -math.inf
    return -math.log(src.num_pairs)


def acceptance_probability(log_p_new: float, log_p_old: float,
                           log_q_back: float = 0.0, log_q_fwd: float = 0.0) -> float:
    """``min(1, r)`` with ``r = P(new) Q(old|new) / (P(old) Q(new|old))``."""
    if log_p_old == -math.inf:
        return 1.0
    log_r = (log_p_new + log_q_back) - (log_p_old + log_q_fwd)
    return 1.0 if log_r >= 0 else math.exp(log_r)


def perturb_example(g: Graph, seed=None) -> Graph:
    """One or two distinct uniform toggles of ``g``."""
    rng = _rng(seed)
    m = g.num_pairs
    if m == 0:
        return g
    k = min(int(rng.integers(1, 3)), m)
    bits = g.bits
    for p in rng.choice(m, size=k, replace=False):
        bits ^= 1 << int(p)
    return Graph(g.n, bits)


@dataclass
class ChainState:
    current: Graph
    t: int
    accepted: int
    y_star: np.ndarray
    rng_state: dict = field(repr=False, default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.t if self.t else 0.0


@dataclass
class MhResult:
    graph: Graph
    state: ChainState
    counts: np.ndarray | None = None


def _atom_index(model: MixtureModel) -> dict[int, int]:
    if not model.graph_refs:
        raise InputError("the model has no graphs attached to its atoms")
    return {g.bits: k for k, g in enumerate(model.graph_refs)}


def mh_sample(model: MixtureModel, f: VmfParams, T: int, seed=None,
              example: Graph | None = None, y_star=None, start: Graph | None = None,
              track: bool = False) -> MhResult:
    """Metropolis-Hastings over the atoms' graphs for one target ``y_star``.

    ``P(G_k | y) ∝ pi_k h_k(y)``.  Proposals that are not atoms are
    rejected.  Without ``start`` the chain begins at a perturbed example, or
    at the example itself when the perturbation is not an atom.  ``track``
    records per-atom visit counts over the ``T`` steps.
    """
    if T < 1:
        raise InputError("T must be >= 1")
    rng = _rng(seed)
    index = _atom_index(model)
    y = vmf_sample(f, None, rng) if y_star is None else np.asarray(y_star, dtype=float)
    if start is None:
        if example is None:
            raise InputError("either an example graph or a start graph is needed")
        start = perturb_example(example, rng)
        if start.bits not in index and example.bits in index:
            start = example
    if start.bits not in index:
        raise InputError("the starting graph has no atom in the model")
    scores = model.atom_log_scores(y)
    m = start.num_pairs
    n = start.n
    pairs = rng.integers(0, m, size=T)
    logu = np.log(rng.random(T))
    cur, k = start.bits, index[start.bits]
    accepted = 0
    counts = np.zeros(model.K, dtype=np.int64) if track else None
    for t in range(T):
        nb = cur ^ (1 << int(pairs[t]))
        k2 = index.get(nb)
        # non-atoms carry no mass; single-toggle proposals are symmetric,
        # so the Q terms cancel
        if k2 is not None and ((log_r := scores[k2] - scores[k]) >= 0
                               or logu[t] < log_r):
            cur, k = nb, k2
            accepted += 1
        if track:
            counts[k] += 1
    state = ChainState(Graph(n, cur), T, accepted, y, rng.bit_generator.state)
    return MhResult(Graph(n, cur), state, counts)


@dataclass
class DpOptions:
    spec: FeatureSpec
    refit_every: int = 25
    reembed_every: int = 25
    mc_samples: int = 5000
    refit_iters: int = 50
    fit_seed: int = 0
    max_atoms: int | None = 2000


@dataclass
class DpRunReport:
    initial_K: int
    final_K: int
    new_graphs: list[Graph]
    refit_count: int
    samples: list[Graph]
    reembed_count: int = 0
    kl_trace: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class DpState:
    """Mutable bookkeeping shared by successive DP chains.

    Feature rows of the embedding are unique; ``row_of`` maps a feature
    tuple to its row and every atom points at the row of its graph.
    """

    model: MixtureModel
    emb: Embedding
    example: Graph
    kappa: float
    opts: DpOptions
    row_of: dict = field(default_factory=dict)
    index: dict = field(default_factory=dict)
    feats: list = field(default_factory=list)
    since_embed: int = 0
    pending_refit: int = 0
    refit_count: int = 0
    reembed_count: int = 0
    kl_trace: list = field(default_factory=list)

    def __post_init__(self):
        if not self.row_of:
            self.row_of = {tuple(int(v) for v in r): i
                           for i, r in enumerate(self.emb.source_features)}
        self.index = {g.bits: k for k, g in enumerate(self.model.graph_refs)}
        if len(self.feats) != len(self.model.graph_refs):
            self.feats = [feature_vector(g, self.opts.spec) for g in self.model.graph_refs]

    @property
    def full(self) -> bool:
        """True once the atom cap is reached; unseen graphs are then refused."""
        cap = self.opts.max_atoms
        return cap is not None and self.model.K >= cap

    @property
    def baseline(self) -> VmfParams:
        return self.model.baseline

    def coordinate(self, x: tuple[int, ...]) -> np.ndarray:
        row = self.row_of.get(x)
        if row is not None:
            return self.emb.points[row]
        return out_of_sample(self.emb, x)

    def add_graph(self, g: Graph) -> int:
        x = feature_vector(g, self.opts.spec)
        y = self.coordinate(x)
        self.feats.append(x)
        m = self.model
        lf = float(baseline_init(np.vstack([m.atoms, y]), m.baseline)[-1])
        pi = np.append(m.pi * (1 - lf), lf)
        self.model = MixtureModel(np.vstack([m.atoms, y]), pi, m.kappa_h, m.baseline,
                                  m.alpha, m.graph_refs + [g])
        k = self.model.K - 1
        self.index[g.bits] = k
        self.since_embed += 1
        self.pending_refit += 1
        if self.opts.reembed_every and self.since_embed >= self.opts.reembed_every:
            self.reembed()
        if self.pending_refit >= self.opts.refit_every:
            self.refit(warm=True)
        return k

    def refit(self, warm: bool = True) -> float:
        m = self.model
        obj = KlObjective(m.atoms, m.baseline, m.kappa_h, self.opts.mc_samples,
                          self.opts.fit_seed)
        res = fit_pi(m.atoms, m.baseline, m.kappa_h, init=m.pi if warm else None,
                     max_iter=self.opts.refit_iters, objective=obj)
        self.model = MixtureModel(m.atoms, res.pi, m.kappa_h, m.baseline, m.alpha,
                                  m.graph_refs)
        self.pending_refit = 0
        self.refit_count += 1
        self.kl_trace.append((m.K, res.objective))
        return res.objective

    def reembed(self) -> None:
        """Full recompute over all distinct features, aligned to the old frame.

        The new coordinates are rotated onto the old ones by orthogonal
        Procrustes over the shared rows, so a target drawn before the
        recompute keeps its meaning.
        """
        feats = self.feats
        uniq = list(dict.fromkeys(feats))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            new = spherical_embedding(uniq, p=self.emb.p)
        old_rows = [self.coordinate(x) for x in uniq]
        # keep the dimension fixed: a lower-rank recompute gets zero columns
        pad = self.emb.p - new.p
        new_pts = np.pad(new.points, ((0, 0), (0, pad)))
        new_raw = np.pad(new.raw, ((0, 0), (0, pad)))
        R, _ = orthogonal_procrustes(new_pts, np.vstack(old_rows))
        pts = new_pts @ R
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        self.emb = Embedding(points=pts, p=self.emb.p, radius=new.radius,
                             source_features=new.source_features,
                             eigen_spectrum=new.eigen_spectrum, raw=new_raw @ R,
                             clamp=new.clamp, requested_p=new.requested_p)
        self.row_of = {x: i for i, x in enumerate(uniq)}
        atoms = np.vstack([pts[self.row_of[x]] for x in feats])
        mu = pts[self.row_of[feature_vector(self.example, self.opts.spec)]]
        m = self.model
        self.model = MixtureModel(atoms, m.pi, m.kappa_h, VmfParams(mu, self.kappa),
                                  m.alpha, m.graph_refs)
        self.since_embed = 0
        self.reembed_count += 1
        self.pending_refit = max(self.pending_refit, 1)


@dataclass
class DpResult:
    graph: Graph
    model: MixtureModel
    report: DpRunReport
    state: ChainState


def mcmc_dp_sample(model: MixtureModel, f: VmfParams, emb: Embedding, T: int, seed=None,
                   opts: DpOptions | None = None, example: Graph | None = None,
                   y_star=None, dp_state: DpState | None = None) -> DpResult:
    """One chain of the Dirichlet-process sampler.

    Proposals that match an atom are scored with ``pi_k h_k(y*)``; unseen
    graphs get the new-graph score ``alpha / (K + alpha) u_p``.  Whenever
    the chain sits on an unseen graph it becomes an atom, is placed on the
    sphere out of sample, and the weights are refit on the configured
    cadence and once more at the end of the chain if atoms were added.
    Once ``opts.max_atoms`` atoms exist, unseen graphs are refused (and an
    unseen starting graph is replaced by the example), which bounds the cost
    of refits and re-embeddings.

    The caller's ``model`` is not modified; the returned model is the
    chain's updated copy.  Pass ``dp_state`` to carry embedding and cadence
    bookkeeping from one chain to the next.
    """
    if T < 1:
        raise InputError("T must be >= 1")
    if example is None:
        raise InputError("an example graph is required")
    if dp_state is None:
        if opts is None:
            raise InputError("DP options (at least the feature spec) are required")
        dp_state = DpState(model, emb, example, f.kappa, opts)
    st = dp_state
    rng = _rng(seed)
    initial_K = st.model.K
    y = vmf_sample(st.baseline, None, rng) if y_star is None else np.asarray(y_star, float)
    start = perturb_example(example, rng)
    n, m = start.n, start.num_pairs
    pairs = rng.integers(0, m, size=T)
    logu = np.log(rng.random(T))
    new_graphs: list[Graph] = []
    refits_before = st.refit_count
    reembeds_before = st.reembed_count

    def scores_now():
        return st.model.atom_log_scores(y), st.model.log_new_graph_score()

    # unseen graphs carry no mass without DP weight or once the cap is hit
    closed = st.full or st.model.alpha == 0
    cur = start.bits
    if cur not in st.index and closed:
        start, cur = example, example.bits
    if cur not in st.index:
        st.add_graph(Graph(n, cur))
        new_graphs.append(Graph(n, cur))
    scores, log_new = scores_now()
    cur_score = scores[st.index[cur]]
    accepted = 0
    for t in range(T):
        nb = cur ^ (1 << int(pairs[t]))
        k2 = st.index.get(nb)
        if k2 is None:
            s2 = -math.inf if closed or st.full else log_new
        else:
            s2 = scores[k2]
        log_r = s2 - cur_score
        if log_r >= 0 or logu[t] < log_r:
            cur = nb
            accepted += 1
            if k2 is None:
                g = Graph(n, cur)
                st.add_graph(g)
                new_graphs.append(g)
                scores, log_new = scores_now()
            cur_score = scores[st.index[cur]]
    if st.pending_refit:
        st.refit(warm=True)
    report = DpRunReport(initial_K, st.model.K, new_graphs, st.refit_count - refits_before,
                         [Graph(n, cur)], st.reembed_count - reembeds_before,
                         list(st.kl_trace))
    state = ChainState(Graph(n, cur), T, accepted, y, rng.bit_generator.state)
    return DpResult(Graph(n, cur), st.model, report, state)
