"""Independent reference implementations used by the tests."""

from __future__ import annotations

import contextlib
import itertools

import networkx as nx
import numpy as np
import torch

from fragflow.chem import Bond, MolGraph
from fragflow.coarse.matching import MatchProblem


def permute_molecule(mol: MolGraph, perm) -> MolGraph:
    """Relabel atoms: new index ``k`` holds old atom ``perm[k]``."""
    perm = list(perm)
    inverse = {old: new for new, old in enumerate(perm)}
    atoms = tuple(mol.atoms[old] for old in perm)
    bonds = tuple(Bond(inverse[b.a], inverse[b.b], b.order) for b in mol.bonds)
    return MolGraph(atoms, bonds)


def to_networkx(mol: MolGraph) -> nx.Graph:
    g = nx.Graph()
    for i, a in enumerate(mol.atoms):
        g.add_node(i, element=a.element, hydrogens=a.hydrogens, aromatic=a.aromatic)
    for b in mol.bonds:
        g.add_edge(b.a, b.b, order=int(b.order))
    return g


def isomorphic(a: MolGraph, b: MolGraph) -> bool:
    """Labelled graph isomorphism through networkx, independent of the
    package's canonicalization."""
    return nx.is_isomorphic(
        to_networkx(a),
        to_networkx(b),
        node_match=lambda x, y: x == y,
        edge_match=lambda x, y: x == y,
    )


def finite_difference_check(module, loss_fn, entries_per_param: int = 4, h: float = 1e-6, seed: int = 0) -> float:
    """Largest relative error between autograd and central differences over
    a sample of entries of every parameter. Run in float64."""
    import numpy as np
    import torch

    rng = np.random.default_rng(seed)
    module.zero_grad()
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for name, p in module.named_parameters():
        if p.grad is None:
            continue
        flat = p.data.view(-1)
        grad = p.grad.view(-1)
        picks = rng.choice(flat.numel(), size=min(entries_per_param, flat.numel()), replace=False)
        for k in picks:
            old = flat[k].item()
            with torch.no_grad():
                flat[k] = old + h
                up = loss_fn().item()
                flat[k] = old - h
                down = loss_fn().item()
                flat[k] = old
            numeric = (up - down) / (2 * h)
            analytic = grad[k].item()
            scale = max(abs(numeric), abs(analytic))
            # tiny gradients are dominated by rounding in the difference
            err = abs(numeric - analytic) / scale if scale > 1e-6 else abs(numeric - analytic)
            worst = max(worst, err)
    return worst


@contextlib.contextmanager
def float64():
    old = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    try:
        yield
    finally:
        torch.set_default_dtype(old)


def network_heads(vocab, examples, cfg, seed: int = 0):
    """(name, module, scalar loss closure) for every network head on small
    random inputs. Call and evaluate inside ``float64()``."""
    from fragflow.coarse.ae import Autoencoder
    from fragflow.flow.model import FlowModel, pad_batch
    from fragflow.neural.features import collate
    from fragflow.neural.models import FragmentEmbedder, FragmentPropertyNet, NoisyPropertyPredictor, build

    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)

    def weighted(out, k):
        w = torch.randn(out.shape, generator=torch.Generator().manual_seed(k))
        return (out * w).sum()

    heads = []
    flow = FlowModel(cfg, vocab, seed).double()
    ids = np.arange(min(len(vocab), 5))
    frag_batch = collate([flow.templates[int(i)] for i in ids]).to(torch.float64)

    emb = build(FragmentEmbedder(cfg.frag_hidden, cfg.embed_dim, cfg.frag_rounds), seed).double()
    heads.append(("fragment_embedder", emb, lambda: weighted(emb(frag_batch), 1)))

    nodes = [np.array([ids[0], -1, ids[-1], -1]), np.array([ids[1], -1, -1])]
    edges = []
    for x in nodes:
        a = np.triu(rng.random((len(x), len(x))) < 0.5, 1)
        edges.append(a | a.T)
    batch = pad_batch(nodes, edges, [0.3, 0.8], rng.standard_normal((2, cfg.latent_dim)))

    def flow_out():
        return flow(batch, ids, flow.embed(ids))

    heads.append(("node_embedding", flow, lambda: weighted(flow_out()[0], 2)))
    heads.append(("edge_logits", flow, lambda: weighted(flow_out()[1], 3)))
    heads.append(("latent_velocity", flow, lambda: weighted(flow_out()[2], 4)))

    noisy = build(NoisyPropertyPredictor(cfg, len(vocab)), seed).double()
    noisy.reset_table(seed)
    n = 4
    node_p = torch.softmax(torch.randn(2, n, len(vocab) + 1, generator=gen), -1)
    edge_p = torch.softmax(torch.randn(2, n, n, 2, generator=gen), -1)
    edge_p = (edge_p + edge_p.transpose(1, 2)) / 2
    mask = torch.tensor([[True] * 4, [True, True, True, False]])
    t = torch.tensor([0.2, 0.7])
    z = torch.randn(2, cfg.latent_dim, generator=gen)
    heads.append(("noisy_predictor", noisy, lambda: weighted(noisy(node_p, edge_p, mask, t, z), 5)))

    frag_pred = build(FragmentPropertyNet(cfg), seed).double()
    heads.append(("fragment_predictor", frag_pred, lambda: weighted(frag_pred(frag_batch), 6)))

    ae = Autoencoder(cfg, seed).double()
    part = list(examples[:3])
    noise = torch.Generator()

    def ae_loss():
        noise.manual_seed(7)
        return ae.loss(part, noise)[0]

    heads.append(("autoencoder", ae, ae_loss))
    return heads


def simulate_node_marginals(eta: float, n_traj: int, steps: int, checkpoints, seed: int = 0) -> dict:
    """Fraction of de-masked nodes at each checkpoint time, simulating the
    Euler node sampler with the exact posterior (a point mass on x₁ = 0)."""
    from fragflow.flow.noise import MASK
    from fragflow.flow.steps import euler_node_step

    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, steps + 1)
    states = np.full(n_traj, MASK, dtype=np.int64)
    post = np.zeros((n_traj, 2))
    post[:, 0] = 1.0
    out = {}
    for k in range(steps):
        t, dt = grid[k], grid[k + 1] - grid[k]
        for c in checkpoints:
            if abs(t - c) < 1e-12:
                out[c] = float(np.mean(states != MASK))
        states = euler_node_step(states, post, t, dt, eta, rng.random(n_traj))
    return out


def simulate_edge_marginals(eta: float, n_traj: int, steps: int, checkpoints, seed: int = 0) -> dict:
    """Fraction of edges equal to their target at each checkpoint, with the
    exact posterior and a uniform Bernoulli start."""
    from fragflow.flow.steps import euler_edge_step

    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, steps + 1)
    target = rng.random(n_traj) < 0.5
    current = (rng.random(n_traj) < 0.5).astype(np.int64)
    p_present = target.astype(np.float64)
    out = {}
    for k in range(steps):
        t, dt = grid[k], grid[k + 1] - grid[k]
        for c in checkpoints:
            if abs(t - c) < 1e-12:
                out[c] = float(np.mean(current == target))
        current = euler_edge_step(current, p_present, t, dt, eta, rng.random(n_traj))
    return out


def random_problem(rng: np.random.Generator) -> MatchProblem:
    """Random matching instance with at most 10 slots."""
    n_nodes = int(rng.integers(2, 6))
    arities = rng.integers(1, 4, size=n_nodes)
    slots = [(v, s) for v in range(n_nodes) for s in range(int(arities[v]))][:10]
    adj = rng.random((n_nodes, n_nodes)) < 0.6
    adj = np.triu(adj, 1)
    adj = adj | adj.T
    cands = [(i, j) for i, j in itertools.combinations(range(len(slots)), 2)
             if slots[i][0] != slots[j][0] and adj[slots[i][0], slots[j][0]]]
    return MatchProblem(tuple(slots), tuple(cands), rng.normal(size=len(cands)) * 3)
