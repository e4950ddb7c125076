"""Dual-branch embedding with visual structure optimization (SRS / BRS).

A visual branch ``phi`` (features -> embedding) and a semantic branch ``psi``
(attributes -> embedding) are trained jointly on mined tuples. The ranking
part is either the simple pairwise loss (SRS) or a bi-directional triplet
loss (BRS); both add a triplet loss on visual pairs that pulls same-class
embeddings together. All triplet margins are self-adaptive:
``m = alpha * (d_pos + d_neg)``, which makes each hinge argument
``(1 + alpha) * d_pos - (1 - alpha) * d_neg``. Gradients flow through the
margin.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kernels, mlp
from .errors import ConfigError, DatasetError, ShapeError
from .tensor import Rng, as_matrix, nearest_class, pairwise_sqdist
from .trainlog import TrainLog

_STREAM_VISUAL_INIT = 21
_STREAM_SEMANTIC_INIT = 22
_STREAM_MINING = 23

VARIANTS = ("SRS", "BRS")


@dataclass
class StructOptConfig:
    """Hyperparameters; defaults follow the AwA settings where those exist.

    ``hidden_visual`` and ``embed_dim`` default to the feature dimension
    (2048 for ResNet-101 features), which identity initialization requires.
    """

    variant: str = "SRS"
    batch_classes: int = 10
    batch_per_class: int = 10
    lr_semantic: float = 1e-5
    lr_visual: float = 1e-7
    hidden_semantic: int = 800
    hidden_visual: Optional[int] = None
    embed_dim: Optional[int] = None
    alpha1: float = 0.2
    alpha2: float = 0.2
    alpha3: float = 0.2
    beta: float = 1.0
    lambda_struct: float = 1.0
    l2_semantic: float = 1e-4
    l2_visual: float = 1e-4
    iters: int = 30000
    seed: int = 0
    visual_init: str = "rect_identity"

    def validate(self, d=None):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("batch_classes", "batch_per_class", "hidden_semantic", "iters"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if self.batch_classes < 2:
            raise ConfigError("batch_classes must be >= 2 so every anchor has negatives")
        if self.batch_per_class < 2:
            raise ConfigError("batch_per_class must be >= 2 so every anchor has a positive")
        for name in ("hidden_visual", "embed_dim"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, (int, np.integer)) or value < 1):
                raise ConfigError(f"{name} must be an integer >= 1 or null, got {value!r}")
        for name in ("lr_semantic", "lr_visual"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("alpha1", "alpha2", "alpha3"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        for name in ("beta", "lambda_struct", "l2_semantic", "l2_visual"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.visual_init not in ("rect_identity", "xavier"):
            raise ConfigError(f"visual_init must be 'rect_identity' or 'xavier', got {self.visual_init!r}")
        if d is not None and self.visual_init == "rect_identity":
            hv, emb = self.dims(d)
            if hv != d or emb != d:
                raise ConfigError(
                    f"rect_identity needs hidden_visual = embed_dim = d = {d}, got {hv} and {emb}")
        return self

    def dims(self, d):
        """``(hidden_visual, embed_dim)`` with unset values resolved to ``d``."""
        return (self.hidden_visual or d, self.embed_dim or d)

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class Nets:
    visual: mlp.TwoLayerNet
    semantic: mlp.TwoLayerNet

    def copy(self):
        return Nets(self.visual.copy(), self.semantic.copy())


class Tuple(NamedTuple):
    anchor_idx: int
    pos_idx: int
    neg_idx: int
    neg_class: int  # -1 for SRS


@dataclass
class MinedBatch:
    """A mined batch; index arrays refer to positions in ``instances``.

    Every batch member is an anchor. ``sem_*`` describe the semantic-anchor
    direction of BRS: one entry per batch class.
    """

    instances: np.ndarray
    labels: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    neg_class: np.ndarray
    sem_class: np.ndarray
    sem_pos: np.ndarray
    sem_neg: np.ndarray

    def tuples(self):
        """Per-anchor tuples with dataset instance indices."""
        inst = self.instances
        return [Tuple(int(inst[a]), int(inst[p]), int(inst[n]), int(c))
                for a, (p, n, c) in enumerate(zip(self.pos, self.neg, self.neg_class))]


def _check_batch_feasible(ds, cfg):
    if cfg.batch_classes > len(ds.seen_classes):
        raise ConfigError(
            f"batch_classes={cfg.batch_classes} exceeds the {len(ds.seen_classes)} seen classes")
    for c in ds.seen_classes:
        n = ds.train_instances_of(c).size
        if n < cfg.batch_per_class:
            raise DatasetError(
                f"seen class {int(c)} has {n} training instances, batch_per_class needs {cfg.batch_per_class}")


def mine_batch(rng, ds, nets, cfg):
    """Sample a class-balanced batch and mine its tuples under the current nets.

    Positives are random same-class batch members; visual negatives are the
    nearest other-class batch member in the embedding space; the BRS semantic
    negative for an anchor is the nearest other seen class, searched over all
    seen classes.
    """
    _check_batch_feasible(ds, cfg)
    seen = ds.seen_classes
    picked = np.sort(seen[rng.permutation(seen.size)[:cfg.batch_classes]])
    parts = []
    for c in picked:
        pool = ds.train_instances_of(c)
        parts.append(pool[np.sort(rng.permutation(pool.size)[:cfg.batch_per_class])])
    instances = np.concatenate(parts)
    labels = ds.labels[instances]
    b, m = instances.size, cfg.batch_per_class

    # random same-class partner: skip over the anchor's own slot
    offsets = np.array([rng.below(m - 1) for _ in range(b)], dtype=np.int64)
    slot = np.arange(b) % m
    pos = (np.arange(b) - slot) + np.where(offsets >= slot, offsets + 1, offsets)

    phi = mlp.forward(nets.visual, ds.features[instances])
    same = labels[:, None] == labels[None, :]
    neg = kernels.masked_argmin(pairwise_sqdist(phi, phi), ~same)

    sem_class = picked
    sem_pos = np.zeros(0, dtype=np.int64)
    sem_neg = np.zeros(0, dtype=np.int64)
    neg_class = np.full(b, -1, dtype=np.int64)
    if cfg.variant == "BRS":
        # ascending ids so distance ties go to the lowest class id
        by_id = np.sort(seen)
        psi_seen = mlp.forward(nets.semantic, ds.attributes[by_id])
        cand_mask = by_id[None, :] != labels[:, None]
        neg_class = by_id[kernels.masked_argmin(pairwise_sqdist(phi, psi_seen), cand_mask)]
        psi_batch = mlp.forward(nets.semantic, ds.attributes[sem_class])
        sem_pos = np.array([i * m + rng.below(m) for i in range(sem_class.size)], dtype=np.int64)
        sem_neg = kernels.masked_argmin(pairwise_sqdist(psi_batch, phi),
                                        sem_class[:, None] != labels[None, :])
    return MinedBatch(instances, labels, pos, neg, neg_class, sem_class, sem_pos, sem_neg)


# -- losses ------------------------------------------------------------------

def _adaptive_hinge(d_pos, d_neg, alpha):
    """Hinge values and the indicator of active terms for the adaptive-margin triplet."""
    arg = (1.0 + alpha) * d_pos - (1.0 - alpha) * d_neg
    return np.maximum(arg, 0.0), arg > 0


def _sqdist_rows(a, b):
    diff = a - b
    return np.sum(diff * diff, axis=1)


@dataclass
class LossParts:
    ranking: float
    struct: float
    total: float  # ranking + lambda_struct * struct (no L2 terms)


def _forward_both(nets, ds, batch):
    vis = mlp.forward_cache(nets.visual, ds.features[batch.instances])
    sem = mlp.forward_cache(nets.semantic, ds.attributes[ds.seen_classes])
    return vis, sem


def _class_rows(ds, classes):
    """Row positions of global class ids inside ``ds.seen_classes``."""
    lookup = np.full(ds.n_classes, -1, dtype=np.int64)
    lookup[ds.seen_classes] = np.arange(ds.seen_classes.size)
    rows = lookup[np.asarray(classes, dtype=np.int64)]
    if (rows < 0).any():
        raise DatasetError("semantic terms may only involve seen classes")
    return rows


def structure_terms(phi, batch, alpha3, with_grad=True):
    """Visual structure triplet loss and dLoss/dphi (``None`` without ``with_grad``)."""
    a = phi
    p = phi[batch.pos]
    n = phi[batch.neg]
    d_pos, d_neg = _sqdist_rows(a, p), _sqdist_rows(a, n)
    hinge, active = _adaptive_hinge(d_pos, d_neg, alpha3)
    if not with_grad:
        return float(hinge.sum()), None
    w_pos = (2.0 * (1.0 + alpha3)) * active
    w_neg = (2.0 * (1.0 - alpha3)) * active
    g_a = w_pos[:, None] * (a - p) - w_neg[:, None] * (a - n)
    grad = g_a.copy()
    np.add.at(grad, batch.pos, -w_pos[:, None] * (a - p))
    np.add.at(grad, batch.neg, w_neg[:, None] * (a - n))
    return float(hinge.sum()), grad


def simple_ranking_terms(phi, psi, label_rows, with_grad=True):
    """Summed squared distance between each embedded feature and its class embedding."""
    diff = phi - psi[label_rows]
    if not with_grad:
        return float(np.sum(diff * diff)), None, None
    g_psi = np.zeros_like(psi)
    np.add.at(g_psi, label_rows, -2.0 * diff)
    return float(np.sum(diff * diff)), 2.0 * diff, g_psi


def bidirectional_terms(phi, psi, batch, label_rows, neg_rows, sem_rows, alpha1, alpha2, beta,
                        with_grad=True):
    """Both directions of the adaptive-margin ranking loss and gradients w.r.t. phi and psi."""
    # feature anchors against matching / hardest non-matching class embeddings
    yp, yn = psi[label_rows], psi[neg_rows]
    d_pos, d_neg = _sqdist_rows(phi, yp), _sqdist_rows(phi, yn)
    h1, act1 = _adaptive_hinge(d_pos, d_neg, alpha1)
    loss = float(h1.sum())
    if not with_grad:
        if beta > 0 and sem_rows.size:
            ys = psi[sem_rows]
            h2, _ = _adaptive_hinge(_sqdist_rows(ys, phi[batch.sem_pos]),
                                    _sqdist_rows(ys, phi[batch.sem_neg]), alpha2)
            loss += beta * float(h2.sum())
        return loss, None, None

    g_phi = np.zeros_like(phi)
    g_psi = np.zeros_like(psi)
    w_pos = (2.0 * (1.0 + alpha1)) * act1
    w_neg = (2.0 * (1.0 - alpha1)) * act1
    g_phi += w_pos[:, None] * (phi - yp) - w_neg[:, None] * (phi - yn)
    np.add.at(g_psi, label_rows, -w_pos[:, None] * (phi - yp))
    np.add.at(g_psi, neg_rows, w_neg[:, None] * (phi - yn))

    if beta > 0 and sem_rows.size:
        ys = psi[sem_rows]
        xp, xn = phi[batch.sem_pos], phi[batch.sem_neg]
        d_pos, d_neg = _sqdist_rows(ys, xp), _sqdist_rows(ys, xn)
        h2, act2 = _adaptive_hinge(d_pos, d_neg, alpha2)
        w_pos = (2.0 * beta * (1.0 + alpha2)) * act2
        w_neg = (2.0 * beta * (1.0 - alpha2)) * act2
        np.add.at(g_psi, sem_rows, w_pos[:, None] * (ys - xp) - w_neg[:, None] * (ys - xn))
        np.add.at(g_phi, batch.sem_pos, -w_pos[:, None] * (ys - xp))
        np.add.at(g_phi, batch.sem_neg, w_neg[:, None] * (ys - xn))
        loss += beta * float(h2.sum())
    return loss, g_phi, g_psi


def _loss(nets, ds, batch, cfg, variant, with_grad=True):
    vis, sem = _forward_both(nets, ds, batch)
    phi, psi = vis.out, sem.out
    label_rows = _class_rows(ds, batch.labels)
    if variant == "SRS":
        rank, g_phi, g_psi = simple_ranking_terms(phi, psi, label_rows, with_grad)
    else:
        if (batch.neg_class < 0).any():
            raise ShapeError("BRS loss needs semantic negatives; mine the batch with variant='BRS'")
        rank, g_phi, g_psi = bidirectional_terms(
            phi, psi, batch, label_rows, _class_rows(ds, batch.neg_class),
            _class_rows(ds, batch.sem_class), cfg.alpha1, cfg.alpha2, cfg.beta, with_grad)
    struct = 0.0
    if cfg.lambda_struct > 0:
        struct, g_struct = structure_terms(phi, batch, cfg.alpha3, with_grad)
        if with_grad:
            g_phi = g_phi + cfg.lambda_struct * g_struct
    parts = LossParts(rank, struct, rank + cfg.lambda_struct * struct)
    if not with_grad:
        return parts, None
    grads = (mlp.backward(nets.visual, vis, g_phi), mlp.backward(nets.semantic, sem, g_psi))
    return parts, grads


def structure_loss(nets, ds, batch, alpha3, with_grad=True):
    """Visual structure loss alone; returns ``(loss, visual_grad or None)``."""
    vis = mlp.forward_cache(nets.visual, ds.features[batch.instances])
    loss, g_phi = structure_terms(vis.out, batch, alpha3, with_grad)
    return loss, (mlp.backward(nets.visual, vis, g_phi) if with_grad else None)


def kink_values(nets, ds, batch, cfg):
    """Every quantity whose sign switches a ReLU or hinge branch for this batch."""
    vis, sem = _forward_both(nets, ds, batch)
    phi, psi = vis.out, sem.out
    parts = [vis.pre1.ravel(), vis.pre2.ravel(), sem.pre1.ravel(), sem.pre2.ravel()]
    d = lambda a, b: _sqdist_rows(a, b)  # noqa: E731
    a3 = cfg.alpha3
    parts.append((1 + a3) * d(phi, phi[batch.pos]) - (1 - a3) * d(phi, phi[batch.neg]))
    if (batch.neg_class >= 0).all():
        rows = _class_rows(ds, batch.labels)
        neg_rows = _class_rows(ds, batch.neg_class)
        a1, a2 = cfg.alpha1, cfg.alpha2
        parts.append((1 + a1) * d(phi, psi[rows]) - (1 - a1) * d(phi, psi[neg_rows]))
        if batch.sem_pos.size:
            ys = psi[_class_rows(ds, batch.sem_class)]
            parts.append((1 + a2) * d(ys, phi[batch.sem_pos]) - (1 - a2) * d(ys, phi[batch.sem_neg]))
    return np.concatenate(parts)


def loss_srs(nets, ds, batch, cfg, with_grad=True):
    """Simple ranking + structure loss; returns ``(LossParts, (visual_grad, semantic_grad))``.

    With ``with_grad=False`` the gradient slot is ``None`` and backprop is skipped.
    """
    return _loss(nets, ds, batch, cfg, "SRS", with_grad)


def loss_brs(nets, ds, batch, cfg, with_grad=True):
    """Bi-directional ranking + structure loss; same return shape as :func:`loss_srs`."""
    return _loss(nets, ds, batch, cfg, "BRS", with_grad)


# -- training ----------------------------------------------------------------

def init_nets(ds, cfg):
    root = Rng(cfg.seed)
    hv, emb = cfg.dims(ds.d)
    visual = mlp.init(root.substream(_STREAM_VISUAL_INIT), ds.d, hv, emb, cfg.visual_init)
    semantic = mlp.init(root.substream(_STREAM_SEMANTIC_INIT), ds.k, cfg.hidden_semantic, emb, "xavier")
    return Nets(visual, semantic)


def structure_ratio(nets, features, labels):
    """Mean intra-class over mean inter-class squared distance of embedded features."""
    phi = mlp.forward(nets.visual, features)
    dist = pairwise_sqdist(phi, phi)
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(labels.size, dtype=bool)
    intra = dist[same & off_diag].mean()
    inter = dist[~same].mean()
    return float(intra / inter)


def train(ds, cfg=None, log_every=1, callback=None):
    """Run ``cfg.iters`` iterations of mine -> loss -> SGD on both branches.

    Returns ``(visual_net, semantic_net, log)``; the log columns are
    ``iteration, ranking_loss, struct_loss, total`` where ``total`` also
    includes both L2 penalties. ``callback(iteration, nets)`` runs after each
    update when given.
    """
    cfg = (cfg or StructOptConfig()).validate(ds.d)
    _check_batch_feasible(ds, cfg)
    nets = init_nets(ds, cfg)
    rng = Rng(cfg.seed).substream(_STREAM_MINING)
    lossfn = loss_srs if cfg.variant == "SRS" else loss_brs
    log = TrainLog(("iteration", "ranking_loss", "struct_loss", "total"))
    for it in range(cfg.iters):
        batch = mine_batch(rng, ds, nets, cfg)
        parts, (g_vis, g_sem) = lossfn(nets, ds, batch, cfg)
        if it % log_every == 0:
            total = (parts.total + cfg.l2_visual * mlp.l2_penalty(nets.visual)
                     + cfg.l2_semantic * mlp.l2_penalty(nets.semantic))
            log.append(it, parts.ranking, parts.struct, total)
        mlp.sgd_step(nets.visual, g_vis, cfg.lr_visual, cfg.l2_visual)
        mlp.sgd_step(nets.semantic, g_sem, cfg.lr_semantic, cfg.l2_semantic)
        if callback is not None:
            callback(it, nets)
    return nets.visual, nets.semantic, log


@dataclass(eq=False)
class StructOptModel:
    visual: mlp.TwoLayerNet
    semantic: mlp.TwoLayerNet

    def predict(self, attributes, features, candidates):
        return self.recognizer(attributes)(features, candidates)

    def recognizer(self, attributes):
        class_emb = mlp.forward(self.semantic, attributes)

        def run(features, candidates):
            return nearest_class(mlp.forward(self.visual, as_matrix(features)), class_emb, candidates)

        return run


def recognize(visual_net, semantic_net, attributes, candidates, x):
    """Candidate class whose embedded attributes are nearest the embedded feature ``x``."""
    x = as_matrix(x, "x")
    if x.shape[0] != 1:
        raise ShapeError("recognize takes a single 1×d feature")
    if visual_net.out_dim != semantic_net.out_dim:
        raise ShapeError(f"branch outputs differ: {visual_net.out_dim} vs {semantic_net.out_dim}")
    model = StructOptModel(visual_net, semantic_net)
    return int(model.predict(attributes, x, candidates)[0])


def save_model(path, visual_net, semantic_net):
    mlp.save_checkpoint(path, [visual_net, semantic_net])


def load_model(path):
    nets = mlp.load_checkpoint(path)
    if len(nets) != 2:
        raise ShapeError(f"structure-optimization checkpoint must hold 2 nets, found {len(nets)}")
    return StructOptModel(nets[0], nets[1])
