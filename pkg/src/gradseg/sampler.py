"""Suggestion strategies: gradient-guided latent search, random, and oracle.

The gradient-guided rule, per labeled seed sample: perturb the image along
the loss gradient (x' = x + alpha * dL/dx), project x' to the latent space
with the frozen VAE encoder, then pick the unlabeled candidate nearest to
z' in Euclidean distance whose displacement from z' stays within a cone
around the direction z' - z (cosine >= threshold). If no candidate
qualifies, the overall nearest is returned with a fallback flag. Ties in
distance break toward the lowest sample id.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .metrics import dice_score
from .segmenter import argmax_mask, input_gradient, predict_probabilities


@dataclass(frozen=True)
class SamplerConfig:
    alpha: float = 1e-3  # gradient step length
    cos_threshold: float = 0.5  # cos(pi/3): cone half-angle pi/3
    epsilon_norm: float = 1e-9  # below this a direction is degenerate
    fallback_to_nearest: bool = True

    def validate(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not -1.0 <= self.cos_threshold <= 1.0:
            raise ValueError("cos_threshold must be in [-1, 1]")


@dataclass(frozen=True)
class Suggestion:
    seed_id: int
    suggested_id: int
    distance: float
    cosine: float | None  # None when the angular test was skipped
    fallback: bool


def integrate_gradient(x, grad, alpha):
    """x' = x + alpha * grad, elementwise."""
    x = np.asarray(x)
    grad = np.asarray(grad)
    if x.shape != grad.shape:
        raise ValueError(f"extent mismatch: {x.shape} vs {grad.shape}")
    return x + np.asarray(alpha, dtype=x.dtype) * grad


def euclidean(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimensionality mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


class DegenerateDirection(ValueError):
    pass


def cosine(z_j, z_prime, z_i, epsilon_norm=1e-9):
    """cos of the angle between (z_j - z') and (z' - z_i)."""
    u = np.asarray(z_j, dtype=np.float64) - np.asarray(z_prime, dtype=np.float64)
    v = np.asarray(z_prime, dtype=np.float64) - np.asarray(z_i, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < epsilon_norm or nv < epsilon_norm:
        raise DegenerateDirection("near-zero direction vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def select_candidate(z_i, z_prime, cand_ids, cand_z, config):
    """Core selection rule over one seed's candidates.

    cand_ids/cand_z: parallel id list and (M, z_dim) matrix of unlabeled,
    non-excluded candidates. Returns (candidate id, distance, cosine or
    None, fallback flag). The scan runs in ascending (distance, id) order;
    a candidate qualifies when both direction vectors are non-degenerate
    and the cosine clears the threshold.
    """
    if len(cand_ids) == 0:
        raise ValueError("empty candidate set")
    z_i = np.asarray(z_i, dtype=np.float64)
    z_prime = np.asarray(z_prime, dtype=np.float64)
    cand_z = np.asarray(cand_z, dtype=np.float64)
    ids = np.asarray(cand_ids)
    dists = np.linalg.norm(cand_z - z_prime[None, :], axis=1)
    order = np.lexsort((ids, dists))

    seed_dir_ok = np.linalg.norm(z_prime - z_i) >= config.epsilon_norm
    if seed_dir_ok:
        for k in order:
            try:
                c = cosine(cand_z[k], z_prime, z_i, config.epsilon_norm)
            except DegenerateDirection:
                continue
            if c >= config.cos_threshold:
                return int(ids[k]), float(dists[k]), c, False
    # nothing qualified (or the gradient displacement itself is degenerate):
    # fall back to the overall nearest candidate
    k = order[0]
    try:
        c = cosine(cand_z[k], z_prime, z_i, config.epsilon_norm)
    except DegenerateDirection:
        c = None
    return int(ids[k]), float(dists[k]), c, True


class GradientGuidedSampler:
    """Binds the selection rule to the segmenter, VAE and latent table."""

    def __init__(self, vae, latent_table, config=None):
        self.vae = vae
        self.table = latent_table
        self.config = config or SamplerConfig()
        self.config.validate()

    def project(self, pixels):
        """Encode an image to its posterior-mean latent point."""
        x = Tensor(np.asarray(pixels, dtype=self.vae.store.dtype)[None, None])
        mu, _ = self.vae.encode(x, train=False)
        return mu.data[0].astype(np.float64)

    def suggest_for_seed(self, net, seed_sample, unlabeled_ids, exclusions=()):
        """One suggestion for one labeled seed sample."""
        cand_ids = sorted(set(unlabeled_ids) - set(exclusions))
        if not cand_ids:
            raise ValueError("no unlabeled candidates remain")
        grad = input_gradient(net, seed_sample.pixels, seed_sample.mask)
        x_prime = integrate_gradient(seed_sample.pixels, grad, self.config.alpha)
        z_prime = self.project(x_prime)
        z_i = self.table.vec(seed_sample.id).astype(np.float64)
        cand_z = self.table.subset(cand_ids)
        sid, dist, cos_val, fb = select_candidate(
            z_i, z_prime, cand_ids, cand_z, self.config
        )
        return Suggestion(seed_sample.id, sid, dist, cos_val, fb)

    def suggest_batch(self, net, seed_samples, unlabeled_ids, m):
        """m suggestions from m seeds, all distinct and unlabeled.

        Seeds are processed in ascending id order; accepted suggestions are
        excluded from later seeds' candidate sets.
        """
        if len(seed_samples) != m:
            raise ValueError(f"need {m} seeds, got {len(seed_samples)}")
        if len(unlabeled_ids) < m:
            raise ValueError("not enough unlabeled samples")
        exclusions = set()
        out = []
        for seed in sorted(seed_samples, key=lambda s: s.id):
            sug = self.suggest_for_seed(net, seed, unlabeled_ids, exclusions)
            exclusions.add(sug.suggested_id)
            out.append(sug)
        return out


def random_strategy(unlabeled_ids, m, rng):
    """Uniform sample of m ids without replacement."""
    ids = sorted(unlabeled_ids)
    if len(ids) < m:
        raise ValueError("not enough unlabeled samples")
    return [int(i) for i in rng.choice_without_replacement(ids, m)]


def oracle_strategy(net, unlabeled_samples, m, batch_size=64):
    """m unlabeled ids with the lowest predicted mean Dice vs ground truth."""
    if len(unlabeled_samples) < m:
        raise ValueError("not enough unlabeled samples")
    scored = []
    for lo in range(0, len(unlabeled_samples), batch_size):
        chunk = unlabeled_samples[lo : lo + batch_size]
        for s in chunk:
            if s.mask is None:
                raise ValueError(f"sample {s.id} has no ground truth mask")
        probs = predict_probabilities(net, np.stack([s.pixels for s in chunk]))
        for s, p in zip(chunk, probs):
            pred = argmax_mask(p)
            K = net.n_classes
            mean_dice = float(
                np.mean([dice_score(pred, s.mask, k) for k in range(K)])
            )
            scored.append((mean_dice, s.id))
    scored.sort()
    return [sid for _, sid in scored[:m]]
