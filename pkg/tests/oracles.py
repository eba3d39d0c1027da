"""Independent reference implementations shared by the unit and acceptance tests."""

import math

import numpy as np
from scipy.stats import ortho_group

from mvfuse.fusion import JointGaussian
from mvfuse.prior import PosePrior


def random_spd(rng, lo=1.0, hi=10.0):
    q = ortho_group.rvs(3, random_state=rng)
    return q @ np.diag(rng.uniform(lo, hi, 3)) @ q.T


def random_instance(rng, m, k=21):
    """Random orthonormal basis, mean and per-joint Gaussians in camera space."""
    e = ortho_group.rvs(3 * k, random_state=rng)[:, :m]
    u = rng.normal(0, 30, 3 * k)
    prior = PosePrior(u, e, np.sort(rng.uniform(1, 100, m))[::-1])
    gaussians = [JointGaussian(rng.normal(0, 50, 3), random_spd(rng), 1.0, "camera") for _ in range(k)]
    return gaussians, prior


def gradient_descent_oracle(gaussians, prior, steps=100_000):
    """Minimize the Mahalanobis objective over alpha by plain gradient descent.

    The gradient is accumulated joint by joint from the objective itself;
    no normal matrix is formed.
    """
    k, m = prior.k, prior.m
    e = prior.components.reshape(k, 3, m)
    u = prior.mean.reshape(k, 3)
    inv = [np.linalg.inv(g.sigma) for g in gaussians]
    lipschitz = 2 * max(np.linalg.eigvalsh(w)[-1] for w in inv)
    alpha = np.zeros(m)
    for _ in range(steps):
        grad = np.zeros(m)
        for j, g in enumerate(gaussians):
            r = e[j] @ alpha + u[j] - g.mu
            grad += 2 * e[j].T @ (inv[j] @ r)
        alpha -= grad / lipschitz
        if np.abs(grad).max() < 1e-13:
            break
    return alpha


def loop_mean_error(preds, gts):
    """Per-joint and overall mean Euclidean error with explicit loops."""
    k = gts[0].k
    per_joint = [0.0] * k
    total = 0.0
    for p, g in zip(preds, gts):
        for j in range(k):
            d = math.sqrt(sum((p.joints[j, c] - g.joints[j, c]) ** 2 for c in range(3)))
            per_joint[j] += d
            total += d
    n = len(gts)
    return np.array(per_joint) / n, total / (n * k)


def recount_worst_case(preds, gts, tolerances):
    out = []
    for t in tolerances:
        good = 0
        for p, g in zip(preds, gts):
            if all(np.linalg.norm(p.joints[j] - g.joints[j]) <= t for j in range(g.k)):
                good += 1
        out.append(good / len(gts))
    return np.array(out)


def sorted_zbuffer(cloud, obb, plane, res):
    """Raster oracle: sort points by (pixel, distance) and keep the first of each pixel."""
    pu, pv, pn = plane.axes
    scale = (res / 2 - 2.5) / max(obb.extents[pu], obb.extents[pv])
    local = obb.to_local(cloud)
    col = np.clip(np.floor(res / 2 + scale * local[:, pu]).astype(int), 0, res - 1)
    row = np.clip(np.floor(res / 2 + scale * local[:, pv]).astype(int), 0, res - 1)
    dist = local[:, pn] + obb.extents[pn]
    pix = row * res + col
    order = np.lexsort((dist, pix))
    first = np.ones(len(order), bool)
    first[1:] = pix[order][1:] != pix[order][:-1]
    keep = order[first]
    img = np.full(res * res, np.inf)
    near, far = dist.min(), dist.max()
    span = far - near
    img[pix[keep]] = (dist[keep] - near) / span if span > 0 else 0.0
    return img.reshape(res, res)
