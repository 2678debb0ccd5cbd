"""Losses shared by both stages."""

import numpy as np

from firegap.gradcore import ops
from firegap.gradcore.tensor import Tensor, as_tensor

PROB_EPS = 1e-7
# number of probabilities clamped to [eps, 1-eps] so far (diagnostic)
clamp_events = 0


def focal_loss(prob, target, gamma=2.0, alpha=0.25, eps=PROB_EPS, reduce=True):
    """Mean of -alpha_t (1 - p_t)^gamma log p_t. ``alpha=None`` disables class balancing.

    With gamma=0 and alpha=None this is exactly binary cross-entropy.
    """
    global clamp_events
    prob = as_tensor(prob)
    y = np.asarray(target, dtype=np.float64)
    n_clamped = int(np.count_nonzero((prob.data < eps) | (prob.data > 1 - eps)))
    if n_clamped:
        clamp_events += n_clamped
        prob = ops.clamp(prob, eps, 1 - eps)
    pt = prob * Tensor(2 * y - 1) + Tensor(1 - y)  # p if y==1 else 1-p
    loss = -ops.log(pt)
    if gamma:
        loss = loss * (1.0 - pt) ** gamma
    if alpha is not None:
        loss = loss * Tensor(alpha * y + (1 - alpha) * (1 - y))
    return loss.mean() if reduce else loss


def kl_gaussian(mu_q, logvar_q, mu_p, logvar_p):
    """KL(N(mu_q, e^logvar_q) || N(mu_p, e^logvar_p)) for diagonal Gaussians.

    Per dimension: 0.5 * (logvar_p - logvar_q + (e^logvar_q + (mu_q - mu_p)^2) / e^logvar_p - 1),
    summed over the last axis and averaged over any leading batch axes.
    e.g. KL(N(0,1) || N(1,1)) = 0.5 per dim; KL(N(0,1) || N(0,e)) = 0.5 * (1 + 1/e - 1) = 1/(2e).
    """
    mu_q, logvar_q, mu_p, logvar_p = (as_tensor(t) for t in (mu_q, logvar_q, mu_p, logvar_p))
    d = mu_q - mu_p
    kl = (logvar_p - logvar_q + (ops.exp(logvar_q) + d * d) * ops.exp(-logvar_p) - 1.0) * 0.5
    kl = kl.sum(axis=-1)
    return kl.mean() if kl.ndim else kl


def d3pm_loss(logits, true_class, state=None, mask_state=2, channel_axis=1):
    """Categorical cross-entropy averaged over pixels whose corrupted state is MASK.

    ``state=None`` averages over every pixel.
    """
    logits = as_tensor(logits)
    logp = ops.log_softmax(logits, axis=channel_axis)
    y = np.asarray(true_class, dtype=np.int64)
    k = logits.shape[channel_axis]
    onehot = np.moveaxis(np.eye(k)[y], -1, channel_axis)
    nll = -(logp * Tensor(onehot)).sum(axis=channel_axis)
    if state is None:
        return nll.mean()
    sel = (np.asarray(state) == mask_state).astype(np.float64)
    n = sel.sum()
    if n == 0:
        return (nll * 0.0).sum()
    return (nll * Tensor(sel)).sum() * (1.0 / n)
