"""
Training objectives

Flow matching on the joint action, the on/off communication comparison, the
cooperation objective and the gate regularisers. Every loss returns diffcore
Tensors so the caller can weight, sum and backpropagate them.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import special

from skilllab.diffcore import Tensor, add, bce, detach, mean, mse, mul, sub
from skilllab.errors import DataError, VariantError
from skilllab.generate.dataset import Batch
from skilllab.policy.model import ACTION_DIM, Latents, PolicyModel

ArrayLike = Union[Tensor, np.ndarray, float]


@dataclass(frozen=True)
class FlowDraw:
    """Noise and interpolation times for one batch, shared by all passes over it."""
    eps: np.ndarray      # (B, 6)
    tau: np.ndarray      # (B,)

    def interpolate(self, actions: np.ndarray) -> np.ndarray:
        t = self.tau[:, None]
        return ((1.0 - t) * self.eps + t * actions).astype(np.float32)

    def target(self, actions: np.ndarray) -> np.ndarray:
        return (actions - self.eps).astype(np.float32)


def draw_flow_noise(batch_size: int, rng: np.random.Generator,
                    tau_beta: Tuple[float, float] = (1.0, 1.0)) -> FlowDraw:
    eps = rng.standard_normal((batch_size, 2 * ACTION_DIM)).astype(np.float32)
    tau = rng.beta(tau_beta[0], tau_beta[1], size=batch_size).astype(np.float32)
    return FlowDraw(eps, tau)


def joint_actions(batch: Batch) -> np.ndarray:
    return np.concatenate([batch.a_L, batch.a_R], axis=-1).astype(np.float32)


def _check(batch: Batch) -> None:
    if len(batch) == 0:
        raise DataError("empty batch")


def arm_row_losses(model: PolicyModel, batch: Batch, draw: FlowDraw, gate: Optional[np.ndarray],
                   latents: Optional[Latents] = None) -> Tuple[Tensor, Tensor]:
    """Per-sample squared velocity error of each arm, shapes (B,) and (B,)."""
    _check(batch)
    if latents is None:
        latents = model.encode(batch.obs, batch.u_L, batch.u_R)
    actions = joint_actions(batch)
    v_l, v_r = model.expert_velocity(Tensor(draw.interpolate(actions)), draw.tau, latents, batch.obs, gate)
    u = draw.target(actions)
    return mse(v_l, u[:, :ACTION_DIM], reduction='row'), mse(v_r, u[:, ACTION_DIM:], reduction='row')


def flow_matching_loss(batch: Batch, model: PolicyModel, gate_values: Optional[np.ndarray] = None,
                       rng: Optional[np.random.Generator] = None, draw: Optional[FlowDraw] = None,
                       tau_beta: Tuple[float, float] = (1.0, 1.0)) -> Tuple[Tensor, Tensor]:
    """
    Per-arm flow-matching losses (L_L, L_R)

    Parameters:
    -----------
    batch : Batch
        Demonstration rows
    model : PolicyModel
        Any variant; MONO's joint loss is split by coordinate block
    gate_values : array of shape (B,), optional
        Message multipliers in [0, 1]; ignored by gate-less variants
    rng : numpy.random.Generator, optional
        Source of the noise draw when ``draw`` is not given
    draw : FlowDraw, optional
        Fixed noise and times

    Returns:
    --------
    (L_L, L_R): scalar Tensors, mean over the batch of the per-arm squared error
    """
    _check(batch)
    if draw is None:
        draw = draw_flow_noise(len(batch), rng if rng is not None else np.random.default_rng(), tau_beta)
    l_l, l_r = arm_row_losses(model, batch, draw, gate_values)
    return mean(l_l), mean(l_r)


def bc_on_off(batch: Batch, model: PolicyModel, draw: FlowDraw,
              latents: Optional[Latents] = None) -> Tuple[Tensor, Tensor, Tuple[Tensor, ...]]:
    """
    Behaviour-cloning loss with messages forced on and forced off

    Both passes reuse the same noise and times, so their difference isolates the
    effect of communication.

    Returns:
    --------
    (L_on, L_off, rows): per-sample losses L_L + L_R of shape (B,) and the four
    per-arm row losses (on_L, on_R, off_L, off_R)
    """
    if not model.has_gate:
        raise VariantError(f"{model.variant.value} has no cooperation gate")
    _check(batch)
    if latents is None:
        latents = model.encode(batch.obs, batch.u_L, batch.u_R)
    b = len(batch)
    on_l, on_r = arm_row_losses(model, batch, draw, np.ones(b, dtype=np.float32), latents)
    off_l, off_r = arm_row_losses(model, batch, draw, np.zeros(b, dtype=np.float32), latents)
    return add(on_l, on_r), add(off_l, off_r), (on_l, on_r, off_l, off_r)


def _values(x: ArrayLike) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float32)


def _lift(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def coop_loss(L_on: ArrayLike, L_off: ArrayLike, alpha: ArrayLike, lam: float = 1.0) -> Tensor:
    """mean(lam * stopgrad(L_on - L_off) * alpha); only alpha receives gradient."""
    diff = detach(_lift(_values(L_on) - _values(L_off)))
    return mean(mul(mul(diff, lam), _lift(alpha)))


def bernoulli_entropy(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return special.entr(p) + special.entr(1.0 - p)


def gate_distance(y: Tensor, target: ArrayLike, discrete: bool) -> Tensor:
    """
    Squared error (continuous gate) or mean Bernoulli KL(target || y) (probabilistic gate)

    The KL is computed as binary cross-entropy minus the entropy of the target,
    which is constant in y.
    """
    target = np.broadcast_to(_values(target), y.shape).astype(np.float32)
    if not discrete:
        return mse(y, target)
    h = float(np.mean(bernoulli_entropy(target)))
    return sub(bce(y, detach(Tensor(target))), h)


def gate_regularizers(y_t: Tensor, y_prev: ArrayLike, alpha_vlm: ArrayLike,
                      discrete: bool = True) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Prior, stickiness and sparsity terms on the gate

    Parameters:
    -----------
    y_t : Tensor of shape (B,)
        Current gate values
    y_prev : array of shape (B,)
        Gate values at the previous step of the same episode, used as constants
    alpha_vlm : array of shape (B,)
        Cooperation prior labels
    discrete : bool
        Bernoulli KL when True, squared error when False

    Returns:
    --------
    (L_prior, L_sticky, L_sup), unweighted scalar Tensors
    """
    y_t = _lift(y_t)
    l_prior = gate_distance(y_t, alpha_vlm, discrete)
    l_sticky = gate_distance(y_t, _values(y_prev), discrete)
    return l_prior, l_sticky, mean(y_t)


def disc_label(L_on: ArrayLike, L_off: ArrayLike) -> np.ndarray:
    """1 where communication lowers the loss; ties give 0."""
    return (_values(L_on) < _values(L_off)).astype(np.float32)


def disc_loss(L_on: ArrayLike, L_off: ArrayLike, y_hat: Tensor) -> Tuple[Tensor, np.ndarray]:
    """Binary cross-entropy of the gate probability against the usefulness label."""
    y = disc_label(L_on, L_off)
    y_hat = _lift(y_hat)
    return bce(y_hat, detach(Tensor(np.broadcast_to(y, y_hat.shape).copy()))), y
