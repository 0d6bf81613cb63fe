"""
Training loops

Selector pretraining and freezing, policy training for every variant, and
continual fine-tuning of a pretrained checkpoint on a few new demonstrations.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from skilllab.config import LearnConfig, RunConfig
from skilllab.diffcore import (
    Tensor, add, adam_step, backward, clip_grad_norm, cross_entropy, mean, mul, no_grad, reset_tape,
)
from skilllab.errors import DataError, NumericalError, VariantError
from skilllab.generate.dataset import Batch, Dataset
from skilllab.generate.records import Demonstration
from skilllab.learn.losses import (
    arm_row_losses, bc_on_off, coop_loss, disc_loss, draw_flow_noise, gate_regularizers,
)
from skilllab.policy.model import PolicyModel, Variant
from skilllab.policy.selector import HighLevelSelector, head_labels
from skilllab.utils.seeding import make_rng, stable_key

logger = logging.getLogger(__name__)

LOG_COLUMNS = ['step', 'L_FM_L', 'L_FM_R', 'L_coop', 'L_prior', 'L_sticky', 'L_sup', 'L_disc',
               'mean_gate', 'lr', 'L_on', 'L_off', 'total']
FINETUNE_COLUMNS = ['k', 'episodes'] + LOG_COLUMNS


# ---------------------------------------------------------------------------
# selector

def selector_accuracy(selector: HighLevelSelector, dataset: Dataset, index: np.ndarray) -> Tuple[float, float]:
    """Per-head accuracy of the selector on dataset rows, instructions equal to stage tokens."""
    b = dataset.batch(index)
    u_l, u_r, _ = selector.select(b.obs, b.u_L, b.u_R)
    return float(np.mean(u_l == b.u_L)), float(np.mean(u_r == b.u_R))


def train_selector(dataset: Dataset, cfg: Optional[RunConfig] = None, seed: Optional[int] = None,
                   progress: bool = False) -> HighLevelSelector:
    """
    Fit the skill selector on labelled steps and freeze it

    Parameters:
    -----------
    dataset : Dataset
        Steps labelled with their stage tokens; the stage tokens double as the
        instruction the selector receives
    cfg : RunConfig, optional
        Selector width (policy section) and training settings (learn section)
    seed : int, optional
        Overrides cfg.seed

    Returns:
    --------
    HighLevelSelector, trained and frozen

    Raises DataError when the held-out accuracy of either head stays below
    ``learn.selector_accuracy`` after ``learn.selector_steps`` updates.
    """
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    lc = cfg.learn
    rng = make_rng(seed, stable_key('selector'))
    selector = HighLevelSelector(cfg.policy, seed=seed)
    train_idx, held_idx = dataset.split(lc.selector_holdout, rng)
    check_every = max(1, lc.log_every)
    acc = (0.0, 0.0)
    for it in tqdm(range(1, lc.selector_steps + 1), desc="selector", disable=not progress):
        b = dataset.batch(rng.choice(train_idx, size=lc.batch_size))
        y_l, y_r = head_labels(b.u_L, b.u_R)
        reset_tape()
        l_l, l_r, _ = selector.logits(b.obs, b.u_L, b.u_R)
        loss = add(cross_entropy(l_l, y_l), cross_entropy(l_r, y_r))
        if not np.isfinite(loss.item()):
            raise NumericalError(f"non-finite selector loss at step {it}")
        selector.params.zero_grad()
        backward(loss)
        clip_grad_norm(selector.params, lc.grad_clip)
        adam_step(selector.params, lc.selector_lr, lc.beta1, lc.beta2, lc.adam_eps)
        if it % check_every == 0 or it == lc.selector_steps:
            acc = selector_accuracy(selector, dataset, held_idx)
            logger.debug("selector step %d: loss %.4f, held-out accuracy %.3f / %.3f", it, loss.item(), *acc)
            if min(acc) >= lc.selector_accuracy:
                break
    if min(acc) < lc.selector_accuracy:
        raise DataError(f"selector held-out accuracy {acc[0]:.3f} (left) / {acc[1]:.3f} (right) "
                        f"below {lc.selector_accuracy:.2f} after {lc.selector_steps} steps")
    selector.trained = True
    selector.freeze()
    logger.info("selector trained: held-out accuracy %.3f / %.3f", *acc)
    return selector


# ---------------------------------------------------------------------------
# policy

def combine_losses(row: Dict[str, float], lc: LearnConfig) -> float:
    """Total loss from one log row; gate columns are already weighted."""
    total = row['L_FM_L'] + row['L_FM_R']
    total += row['L_coop'] + row['L_prior'] + row['L_sticky'] + row['L_sup'] + row['L_disc']
    if lc.onoff_expert_grads:
        total += lc.onoff_weight * (row['L_on'] + row['L_off'])
    return total


def _mix(gate: np.ndarray, on: Tensor, off: Tensor) -> Tensor:
    g = np.asarray(gate, dtype=np.float32)
    return mean(add(mul(on, g), mul(off, 1.0 - g)))


def _binary(gate: np.ndarray) -> bool:
    return bool(np.all((gate == 0) | (gate == 1)))


def training_step(model: PolicyModel, batch: Batch, rng: np.random.Generator, lc: LearnConfig,
                  contexts: Optional[np.ndarray] = None,
                  gate_threshold: float = 0.5) -> Tuple[Tensor, Dict[str, float]]:
    """
    Build the training loss of one batch on a fresh tape

    Parameters:
    -----------
    model : PolicyModel
        Model being trained
    batch : Batch
        Rows including the previous-step row index of each sample
    rng : numpy.random.Generator
        Flow-noise source
    lc : LearnConfig
        Loss weights and gate options
    contexts : array of shape (N, d_h), optional
        Selector context of every dataset row (SKILLVLA)

    Returns:
    --------
    (total, row): the loss Tensor and its logged components
    """
    w = lc.weights
    b = len(batch)
    draw = draw_flow_noise(b, rng, lc.tau_beta)
    reset_tape()
    latents = model.encode(batch.obs, batch.u_L, batch.u_R)
    row = {k: 0.0 for k in LOG_COLUMNS if k not in ('step', 'lr')}

    if not model.has_gate:
        l_l, l_r = arm_row_losses(model, batch, draw, None, latents)
        fm_l, fm_r = mean(l_l), mean(l_r)
        total = add(fm_l, fm_r)
        row.update(L_FM_L=fm_l.item(), L_FM_R=fm_r.item(), total=total.item(),
                   mean_gate=1.0 if model.variant is Variant.TWIN else 0.0)
        return total, row

    if contexts is None:
        raise VariantError("SKILLVLA training needs selector contexts")
    y_hat = model.estimate_coop(contexts[batch.index])
    with no_grad():
        y_prev = model.estimate_coop(contexts[batch.prev]).data.copy()

    L_on, L_off, (on_l, on_r, off_l, off_r) = bc_on_off(batch, model, draw, latents)
    if not lc.discrete_gate:
        gate = y_hat.data.copy()
    elif lc.teacher_forced_gate:
        gate = batch.prior.astype(np.float32)
    else:
        gate = (y_hat.data >= gate_threshold).astype(np.float32)
    if _binary(gate):
        fm_l, fm_r = _mix(gate, on_l, off_l), _mix(gate, on_r, off_r)
    else:
        l_l, l_r = arm_row_losses(model, batch, draw, gate, latents)
        fm_l, fm_r = mean(l_l), mean(l_r)

    l_coop = coop_loss(L_on, L_off, y_hat, w.coop)
    l_prior, l_sticky, l_sup = gate_regularizers(y_hat, y_prev, batch.prior, lc.discrete_gate)
    l_disc, _ = disc_loss(L_on, L_off, y_hat)
    terms = [fm_l, fm_r, l_coop, mul(l_prior, w.prior), mul(l_sticky, w.sticky),
             mul(l_sup, w.sup), mul(l_disc, w.disc)]
    m_on, m_off = mean(L_on), mean(L_off)
    if lc.onoff_expert_grads:
        terms.append(mul(add(m_on, m_off), lc.onoff_weight))
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    row.update(
        L_FM_L=fm_l.item(), L_FM_R=fm_r.item(), L_coop=l_coop.item(),
        L_prior=w.prior * l_prior.item(), L_sticky=w.sticky * l_sticky.item(),
        L_sup=w.sup * l_sup.item(), L_disc=w.disc * l_disc.item(),
        mean_gate=float(np.mean(y_hat.data)), L_on=m_on.item(), L_off=m_off.item(),
        total=total.item(),
    )
    return total, row


def _fit(model: PolicyModel, dataset: Dataset, lc: LearnConfig, steps: int, rng: np.random.Generator,
         gate_threshold: float, desc: str, progress: bool) -> pd.DataFrame:
    contexts = None
    if model.has_gate:
        selector = model.require_selector()
        contexts = selector.context(dataset.obs, dataset.u_L, dataset.u_R)
    rows: List[Dict[str, float]] = []
    for it in tqdm(range(1, steps + 1), desc=desc, disable=not progress):
        batch = dataset.sample(lc.batch_size, rng)
        total, row = training_step(model, batch, rng, lc, contexts, gate_threshold)
        if not np.isfinite(row['total']):
            raise NumericalError(f"non-finite loss at training step {it}")
        model.params.zero_grad()
        backward(total)
        clip_grad_norm(model.params, lc.grad_clip)
        adam_step(model.params, lc.lr, lc.beta1, lc.beta2, lc.adam_eps)
        if it % max(1, lc.log_every) == 0 or it == steps:
            rows.append(dict(step=it, lr=lc.lr, **row))
            logger.info("%s step %d: L_FM %.4f / %.4f, gate %.3f, total %.4f", desc, it,
                        row['L_FM_L'], row['L_FM_R'], row['mean_gate'], row['total'])
    return pd.DataFrame(rows, columns=LOG_COLUMNS)


def train_policy(dataset: Dataset, variant: Union[str, Variant], cfg: Optional[RunConfig] = None,
                 selector: Optional[HighLevelSelector] = None, steps: Optional[int] = None,
                 progress: bool = False) -> Tuple[PolicyModel, pd.DataFrame]:
    """
    Train one policy variant on a demonstration dataset

    Parameters:
    -----------
    dataset : Dataset
        Training rows
    variant : str or Variant
        SKILLVLA, MONO, SHARED or TWIN
    cfg : RunConfig, optional
        Policy widths, learning settings, seed
    selector : HighLevelSelector, optional
        Trained and frozen selector; required for SKILLVLA
    steps : int, optional
        Overrides ``learn.steps``

    Returns:
    --------
    (model, log): the trained model and one log row per logging interval
    """
    cfg = cfg or RunConfig()
    variant = Variant.parse(variant)
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    model = PolicyModel(variant, cfg.policy, seed=cfg.seed, selector=selector,
                        continuous_gate=not cfg.learn.discrete_gate)
    if model.has_gate:
        model.require_selector()
    model.skills = dataset.skill_inventory()
    rng = make_rng(cfg.seed, stable_key('train'), stable_key(variant.value))
    n_steps = cfg.learn.steps if steps is None else steps
    log = _fit(model, dataset, cfg.learn, n_steps, rng, cfg.sampler.gate_threshold,
               f"train {variant.value.lower()}", progress)
    logger.info("trained %s for %d steps on %d rows (%d episodes)", variant.value, n_steps,
                len(dataset), dataset.n_episodes)
    return model, log


def finetune_dataset(demos: Sequence[Demonstration], k: int) -> Dataset:
    """The first k demonstrations as a training set."""
    if k > len(demos):
        raise DataError(f"continual fine-tuning needs {k} demonstrations, got {len(demos)}")
    return Dataset.from_demos(list(demos)[:k])


def continual_finetune(checkpoint: Union[str, PolicyModel], new_demos: Sequence[Demonstration], k: int,
                       cfg: Optional[RunConfig] = None, variant: Optional[Union[str, Variant]] = None,
                       progress: bool = False) -> Tuple[PolicyModel, pd.DataFrame]:
    """
    Fine-tune a pretrained policy on the first k new demonstrations

    All policy parameters train; the selector stays frozen. With k = 0 the
    pretrained model is returned unchanged with an empty log.

    Returns:
    --------
    (model, log): the tuned model and its training log, which carries the
    number of demonstrations (k) and the distinct episodes they hold
    """
    cfg = cfg or RunConfig()
    model = PolicyModel.load(checkpoint) if isinstance(checkpoint, str) else checkpoint
    if variant is not None and Variant.parse(variant) is not model.variant:
        raise VariantError(f"checkpoint holds a {model.variant.value} model, "
                           f"expected {Variant.parse(variant).value}")
    if k < 0:
        raise DataError("k must be non-negative")
    if k == 0:
        return model, pd.DataFrame(columns=FINETUNE_COLUMNS)
    dataset = finetune_dataset(new_demos, k)
    tuned = model.copy()
    rng = make_rng(cfg.seed, stable_key('finetune'), stable_key(model.variant.value), k)
    log = _fit(tuned, dataset, cfg.learn, cfg.learn.finetune_steps, rng, cfg.sampler.gate_threshold,
               f"finetune {model.variant.value.lower()} k={k}", progress)
    tuned.skills = [s for s in dict.fromkeys(list(model.skills) + dataset.skill_inventory())]
    log.insert(0, 'episodes', dataset.n_episodes)
    log.insert(0, 'k', k)
    logger.info("fine-tuned %s on %d episodes (%d rows)", model.variant.value, dataset.n_episodes, len(dataset))
    return tuned, log
