"""
Plotting functions for evaluation results
"""
import os
from typing import Dict, List, Optional, Sequence

import matplotlib
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from skilllab.world.sim import WorldState

# reproducible SVG ids, no timestamp
matplotlib.rcParams['svg.hashsalt'] = 'skilllab'
matplotlib.rcParams['axes.unicode_minus'] = False
plt.rcParams['font.family'] = 'DejaVu Sans'

_SVG_META = {'Date': None}


def _save(path: str) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    plt.savefig(path, format='svg', metadata=_SVG_META)
    plt.close()
    return path


def plot_gate_trace(yhat: Sequence[float], alpha: Sequence[float], priors: Sequence[int], path: str,
                    title: str = 'Cooperation gate') -> str:
    """
    Gate probability and applied gate over one episode, dual stages shaded

    Parameters:
    -----------
    yhat, alpha : sequences of float
        Predicted probability and applied gate per control step
    priors : sequence of int
        1 on steps of a dual-arm stage
    path : str
        Output SVG path

    Returns:
    --------
    str: path to the created plot
    """
    t = np.arange(len(alpha))
    plt.figure(figsize=(10, 3))
    dual = np.asarray(priors, dtype=bool)
    if dual.any():
        plt.fill_between(t, 0, 1, where=dual, step='post', color='tab:orange', alpha=0.15, label='dual stage')
    plt.plot(t, yhat, color='tab:blue', label='predicted')
    plt.step(t, alpha, where='post', color='black', linewidth=1.0, label='applied')
    plt.ylim(-0.05, 1.05)
    plt.xlabel('Control step')
    plt.ylabel('Gate')
    plt.title(title)
    plt.legend(loc='upper left')
    return _save(path)


def plot_continual_curve(curve: pd.DataFrame, path: str) -> str:
    """Success against the number of fine-tuning demonstrations, one line per variant."""
    plt.figure(figsize=(6, 4))
    ax = sns.lineplot(data=curve, x='k', y='rate', hue='variant', marker='o')
    for _, group in curve.groupby('variant', sort=False):
        ax.fill_between(group['k'], group['ci_low'], group['ci_high'], alpha=0.15)
    plt.xlabel('Fine-tuning demonstrations')
    plt.ylabel('Success rate')
    plt.ylim(-0.02, 1.02)
    plt.title('Continual learning')
    return _save(path)


def plot_recomposition_matrix(cells: pd.DataFrame, path: str, title: str = 'Unseen pairings') -> str:
    """Heat map of success per (left skill, right skill) cell."""
    matrix = cells.pivot(index='left', columns='right', values='rate')
    plt.figure(figsize=(4.5, 4))
    sns.heatmap(matrix, vmin=0.0, vmax=1.0, annot=True, fmt='.2f', cmap='viridis', cbar=True)
    plt.title(title)
    return _save(path)


def plot_training_log(log: pd.DataFrame, path: str) -> str:
    """Loss components against training step (log scale where positive)."""
    plt.figure(figsize=(8, 4))
    for column in ('L_FM_L', 'L_FM_R', 'L_on', 'L_off'):
        if column in log and (log[column] > 0).any():
            plt.plot(log['step'], log[column], label=column)
    plt.yscale('log')
    plt.xlabel('Step')
    plt.ylabel('Loss')
    plt.legend()
    plt.grid(True, alpha=0.3)
    return _save(path)


_KIND_STYLE = {
    'pickable': ('o', 'tab:green'), 'target': ('x', 'tab:gray'), 'bar': ('s', 'tab:brown'),
    'rack-slot': ('^', 'tab:purple'), 'drawer': ('D', 'tab:olive'),
}


def plot_state(state: WorldState, path: str, title: Optional[str] = None) -> str:
    """Top-down snapshot of a world state: objects, end-effectors and grippers."""
    plt.figure(figsize=(6, 3.5))
    for o in state.objects:
        marker, color = _KIND_STYLE.get(o.kind, ('o', 'tab:green'))
        plt.scatter(*o.position, marker=marker, color=color)
        plt.annotate(o.id, o.position, textcoords='offset points', xytext=(4, 4), fontsize=7)
    for name, ee, grip in (('L', state.left_ee, state.left_grip), ('R', state.right_ee, state.right_grip)):
        plt.scatter(*ee, s=80, facecolors='black' if grip else 'none', edgecolors='black')
        plt.annotate(name, ee, textcoords='offset points', xytext=(-10, -10), fontsize=8)
    plt.xlim(-1.05, 1.05)
    plt.ylim(-0.05, 1.05)
    plt.gca().set_aspect('equal')
    plt.title(title or f"{state.scene}, step {state.step_index}" + (" (bar dropped)" if state.bar_dropped else ""))
    return _save(path)


def create_report_plots(tables: Dict[str, pd.DataFrame], output_dir: str, prefix: str = '') -> Dict[str, str]:
    """SVG plots for whichever known tables are present; returns name -> path."""
    paths: Dict[str, str] = {}
    if 'cells' in tables and not tables['cells'].empty:
        paths['matrix'] = plot_recomposition_matrix(tables['cells'], os.path.join(output_dir, f'{prefix}matrix.svg'))
    if 'curve' in tables and not tables['curve'].empty:
        paths['curve'] = plot_continual_curve(tables['curve'], os.path.join(output_dir, f'{prefix}continual.svg'))
    return paths


def plot_gate_traces(rollouts, output_dir: str, limit: int = 3) -> List[str]:
    """Gate traces of the first few episodes of every task."""
    paths, seen = [], {}
    for ro in rollouts:
        label = ro.task.label().replace(':', '_').replace(',', '_')
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > limit:
            continue
        paths.append(plot_gate_trace(ro.gate.yhat, ro.gate.alpha, ro.priors,
                                     os.path.join(output_dir, f'gate_{label}_{seen[label] - 1}.svg'),
                                     title=f'Cooperation gate, {ro.task.label()}'))
    return paths
