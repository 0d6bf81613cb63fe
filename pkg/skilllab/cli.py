"""
Command-line interface for SkillLab
"""
import argparse
import datetime
import logging
import os
import sys
from typing import Dict, Optional, Sequence

from skilllab.config import RunConfig, apply_overrides, config_hash, resolve_seed
from skilllab.errors import ConfigError, SkillLabError
from skilllab.evalsuite import (
    EvalReport, continual_suite, coop_suite, entanglement_suite, gradcheck_suite, longhorizon_suite,
    load_report, merge_reports, plot_gate_traces, plot_training_log, recomposition_suite, render_to_markdown,
    report_files, run_trials, save_excel_format, save_report, seen_suite,
)
from skilllab.generate import INVENTORY_GROUPS, Dataset, episodes_for, generate, generate_all
from skilllab.learn import train_policy, train_selector
from skilllab.policy import PolicyModel, Variant
from skilllab.sampler import ExpertAgent, PolicyAgent, ZeroAgent
from skilllab.utils.io import (
    load_demos, record_timestamp, save_demos, save_rollouts, save_table, write_resolved_config,
)
from skilllab.world import LongTask, TaskSpec

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-3
SUITES = ('recompose', 'seen', 'coop', 'longhorizon', 'continual')
DIAG_KINDS = ('mi', 'support', 'gradcheck')


def _setup_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s', force=True)


def _progress(args) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg = apply_overrides(cfg, args.set or [])
    cfg = resolve_seed(cfg, args.seed)
    if args.out:
        cfg = cfg.replace(out_dir=args.out)
    return cfg


def _load_demos(paths: Sequence[str], cfg: RunConfig):
    demos = []
    for path in paths:
        demos.extend(load_demos(path, world=cfg.world))
    return demos


def _load_model(path: Optional[str], flag: str = '--ckpt', variant: Optional[str] = None) -> PolicyModel:
    if not path:
        raise ConfigError(f"{flag} is required")
    return PolicyModel.load(path, variant=variant)


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args, cfg: RunConfig) -> int:
    """Generate expert demonstrations for one task or an inventory group."""
    if args.task in INVENTORY_GROUPS:
        demos = generate_all(cfg, group=args.task, n_episodes=args.episodes, jobs=args.jobs,
                             progress=_progress(args))
        name = args.name or args.task
    else:
        task = TaskSpec.parse(args.task)
        demos = generate(task, args.episodes or episodes_for(task, cfg.data), cfg.seed, cfg, jobs=args.jobs)
        name = args.name or task.label().replace(':', '_').replace(',', '_')
    path = os.path.join(cfg.out_dir, f'{name}.jsonl')
    manifest = save_demos(demos, path, world=cfg.world, seeds=[cfg.seed])
    print(f"{len(demos)} episodes, {sum(len(d) for d in demos)} steps")
    for label, count in sorted(manifest.inventory.items()):
        print(f"  {label}: {count}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    """Selector pretraining (SKILLVLA only) then policy training."""
    variant = Variant.parse(args.arch)
    demos = _load_demos(args.data, cfg)
    dataset = Dataset.from_demos(demos)
    selector = None
    if variant is Variant.SKILLVLA:
        extra = _load_demos(args.selector_data or [], cfg)
        selector = train_selector(Dataset.from_demos(demos + extra), cfg, progress=_progress(args))
    model, log = train_policy(dataset, variant, cfg, selector=selector, progress=_progress(args))
    name = args.name or variant.value.lower()
    ckpt = model.save(os.path.join(cfg.out_dir, f'{name}.json'), config_hash=config_hash(cfg))
    save_table(log, os.path.join(cfg.out_dir, f'{name}_log.csv'))
    if not log.empty:
        plot_training_log(log, os.path.join(cfg.out_dir, f'{name}_log.svg'))
    print(f"Checkpoint saved to {ckpt}")
    return 0


def _eval_agent(args, cfg: RunConfig):
    if args.agent == 'expert':
        return None, ExpertAgent(cfg.world)
    if args.agent == 'zero':
        return None, ZeroAgent()
    return _load_model(args.ckpt), None


def _dump_longhorizon(model: Optional[PolicyModel], agent, report: EvalReport, cfg: RunConfig, args) -> None:
    """Rerun the long-horizon trials (same seeds) to dump rollouts and gate traces."""
    schedule = report.summary['schedule']
    specs = {t.value: TaskSpec.long(t, schedule=schedule) for t in LongTask}
    agent = agent or PolicyAgent(model, cfg.sampler)
    results = run_trials(agent, specs, report.n_trials, report.seed, cfg.world,
                         cfg.sampler.gate_threshold, args.jobs)
    rollouts = [ro for ros in results.values() for ro in ros]
    name = args.name or 'longhorizon'
    save_rollouts(rollouts, os.path.join(cfg.out_dir, f'{name}_rollouts.jsonl'))
    plot_gate_traces(rollouts, cfg.out_dir)


def cmd_eval(args, cfg: RunConfig) -> int:
    """Run one evaluation suite and save its report."""
    common = dict(n_trials=args.trials, cfg=cfg, seed=cfg.seed, jobs=args.jobs)
    if args.suite == 'continual':
        pretrained: Dict[str, PolicyModel] = {}
        for path, flag in ((args.ckpt, '--ckpt'), (args.ckpt_mono, '--ckpt-mono')):
            if path:
                model = _load_model(path, flag)
                pretrained[model.variant.value] = model
        if not pretrained:
            raise ConfigError("--ckpt or --ckpt-mono is required")
        if not args.data:
            raise ConfigError("--data with demonstrations of the new task is required")
        task = TaskSpec.parse(args.task) if args.task else TaskSpec.parse('dual:D1')
        report = continual_suite(pretrained, _load_demos(args.data, cfg), k_list=args.k, task=task,
                                 progress=_progress(args), **common)
    else:
        model, agent = _eval_agent(args, cfg)
        if args.suite == 'recompose':
            report = recomposition_suite(model, agent=agent, **common)
        elif args.suite == 'seen':
            report = seen_suite(model, agent=agent, **common)
        elif args.suite == 'coop':
            report = coop_suite(model, ablate=args.ablate, agent=agent, **common)
        else:
            report = longhorizon_suite(model, schedule=args.schedule, agent=agent, **common)
            if args.dump:
                _dump_longhorizon(model, agent, report, cfg, args)
    save_report(report, cfg.out_dir, name=args.name)
    _print_summary(report)
    return 0


def cmd_diag(args, cfg: RunConfig) -> int:
    """Entanglement diagnostics or the autodiff gradient check."""
    if args.kind == 'gradcheck':
        report = gradcheck_suite(n_seeds=args.seeds, seed=cfg.seed)
        save_report(report, cfg.out_dir, name=args.name or 'gradcheck', plots=False)
        error = report.summary['max_rel_error']
        print(f"max relative error: {error:.3e} (max absolute error: {report.summary['max_abs_error']:.3e})")
        return 0 if error < GRADCHECK_TOLERANCE else 4
    models = []
    if args.ckpt:
        models.append(_load_model(args.ckpt))
    if args.ckpt_mono:
        models.append(_load_model(args.ckpt_mono, '--ckpt-mono'))
    if not models:
        raise ConfigError("--ckpt or --ckpt-mono is required")
    for model in models:
        report = entanglement_suite(model, cfg, seed=cfg.seed, kinds=(args.kind,))
        report.suite = f'diag_{args.kind}'
        save_report(report, cfg.out_dir, name=f"{args.name or report.suite}_{model.variant.value.lower()}",
                    plots=False)
        _print_summary(report)
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    """Merge saved reports into one CSV plus markdown (and optionally Excel)."""
    paths = merge_reports(args.inputs, cfg.out_dir, name=args.name or 'merged')
    reports = [load_report(p) for p in report_files(args.inputs)]
    render_to_markdown(reports, os.path.join(cfg.out_dir, f"{args.name or 'merged'}.md"))
    if args.excel:
        save_excel_format(reports, os.path.join(cfg.out_dir, f"{args.name or 'merged'}.xlsx"))
    print(f"Merged {len(reports)} reports into {paths['merged']}")
    return 0


def _print_summary(report: EvalReport) -> None:
    print(f"\n{report.suite} ({report.variant}, seed {report.seed}):")
    for key, value in report.summary.items():
        if isinstance(value, float):
            print(f"  {key}: {value:.4f}")
        elif not isinstance(value, (list, dict)):
            print(f"  {key}: {value}")


# ---------------------------------------------------------------------------
# parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument('--config', help='JSON configuration file')
    p.add_argument('--set', action='append', metavar='KEY=VALUE',
                   help='Override a configuration value, e.g. learn.steps=500 (repeatable)')
    p.add_argument('--seed', type=int, help='Run seed (beats the file and SKILLLAB_SEED)')
    p.add_argument('--out', help='Output directory (default: output)')
    p.add_argument('--name', help='Stem of the written artifacts')
    p.add_argument('--jobs', type=int, default=1, help='Worker processes for independent episodes')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='skilllab', description='Bimanual skill recomposition toolkit')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--quiet', action='store_true', help='Warnings only, no progress bars')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen', help='Generate expert demonstrations')
    _common(p)
    p.add_argument('--task', required=True,
                   help="Task ('pair:L1,IDLE', 'dual:D1', 'long:TUBES') or group "
                        f"({', '.join(sorted(INVENTORY_GROUPS))})")
    p.add_argument('--episodes', type=int, help='Episodes per task')
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser('train', help='Train a policy variant')
    _common(p)
    p.add_argument('--arch', required=True, choices=[v.value.lower() for v in Variant])
    p.add_argument('--data', nargs='+', required=True, help='Demonstration files (.jsonl)')
    p.add_argument('--selector-data', nargs='*', help='Extra demonstrations for selector training only')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='Run an evaluation suite')
    _common(p)
    p.add_argument('--suite', required=True, choices=SUITES)
    p.add_argument('--ckpt', help='Policy checkpoint')
    p.add_argument('--ckpt-mono', help='MONO checkpoint (continual suite)')
    p.add_argument('--agent', choices=('policy', 'expert', 'zero'), default='policy',
                   help='Evaluate a scripted agent instead of a checkpoint')
    p.add_argument('--trials', type=int, help='Trials per cell')
    p.add_argument('--ablate', action='store_true', help='Coop suite: repeat with the gate forced off')
    p.add_argument('--schedule', choices=('parallel', 'sequential'), help='Long-horizon stage schedule')
    p.add_argument('--dump', action='store_true', help='Long-horizon: dump rollouts and gate traces')
    p.add_argument('--data', nargs='*', help='Continual suite: demonstrations of the new task')
    p.add_argument('--task', help="Continual suite: the new task (default 'dual:D1')")
    p.add_argument('--k', type=int, nargs='+', help='Continual suite: demonstration counts')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('diag', help='Entanglement diagnostics and gradient checks')
    _common(p)
    p.add_argument('--kind', required=True, choices=DIAG_KINDS)
    p.add_argument('--ckpt', help='Policy checkpoint')
    p.add_argument('--ckpt-mono', help='Second (MONO) checkpoint to compare')
    p.add_argument('--seeds', type=int, default=20, help='Gradient check seeds')
    p.set_defaults(func=cmd_diag)

    p = sub.add_parser('report', help='Merge saved reports')
    _common(p)
    p.add_argument('--in', dest='inputs', nargs='+', required=True, help='Report files or directories')
    p.add_argument('--excel', action='store_true', help='Also write an Excel workbook')
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and run one command

    Returns:
    --------
    int: exit code (0 ok, 2 configuration, 3 data, 4 numerical)
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose, args.quiet)
    started = datetime.datetime.now()
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = _load_config(args)
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_resolved_config(cfg, cfg.out_dir)
        code = args.func(args, cfg)
        record_timestamp(cfg.out_dir, args.command, started)
        return code
    except SkillLabError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
