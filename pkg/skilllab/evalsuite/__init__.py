"""
Evaluation suites, entanglement diagnostics, statistics and reports
"""

from .stats import (
    success_rate, t_norm, gate_stage_agreement, within_stage_variance, MIDiagnostic, mi_from_samples,
    binned_mi, gaussian_mi, plugin_mi, cell_index, ProductRegion, coverage_fraction,
)
from .suites import (
    EvalReport, seen_suite, recomposition_suite, coop_suite, longhorizon_suite, continual_suite,
    conditional_mi, support_coverage, expert_region, draw_joint_samples, entanglement_suite,
    gradcheck_suite, run_trials, trial_seeds,
)
from .plotting import (
    plot_gate_trace, plot_gate_traces, plot_continual_curve, plot_recomposition_matrix,
    plot_training_log, plot_state, create_report_plots,
)
from .reporting import (
    save_report, load_report, merge_reports, render_to_markdown, save_excel_format, report_files,
)
