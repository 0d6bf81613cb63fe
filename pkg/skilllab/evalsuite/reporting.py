"""
Reporting functions for evaluation results
"""
import glob
import os
from typing import Dict, List, Optional, Sequence

import pandas as pd

from skilllab.errors import ConfigError, EvaluationError
from skilllab.evalsuite.plotting import create_report_plots
from skilllab.evalsuite.suites import EvalReport
from skilllab.utils.io import read_json, save_table, write_json

REPORT_SUFFIX = '.report.json'


def report_path(output_dir: str, name: str) -> str:
    return os.path.join(output_dir, name + REPORT_SUFFIX)


def save_report(report: EvalReport, output_dir: str, name: Optional[str] = None,
                plots: bool = True) -> Dict[str, str]:
    """
    Write a report as JSON plus one CSV per table (and SVG plots where one applies)

    Parameters:
    -----------
    report : EvalReport
        Report to save
    output_dir : str
        Target directory
    name : str, optional
        File stem, the suite name by default
    plots : bool
        Also draw the SVG plots known for the report's tables

    Returns:
    --------
    dict mapping 'json', each table name and each plot name to its path
    """
    name = name or report.suite
    paths = {'json': report_path(output_dir, name)}
    write_json(report.to_dict(), paths['json'])
    for table, df in report.tables.items():
        paths[table] = os.path.join(output_dir, f'{name}_{table}.csv')
        save_table(df, paths[table])
    if plots:
        paths.update(create_report_plots(report.tables, output_dir, prefix=f'{name}_'))
    print(f"Report saved to {paths['json']}")
    return paths


def load_report(path: str) -> EvalReport:
    return EvalReport.from_dict(read_json(path))


def report_files(inputs: Sequence[str]) -> List[str]:
    files = []
    for item in inputs:
        if os.path.isdir(item):
            files += sorted(glob.glob(os.path.join(item, '*' + REPORT_SUFFIX)))
        elif os.path.exists(item):
            files.append(item)
        else:
            raise ConfigError(f"report '{item}' not found")
    if not files:
        raise ConfigError("no report files given")
    return files


def summary_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """One row per report with its scalar summary entries."""
    rows = []
    for r in reports:
        row = {'suite': r.suite, 'variant': r.variant, 'seed': r.seed, 'n_trials': r.n_trials}
        row.update({k: v for k, v in r.summary.items() if v is None or isinstance(v, (int, float, str))})
        rows.append(row)
    return pd.DataFrame(rows)


def merge_reports(inputs: Sequence[str], output_dir: str, name: str = 'merged') -> Dict[str, str]:
    """
    Merge saved reports into one CSV of all table rows with a suite column

    Parameters:
    -----------
    inputs : sequence of str
        Report files or directories holding ``*.report.json`` files
    output_dir : str
        Target directory for the merged CSV, the summary CSV and the plots

    Returns:
    --------
    dict of written paths
    """
    reports = [load_report(f) for f in report_files(inputs)]
    frames = []
    for r in reports:
        for table, df in r.tables.items():
            if df.empty:
                continue
            df = df.copy()
            df.insert(0, 'table', table)
            df.insert(0, 'variant', r.variant)
            df.insert(0, 'suite', r.suite)
            frames.append(df)
    if not frames:
        raise EvaluationError("the given reports hold no table rows")
    paths = {'merged': os.path.join(output_dir, f'{name}.csv'),
             'summary': os.path.join(output_dir, f'{name}_summary.csv')}
    save_table(pd.concat(frames, ignore_index=True, sort=False), paths['merged'])
    save_table(summary_frame(reports), paths['summary'])
    for i, r in enumerate(reports):
        paths.update({f'{k}_{i}': v for k, v in
                      create_report_plots(r.tables, output_dir, prefix=f'{r.suite}_{r.variant}_').items()})
    return paths


def render_to_markdown(reports: Sequence[EvalReport], output_filepath: str) -> str:
    """
    Render reports to a Markdown file: summary table, then every table per report

    Plots that sit next to the file are linked relative to it.
    """
    os.makedirs(os.path.dirname(output_filepath) or '.', exist_ok=True)
    output_dir = os.path.dirname(output_filepath) or '.'
    with open(output_filepath, 'w', encoding='utf-8') as f:
        f.write("# Evaluation results\n")
        f.write("\n## Summary\n\n")
        f.write(summary_frame(reports).to_markdown(index=False))
        f.write("\n")
        for r in reports:
            f.write(f"\n## {r.suite} ({r.variant}, seed {r.seed}, {r.n_trials} trials)\n")
            for table, df in r.tables.items():
                if table == 'episodes':
                    continue
                f.write(f"\n### {table}\n\n")
                f.write(df.to_markdown(index=False, floatfmt='.3f'))
                f.write("\n")
        images = sorted(glob.glob(os.path.join(output_dir, '*.svg')))
        if images:
            f.write("\n## Figures\n\n")
            for path in images:
                rel = os.path.relpath(path, output_dir)
                f.write(f"![{os.path.splitext(os.path.basename(path))[0]}]({rel})\n")
    print(f"Results saved to {output_filepath}")
    return output_filepath


def save_excel_format(reports: Sequence[EvalReport], filename: str) -> str:
    """
    Save every report table to one Excel workbook, one sheet per table

    Falls back to one CSV per sheet when openpyxl is not installed.
    """
    os.makedirs(os.path.dirname(filename) or '.', exist_ok=True)
    sheets = {'summary': summary_frame(reports)}
    for r in reports:
        for table, df in r.tables.items():
            # Excel caps sheet names at 31 characters
            sheets[f'{r.suite}_{r.variant}_{table}'[:31]] = df
    try:
        with pd.ExcelWriter(filename, engine='openpyxl') as writer:
            for sheet, df in sheets.items():
                df.to_excel(writer, sheet_name=sheet, index=False)
        print(f"Workbook saved to {filename}")
    except ImportError:
        base = filename[:-len('.xlsx')] if filename.endswith('.xlsx') else filename
        print("Warning: openpyxl not installed. Cannot save Excel file.")
        print(f"Saving as CSV instead: {base}_<sheet>.csv")
        for sheet, df in sheets.items():
            save_table(df, f'{base}_{sheet}.csv')
    return filename
