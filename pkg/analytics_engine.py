"""
Analytics Engine - Scaling tables from benchmark trial ledgers
Per-configuration medians, bound-normalized query counts and log-log slope fits
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from utils import InsufficientData

logger = logging.getLogger(__name__)

GROUP_KEYS = ['model', 'algorithm', 'n', 'nA', 'nB', 'k', 'p', 'W']
FAMILY_KEYS = ['model', 'algorithm', 'k', 'p', 'W']


class AnalyticsEngine:
    """Aggregates RunReport records into scaling tables"""

    def __init__(self, reports=None):
        self.reports = pd.DataFrame(reports or [])

    @classmethod
    def from_jsonl(cls, path):
        """Load one or more JSON-lines ledgers"""
        paths = [Path(p) for p in (path if isinstance(path, (list, tuple)) else [path])]
        records = []
        for p in paths:
            with open(p, 'r', encoding='utf-8') as f:
                records.extend(json.loads(line) for line in f if line.strip())
        logger.info(f"Loaded {len(records)} trial records from {len(paths)} file(s)")
        return cls(records)

    def _frame(self):
        df = self.reports.copy()
        for column in GROUP_KEYS:
            if column not in df.columns:
                df[column] = np.nan
        for column in ('query_count', 'cost', 'ratio'):
            if column not in df.columns:
                df[column] = np.nan
        if 'correct' not in df.columns:
            df['correct'] = np.nan
        # bipartite width is measured per instance, so it is a column rather than a key
        df['width'] = pd.to_numeric(df['k'], errors='coerce')
        df['k'] = df['k'].where(df['model'] != 'bipartite')
        return df

    def summary_table(self):
        """Medians, percentiles and normalized query columns per configuration"""
        df = self._frame()
        if df.empty:
            raise InsufficientData("no trial records to summarise")

        grouped = df.groupby(GROUP_KEYS, dropna=False)
        table = grouped.agg(
            trials=('query_count', 'size'),
            correct_rate=('correct', 'mean'),
            median_queries=('query_count', 'median'),
            p10_queries=('query_count', lambda s: s.quantile(0.1)),
            p90_queries=('query_count', lambda s: s.quantile(0.9)),
            median_cost=('cost', 'median'),
            median_ratio=('ratio', 'median'),
            median_width=('width', 'median'),
        ).reset_index()

        n = table['n'].astype(float)
        k = table['median_width'].astype(float)
        w = table['W'].astype(float)
        log_n = np.log(n)
        q = table['median_queries'].astype(float)
        table['q_per_nk2log3'] = q / (n * k ** 2 * log_n ** 3)
        table['q_per_nklog'] = q / (n * k * log_n)
        table['q_per_gpsc'] = q / (n * k * log_n + n ** 1.5 * log_n)
        table['ratio_per_bound'] = table['median_ratio'].astype(float) / (n ** (1.0 - 1.0 / (2.0 * w)) * log_n ** 3)
        return table.sort_values(GROUP_KEYS, na_position='first').reset_index(drop=True)

    def slope_fits(self, table=None):
        """Least-squares slope of ln(median queries) against ln(n) for every family with two or more sizes"""
        table = self.summary_table() if table is None else table
        rows = []
        for family, group in table.groupby(FAMILY_KEYS, dropna=False):
            group = group[group['median_queries'] > 0]
            if group['n'].nunique() < 2:
                continue
            x = np.log(group['n'].astype(float).to_numpy())
            y = np.log(group['median_queries'].astype(float).to_numpy())
            slope, intercept = np.polyfit(x, y, 1)
            row = dict(zip(FAMILY_KEYS, family))
            row.update({'points': int(len(group)), 'slope': float(slope), 'intercept': float(intercept)})
            rows.append(row)

        if not rows:
            raise InsufficientData("need at least two distinct n values in some configuration family")
        logger.info(f"Fitted slopes for {len(rows)} families")
        return pd.DataFrame(rows, columns=FAMILY_KEYS + ['points', 'slope', 'intercept'])

    def write_report(self, out_dir):
        """Write summary.csv and slopes.csv; returns both paths"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        table = self.summary_table()
        slopes = self.slope_fits(table)
        summary_path = out_dir / 'summary.csv'
        slopes_path = out_dir / 'slopes.csv'
        table.to_csv(summary_path, index=False)
        slopes.to_csv(slopes_path, index=False)
        logger.info(f"Report written: {summary_path}, {slopes_path}")
        return summary_path, slopes_path
