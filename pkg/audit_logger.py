"""
Audit Logger - Append-only ledger of benchmark trials
"""

import csv
import io
import json
import logging
import threading
from datetime import datetime
from pathlib import Path

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    'model', 'algorithm', 'n', 'k', 'p', 'W', 'nA', 'nB', 'instance_seed', 'master_seed', 'trial',
    'query_count', 'cost', 'opt', 'ratio', 'wall_time', 'correct', 'error',
]


class AuditLogger:
    """Collects one entry per trial and writes them out as JSON lines or CSV"""

    def __init__(self, max_records=100000):
        self.max_records = max_records
        self.trials = []
        self._lock = threading.Lock()

    def log_trial(self, report):
        """
        Record a finished trial

        Args:
            report: dict of RunReport fields
        """
        entry = dict(report)
        entry.setdefault('logged_at', datetime.now().isoformat())

        with self._lock:
            self.trials.append(entry)
            if len(self.trials) > self.max_records:
                self.trials = self.trials[-self.max_records:]

        level = logging.INFO if entry.get('correct', True) else logging.WARNING
        logger.log(level, f"TRIAL: {entry.get('algorithm')} on {entry.get('model')} n={entry.get('n')} "
                          f"trial={entry.get('trial')} queries={entry.get('query_count')} "
                          f"correct={entry.get('correct')}",
                   extra={'trial': entry.get('trial'), 'query_count': entry.get('query_count')})
        return entry

    def get_trials(self, algorithm=None, correct=None, limit=None):
        """Get filtered trial entries"""
        results = list(self.trials)
        if algorithm:
            results = [r for r in results if r.get('algorithm') == algorithm]
        if correct is not None:
            results = [r for r in results if r.get('correct') == correct]
        return results if limit is None else results[-limit:]

    def get_statistics(self):
        """Per-algorithm trial counts, failures and query totals"""
        if not self.trials:
            return {}

        by_algorithm = {}
        failures = 0
        for entry in self.trials:
            stats = by_algorithm.setdefault(entry.get('algorithm'), {'trials': 0, 'incorrect': 0, 'queries': 0})
            stats['trials'] += 1
            stats['queries'] += int(entry.get('query_count') or 0)
            if not entry.get('correct'):
                stats['incorrect'] += 1
                failures += 1

        return {
            'total_trials': len(self.trials),
            'by_algorithm': by_algorithm,
            'total_incorrect': failures,
            'failure_rate': (failures / len(self.trials)) * 100,
        }

    def export(self, format='jsonl'):
        """Export the ledger"""
        if format == 'jsonl':
            return ''.join(json.dumps(entry, sort_keys=True, default=str) + '\n' for entry in self.trials)
        elif format == 'json':
            return json.dumps(self.trials, indent=2, sort_keys=True, default=str)
        elif format == 'csv':
            output = io.StringIO()
            writer = csv.DictWriter(output, fieldnames=CSV_COLUMNS, extrasaction='ignore')
            writer.writeheader()
            writer.writerows(self.trials)
            return output.getvalue()

        raise ValueError(f"Unsupported format: {format}")

    def write(self, jsonl_path, csv_path=None):
        """Append the ledger to a JSON-lines file, optionally appending CSV rows too"""
        jsonl_path = Path(jsonl_path)
        jsonl_path.parent.mkdir(parents=True, exist_ok=True)
        with self._lock:
            with open(jsonl_path, 'a', encoding='utf-8') as f:
                f.write(self.export('jsonl'))
            if csv_path is not None:
                csv_path = Path(csv_path)
                header_needed = not csv_path.exists() or csv_path.stat().st_size == 0
                with open(csv_path, 'a', encoding='utf-8', newline='') as f:
                    writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, extrasaction='ignore')
                    if header_needed:
                        writer.writeheader()
                    writer.writerows(self.trials)
        logger.info(f"Wrote {len(self.trials)} trials to {jsonl_path}")
