"""Loss curves recorded during training, written as CSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field


@dataclass
class TrainLog:
    columns: tuple
    rows: list = field(default_factory=list)

    def append(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values))

    def column(self, name, where=None):
        """Values of one column, optionally filtered by ``where(row_dict)``."""
        i = self.columns.index(name)
        out = []
        for row in self.rows:
            if where is None or where(dict(zip(self.columns, row))):
                out.append(row[i])
        return out

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            columns = tuple(next(reader))
            rows = []
            for raw in reader:
                row = []
                for v in raw:
                    try:
                        row.append(int(v))
                    except ValueError:
                        try:
                            row.append(float(v))
                        except ValueError:
                            row.append(v)
                rows.append(tuple(row))
        return cls(columns, rows)
