"""Simulation traces: one row per controller tick plus the list of domain transitions."""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from prosthesis.model import COORD_NAMES

logger = logging.getLogger(__name__)

ACTUATOR_NAMES = ("lh", "lk", "la", "rh", "pk", "pa")
FLOAT_FORMAT = "%.17g"


def state_columns(q, qdot) -> dict:
    row = {f"q_{name}": value for name, value in zip(COORD_NAMES, q)}
    row.update({f"dq_{name}": value for name, value in zip(COORD_NAMES, qdot)})
    return row


def input_columns(u) -> dict:
    return {f"u_{name}": value for name, value in zip(ACTUATOR_NAMES, u)}


@dataclass
class SimTrace:
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def append(self, row: dict):
        self.rows.append(row)

    def extend(self, other: "SimTrace"):
        self.rows.extend(other.rows)
        self.events.extend(other.events)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def events_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.events)

    @property
    def times(self) -> np.ndarray:
        return np.array([row["time"] for row in self.rows])

    @property
    def domains(self) -> list:
        """Domain of each executed domain segment, in order."""
        sequence = []
        for row in self.rows:
            if not sequence or row["domain_index"] != sequence[-1][0]:
                sequence.append((row["domain_index"], row["domain"]))
        return [domain for _, domain in sequence]

    def save_csv(self, path: str):
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)

    def save_events(self, path: str):
        self.events_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)


def load_trace_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
