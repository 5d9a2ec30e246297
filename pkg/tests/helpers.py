"""Small shared test utilities."""

import numpy as np


class PointMassModel:
    """Demand model that always needs exactly `value` kWh.

    Histogram models spread mass uniformly inside a bin, so they can
    never be exact point masses; several spec'd degenerate cases need
    one. Duck-typed against the model interface the package consumes.
    """

    def __init__(self, value: float, driver_id: str = "pm"):
        self.value = float(value)
        self.driver_id = driver_id

    def sample(self, rng, size):
        return np.full(size, self.value)

    def quantile(self, alpha: float) -> float:
        return self.value

    def mean(self) -> float:
        return self.value


def write_trip_log(path, rows, header="driver_id,date,miles"):
    lines = [header] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
