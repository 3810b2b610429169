"""Dataset container, CSV ingestion and the bundled generated datasets."""
import csv
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .exceptions import InvalidInput

BUNDLED = ("energy_like", "friedman1", "linear3")


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    target: np.ndarray
    feature_names: list = field(default_factory=list)
    name: str = "dataset"
    target_name: str = "y"

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.target = np.asarray(self.target, dtype=float).ravel()
        if len(self.features) != len(self.target):
            raise InvalidInput("features and target differ in length")
        if not self.feature_names:
            self.feature_names = [f"x{i + 1}" for i in range(self.features.shape[1])]

    def __len__(self):
        return len(self.target)

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, idx):
        return Dataset(self.features[idx], self.target[idx], list(self.feature_names), self.name,
                       self.target_name)

    def validate(self):
        if len(self) < 1 or self.n_features < 1:
            raise InvalidInput(f"{self.name}: need at least one row and one feature")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.target))):
            raise InvalidInput(f"{self.name}: non-finite values in data")
        return self


def read_csv(path, target=None, name=None):
    """Read a headered numeric CSV.  ``target`` defaults to the last column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc}") from exc
    if not rows or not rows[0]:
        raise InvalidInput(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    target = header[-1] if target is None else target
    if target not in header:
        raise InvalidInput(f"{path}: target column {target!r} not found")
    body = [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise InvalidInput(f"{path}: non-numeric value ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InvalidInput(f"{path}: ragged rows or no data")
    t = header.index(target)
    keep = [j for j in range(len(header)) if j != t]
    if not keep:
        raise InvalidInput(f"{path}: no feature columns")
    ds = Dataset(data[:, keep], data[:, t], [header[j] for j in keep],
                 name or str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0], target)
    return ds.validate()


def write_csv(dataset, path, target_name=None):
    target_name = target_name or dataset.target_name
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(dataset.feature_names) + [target_name])
        for x, y in zip(dataset.features, dataset.target):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def load_bundled(name):
    if name not in BUNDLED:
        raise InvalidInput(f"unknown bundled dataset {name!r}; choose from {BUNDLED}")
    with resources.as_file(resources.files("vspyct_gp") / "data" / f"{name}.csv") as p:
        return read_csv(p, name=name)


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def linear3(n, low=0.0, high=1.0, noise=0.1, rng=None):
    """y = 2 x1 + 3 x2 + x3 + N(0, noise^2), x ~ U[low, high]^3."""
    rng = np.random.default_rng(rng)
    X = rng.uniform(low, high, size=(n, 3))
    y = linear3_truth(X) + noise * rng.standard_normal(n)
    return Dataset(X, y, ["x1", "x2", "x3"], "linear3")


def linear3_truth(X):
    X = np.asarray(X, dtype=float)
    return 2.0 * X[:, 0] + 3.0 * X[:, 1] + X[:, 2]


def friedman1(n=500, noise=1.0, rng=None):
    rng = np.random.default_rng(rng)
    X = rng.uniform(size=(n, 5))
    y = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
         + 10 * X[:, 3] + 5 * X[:, 4] + noise * rng.standard_normal(n))
    return Dataset(X, y, [f"x{i + 1}" for i in range(5)], "friedman1")


# 12 building shapes: compactness, surface, wall, roof, height
_SHAPES = [
    (0.98, 514.5, 294.0, 110.25, 7.0), (0.90, 563.5, 318.5, 122.50, 7.0),
    (0.86, 588.0, 294.0, 147.00, 7.0), (0.82, 612.5, 318.5, 147.00, 7.0),
    (0.79, 637.0, 343.0, 147.00, 7.0), (0.76, 661.5, 416.5, 122.50, 7.0),
    (0.74, 686.0, 245.0, 220.50, 3.5), (0.71, 710.5, 269.5, 220.50, 3.5),
    (0.69, 735.0, 294.0, 220.50, 3.5), (0.66, 759.5, 318.5, 220.50, 3.5),
    (0.64, 784.0, 343.0, 220.50, 3.5), (0.62, 808.5, 367.5, 220.50, 3.5),
]


def energy_like(noise=0.5, rng=None):
    """768-row, 8-feature building heating-load design.

    Same factorial layout as the classic building-energy simulation data
    (12 shapes x 4 orientations x 16 glazing settings) with a smooth
    synthetic load response.
    """
    rng = np.random.default_rng(rng)
    rows = []
    glazing = [(0.0, 0)] + [(g, dist) for g in (0.10, 0.25, 0.40) for dist in range(1, 6)]
    for rc, sa, wa, ra, h in _SHAPES:
        for orient in (2, 3, 4, 5):
            for g, dist in glazing:
                rows.append((rc, sa, wa, ra, h, orient, g, dist))
    X = np.array(rows, dtype=float)
    rc, sa, wa, ra, h, orient, g, dist = X.T
    y = (1.1 * h ** 1.45 + 0.045 * (wa - 300.0) + 20.0 * g * (1.0 + 0.6 * (h == 7.0))
         + 12.0 * (rc - 0.62) * (h == 7.0) - 0.02 * (ra - 150.0)
         + 0.35 * np.cos(orient) + 0.25 * (dist > 0) + noise * rng.standard_normal(len(X)))
    names = ["compactness", "surface_area", "wall_area", "roof_area", "height",
             "orientation", "glazing_area", "glazing_distribution"]
    return Dataset(X, y, names, "energy_like")


def regenerate_bundled(directory):
    """Rewrite the bundled CSV files (fixed seeds)."""
    write_csv(energy_like(rng=20240601), f"{directory}/energy_like.csv", "heating_load")
    write_csv(friedman1(rng=20240602), f"{directory}/friedman1.csv")
    write_csv(linear3(1000, rng=20240603), f"{directory}/linear3.csv")
