"""Confidential regression data and its privatized release.

The setting is a simple linear regression with a Poisson regressor: the
curator holds (x_i, y_i), releases (x_i + u_i, y_i + v_i) with independent
Laplace noise at per-coordinate budgets eps_x and eps_y, and publishes the
mechanism specs alongside the noisy values.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .mechanisms import Family, MechanismSpec, PrivacyBudget, privatize_vector

__all__ = [
    "RegressionParams",
    "ConfidentialDataset",
    "PrivatizedDataset",
    "gen_confidential",
    "privatize_dataset",
    "dataset_to_csv",
    "dataset_to_json",
    "dataset_from_json",
]


@dataclass(frozen=True)
class RegressionParams:
    """Generating parameters of the regression model.

    The model is x_i ~ Poisson(lam) and y_i = beta0 + beta1 * x_i + e_i
    with e_i ~ Normal(0, sigma^2).
    """

    beta0: float
    beta1: float
    sigma: float
    lam: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive, got {self.lam!r}")


@dataclass(frozen=True)
class ConfidentialDataset:
    """Curator-side regression sample (never released)."""

    x: np.ndarray
    y: np.ndarray
    params: RegressionParams
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", np.asarray(self.x))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if self.x.size < 3:
            raise ValueError("dataset needs at least 3 observations")

    @property
    def n(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class PrivatizedDataset:
    """Released regression sample with its public mechanism specs."""

    x_tilde: np.ndarray
    y_tilde: np.ndarray
    spec_x: MechanismSpec
    spec_y: MechanismSpec
    parent_seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_tilde", np.asarray(self.x_tilde, dtype=float))
        object.__setattr__(self, "y_tilde", np.asarray(self.y_tilde, dtype=float))
        if self.x_tilde.shape != self.y_tilde.shape or self.x_tilde.ndim != 1:
            raise ValueError("x_tilde and y_tilde must be 1-d arrays of equal length")

    @property
    def n(self) -> int:
        return self.x_tilde.size

    @property
    def eps_x(self) -> float:
        return self.spec_x.budget.epsilon

    @property
    def eps_y(self) -> float:
        return self.spec_y.budget.epsilon


def gen_confidential(
    n: int,
    params: RegressionParams,
    rng: np.random.Generator,
    seed: int = 0,
) -> ConfidentialDataset:
    """Draw a confidential regression sample.

    Parameters
    ----------
    n : int
        Sample size, at least 3.
    params : RegressionParams
        Generating parameters.
    rng : numpy.random.Generator
        Source stream.
    seed : int
        Provenance tag recorded on the dataset; sampling itself uses ``rng``.

    Returns
    -------
    ConfidentialDataset
        x_i i.i.d. Poisson(lam); y_i = beta0 + beta1 x_i + Normal(0, sigma^2).
    """
    if n < 3:
        raise ValueError(f"n must be at least 3, got {n}")
    x = rng.poisson(params.lam, n)
    y = params.beta0 + params.beta1 * x + rng.normal(0.0, params.sigma, n)
    return ConfidentialDataset(x=x, y=y, params=params, seed=seed)


def privatize_dataset(
    data: ConfidentialDataset,
    eps_x: PrivacyBudget,
    eps_y: PrivacyBudget,
    rng: np.random.Generator,
) -> PrivatizedDataset:
    """Release a dataset through per-coordinate Laplace mechanisms.

    Both coordinates use sensitivity 1, so the noise scales are 1/eps_x and
    1/eps_y and the marginal noise variances are 2/eps_x^2 and 2/eps_y^2.

    Parameters
    ----------
    data : ConfidentialDataset
        Sample to privatize.
    eps_x, eps_y : PrivacyBudget
        Per-coordinate budgets; the total release budget is their sum.
    rng : numpy.random.Generator
        Source stream.
    """
    spec_x = MechanismSpec(Family.LAPLACE, 1.0, eps_x)
    spec_y = MechanismSpec(Family.LAPLACE, 1.0, eps_y)
    x_tilde, _ = privatize_vector(data.x, spec_x, rng)
    y_tilde, _ = privatize_vector(data.y, spec_y, rng)
    return PrivatizedDataset(
        x_tilde=x_tilde,
        y_tilde=y_tilde,
        spec_x=spec_x,
        spec_y=spec_y,
        parent_seed=data.seed,
    )


def dataset_to_csv(data) -> str:
    """Render a dataset as CSV text.

    Columns are ``i,x,y`` for confidential data and ``i,x_tilde,y_tilde``
    for privatized data.
    """
    buf = io.StringIO()
    if isinstance(data, ConfidentialDataset):
        buf.write("i,x,y\n")
        for i, (xi, yi) in enumerate(zip(data.x, data.y)):
            buf.write(f"{i},{int(xi)},{float(yi)!r}\n")
    elif isinstance(data, PrivatizedDataset):
        buf.write("i,x_tilde,y_tilde\n")
        for i, (xi, yi) in enumerate(zip(data.x_tilde, data.y_tilde)):
            buf.write(f"{i},{float(xi)!r},{float(yi)!r}\n")
    else:
        raise TypeError(f"unsupported dataset type {type(data).__name__}")
    return buf.getvalue()


def dataset_to_json(data) -> str:
    """Serialize a dataset to a JSON envelope carrying params or specs."""
    if isinstance(data, ConfidentialDataset):
        obj = {
            "kind": "confidential",
            "seed": data.seed,
            "params": {
                "beta0": data.params.beta0,
                "beta1": data.params.beta1,
                "sigma": data.params.sigma,
                "lam": data.params.lam,
            },
            "x": data.x.tolist(),
            "y": data.y.tolist(),
        }
    elif isinstance(data, PrivatizedDataset):
        obj = {
            "kind": "privatized",
            "parent_seed": data.parent_seed,
            "spec_x": json.loads(data.spec_x.to_json()),
            "spec_y": json.loads(data.spec_y.to_json()),
            "x_tilde": data.x_tilde.tolist(),
            "y_tilde": data.y_tilde.tolist(),
        }
    else:
        raise TypeError(f"unsupported dataset type {type(data).__name__}")
    return json.dumps(obj, sort_keys=True)


def dataset_from_json(text: str):
    """Inverse of :func:`dataset_to_json`; dispatches on the ``kind`` field."""
    obj = json.loads(text)
    kind = obj.get("kind")
    if kind == "confidential":
        params = RegressionParams(**obj["params"])
        return ConfidentialDataset(
            x=np.asarray(obj["x"]), y=np.asarray(obj["y"], dtype=float),
            params=params, seed=int(obj["seed"]),
        )
    if kind == "privatized":
        return PrivatizedDataset(
            x_tilde=np.asarray(obj["x_tilde"], dtype=float),
            y_tilde=np.asarray(obj["y_tilde"], dtype=float),
            spec_x=MechanismSpec.from_json(json.dumps(obj["spec_x"])),
            spec_y=MechanismSpec.from_json(json.dumps(obj["spec_y"])),
            parent_seed=int(obj["parent_seed"]),
        )
    raise ValueError(f"unrecognized dataset kind {kind!r}")
