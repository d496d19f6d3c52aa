"""Linear prefill/decode latency model and its least-squares fit.

Prefill:   t_p(b, l)  = a_p*b*l + b_p*b + g_p*l + d_p
Per-token: tau(b, la) = a_d*b*la + b_d*b + g_d*la + d_d

Decode of ``l_o`` tokens sums ``tau`` over accumulated lengths
``l_i+1 .. l_i+l_o``; that sum is an arithmetic series and is evaluated in
closed form so the annealing inner loop stays O(1) per request.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LatencyCoefficients, WorkloadError

# the linear model is only trusted for sequences shorter than this
VALID_LENGTH_LIMIT = 2048


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSample:
    batch_size: int
    input_len: int
    accumulated_len: int
    measured_prefill_ms: float
    measured_per_token_decode_ms: float

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.input_len < 1:
            raise WorkloadError("profile sample needs b >= 1 and l_i >= 1")
        if self.accumulated_len < self.input_len:
            raise WorkloadError("accumulated length must be >= input length")
        if self.measured_prefill_ms <= 0 or self.measured_per_token_decode_ms <= 0:
            raise WorkloadError("measured durations must be > 0")


def predict_prefill(coeffs: LatencyCoefficients, b: int, l_i: int) -> float:
    return coeffs.alpha_p * b * l_i + coeffs.beta_p * b + coeffs.gamma_p * l_i + coeffs.delta_p


def predict_per_token_decode(coeffs: LatencyCoefficients, b: int, l_a: int) -> float:
    return coeffs.alpha_d * b * l_a + coeffs.beta_d * b + coeffs.gamma_d * l_a + coeffs.delta_d


def predict_decode_total(coeffs: LatencyCoefficients, b: int, l_i: int, l_o: int) -> float:
    if l_o <= 0:
        return 0.0
    # sum_{k=1..l_o} (l_i + k) = l_o*l_i + l_o*(l_o+1)/2
    length_sum = l_o * l_i + l_o * (l_o + 1) / 2.0
    slope = coeffs.alpha_d * b + coeffs.gamma_d
    return slope * length_sum + (coeffs.beta_d * b + coeffs.delta_d) * l_o


def predict_exec(coeffs: LatencyCoefficients, b: int, l_i: int, l_o: int) -> float:
    return predict_prefill(coeffs, b, l_i) + predict_decode_total(coeffs, b, l_i, l_o)


def predict_tpot(coeffs: LatencyCoefficients, b: int, l_i: int, l_o: int) -> float:
    if l_o <= 0:
        raise ValueError("TPOT undefined for zero output")
    return predict_decode_total(coeffs, b, l_i, l_o) / l_o


def is_extrapolated(l_i: int, l_o: int = 0) -> bool:
    return l_i + l_o >= VALID_LENGTH_LIMIT


def _solve(x_b: np.ndarray, x_l: np.ndarray, y: np.ndarray, label: str) -> tuple[np.ndarray, float]:
    if len(y) < 4:
        raise FitError(f"{label}: need at least 4 samples, got {len(y)}")
    design = np.column_stack([x_b * x_l, x_b, x_l, np.ones_like(x_b)])
    # scale columns so the rank test is not fooled by unit magnitudes
    norms = np.linalg.norm(design, axis=0)
    if np.linalg.matrix_rank(design / norms) < 4:
        raise FitError(f"{label}: rank-deficient design matrix")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    rmse = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    return coef, rmse


def fit_coefficients_with_rmse(samples: Sequence[ProfileSample]) -> tuple[LatencyCoefficients, float, float]:
    """Fit both regressions; also return the RMSE of each (prefill, decode)."""
    b = np.array([s.batch_size for s in samples], dtype=float)
    l_i = np.array([s.input_len for s in samples], dtype=float)
    l_a = np.array([s.accumulated_len for s in samples], dtype=float)
    y_p = np.array([s.measured_prefill_ms for s in samples], dtype=float)
    y_d = np.array([s.measured_per_token_decode_ms for s in samples], dtype=float)
    cp, rmse_p = _solve(b, l_i, y_p, "prefill")
    cd, rmse_d = _solve(b, l_a, y_d, "decode")
    # tiny negative alphas from noise are clipped to keep the model monotone
    cp[0] = max(cp[0], 0.0)
    cd[0] = max(cd[0], 0.0)
    coeffs = LatencyCoefficients(*map(float, cp), *map(float, cd))
    return coeffs, rmse_p, rmse_d


def fit_coefficients(samples: Sequence[ProfileSample]) -> LatencyCoefficients:
    return fit_coefficients_with_rmse(samples)[0]


def save_coefficients(coeffs: LatencyCoefficients, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser["coefficients"] = {k: repr(v) for k, v in coeffs.to_dict().items()}
    with open(path, "w") as fh:
        parser.write(fh)


def load_coefficients(path: str | Path) -> LatencyCoefficients:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    section = parser["coefficients"] if parser.has_section("coefficients") else parser[parser.default_section]
    missing = [k for k in LatencyCoefficients.KEYS if k not in section]
    if missing:
        raise WorkloadError(f"coefficient file {path} missing keys: {missing}")
    return LatencyCoefficients(**{k: float(section[k]) for k in LatencyCoefficients.KEYS})
