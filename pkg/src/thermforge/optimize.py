"""Nelder-Mead simplex minimisation and the (R1, O) radiometric recalibration."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import metrics
from .radiometry import RadiometricParams, temperatures

OUT_OF_DOMAIN_PENALTY = 1e6


class CalibrationError(ValueError):
    """The reference data cannot constrain the fit."""


@dataclass(frozen=True)
class ReferencePair:
    dn: float
    t_ref: float
    timestamp: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.dn <= 65535:
            raise ValueError(f"dn {self.dn} outside [0, 65535]")
        if not math.isfinite(self.t_ref):
            raise ValueError("t_ref must be finite")


@dataclass(frozen=True)
class SimplexConfig:
    tolerance: float = 1e-6
    max_iterations: int = 2000
    alpha: float = 1.0
    gamma: float = 2.0
    rho: float = 0.5
    sigma: float = 0.5

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.alpha > 0:
            raise ValueError("reflection coefficient must be > 0")
        if not self.gamma > 1:
            raise ValueError("expansion coefficient must be > 1")
        if not 0 < self.rho < 1:
            raise ValueError("contraction coefficient must be in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("shrink coefficient must be in (0, 1)")


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    trace: List[tuple] = field(default_factory=list)


def initial_simplex(start: np.ndarray) -> np.ndarray:
    n = start.size
    simplex = np.tile(start, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] = start[i] * 1.05 if start[i] != 0 else 0.00025
    return simplex


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    start: Sequence[float],
    config: SimplexConfig = SimplexConfig(),
) -> SimplexResult:
    """Minimise ``objective`` from ``start`` with the downhill simplex method.

    Stops once both the spread of vertex values and the simplex diameter
    (max coordinate distance from the best vertex) are within
    ``config.tolerance``. Non-finite objective values during the run count
    as ``+inf``.
    """
    x0 = np.atleast_1d(np.asarray(start, dtype=np.float64)).copy()
    if x0.ndim != 1 or x0.size < 1:
        raise ValueError("start must be a non-empty vector")
    f_start = float(objective(x0.copy()))
    if not math.isfinite(f_start):
        raise ValueError(f"objective is not finite at the start point ({f_start})")

    def f(x):
        v = float(objective(x.copy()))
        return v if math.isfinite(v) else math.inf

    a, g, rho, sig = config.alpha, config.gamma, config.rho, config.sigma
    n = x0.size
    sim = initial_simplex(x0)
    fsim = np.empty(n + 1)
    fsim[0] = f_start
    for i in range(1, n + 1):
        fsim[i] = f(sim[i])

    # stable sort keeps the start vertex first among ties
    order = np.argsort(fsim, kind="stable")
    sim, fsim = sim[order], fsim[order]
    trace = [(0, float(fsim[0]))]

    iterations = 0
    converged = False
    while iterations < config.max_iterations:
        if (np.max(np.abs(fsim[1:] - fsim[0])) <= config.tolerance
                and np.max(np.abs(sim[1:] - sim[0])) <= config.tolerance):
            converged = True
            break
        iterations += 1

        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + a * (centroid - worst)
        fr = f(xr)
        shrink = False

        if fr < fsim[0]:
            xe = centroid + g * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                sim[-1], fsim[-1] = xe, fe
            else:
                sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fr
        elif fr < fsim[-1]:
            xc = centroid + rho * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fsim[-1] = xc, fc
            else:
                shrink = True
        else:
            xcc = centroid + rho * (worst - centroid)
            fcc = f(xcc)
            if fcc < fsim[-1]:
                sim[-1], fsim[-1] = xcc, fcc
            else:
                shrink = True

        if shrink:
            for i in range(1, n + 1):
                sim[i] = sim[0] + sig * (sim[i] - sim[0])
                fsim[i] = f(sim[i])

        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        trace.append((iterations, float(fsim[0])))

    return SimplexResult(sim[0].copy(), float(fsim[0]), iterations, converged, trace)


# -- radiometric calibration --------------------------------------------------

def _pair_arrays(pairs):
    dn = np.array([p.dn for p in pairs], dtype=np.float64)
    t = np.array([p.t_ref for p in pairs], dtype=np.float64)
    return dn, t


def _sse(r1, o, r2, b, f, dn, t_ref) -> float:
    shifted = dn + o
    ok = shifted > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = r1 / (r2 * np.where(ok, shifted, 1.0)) + f
        ok &= arg > 1
        temp = b / np.log(np.where(ok, arg, np.e)) - 273.15
    ok &= np.isfinite(temp)
    resid = np.where(ok, temp - t_ref, 0.0)
    return float(np.sum(resid * resid) + OUT_OF_DOMAIN_PENALTY * np.count_nonzero(~ok))


def calibration_objective(free, fixed, pairs: Sequence[ReferencePair]) -> float:
    """Sum of squared temperature residuals for ``free=(r1, o)``, ``fixed=(r2, b, f)``.

    Pairs outside the model domain add a flat penalty of 1e6 each.
    """
    if len(pairs) == 0:
        raise ValueError("calibration needs at least one reference pair")
    r1, o = (float(v) for v in free)
    r2, b, f = (float(v) for v in fixed)
    dn, t = _pair_arrays(pairs)
    return _sse(r1, o, r2, b, f, dn, t)


@dataclass
class CalibrationReport:
    params_before: RadiometricParams
    params_after: RadiometricParams
    rmse_before: float
    rmse_after: float
    r2_before: float
    r2_after: float
    iterations: int
    converged: bool
    final_objective: float
    n_pairs: int
    trace: List[tuple] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params_before": self.params_before.to_dict(),
            "params_after": self.params_after.to_dict(),
            "rmse_before": self.rmse_before,
            "rmse_after": self.rmse_after,
            "r2_before": self.r2_before,
            "r2_after": self.r2_after,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_objective": self.final_objective,
            "n_pairs": self.n_pairs,
            "trace": [{"iteration": i, "best_value": v} for i, v in self.trace],
        }


def _fit_quality(params: RadiometricParams, dn, t_ref):
    temps, ok = temperatures(dn, params)
    if not ok.any():
        return math.inf, math.nan
    rmse = metrics.rmse(temps[ok], t_ref[ok])
    try:
        r2 = metrics.r_squared(temps[ok], t_ref[ok])
    except ValueError:
        r2 = math.nan
    return rmse, r2


def calibrate(
    pairs: Sequence[ReferencePair],
    initial: RadiometricParams,
    config: SimplexConfig = SimplexConfig(),
) -> CalibrationReport:
    """Refit ``r1`` and ``o`` against reference temperatures, holding r2, b, f."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise CalibrationError(f"need at least 2 reference pairs, got {len(pairs)}")
    if len({p.t_ref for p in pairs}) < 2:
        raise CalibrationError("all reference temperatures are identical; the fit is ill-posed")

    # canonical order makes the floating-point objective order-independent
    pairs.sort(key=lambda p: (p.dn, p.t_ref))
    dn, t_ref = _pair_arrays(pairs)
    r2, b, f = initial.r2, initial.b, initial.f

    result = nelder_mead(
        lambda x: _sse(x[0], x[1], r2, b, f, dn, t_ref),
        [initial.r1, initial.o],
        config,
    )
    r1_fit, o_fit = result.x
    if not r1_fit > 0:
        raise CalibrationError(f"fit diverged to non-physical r1={r1_fit}")
    after = initial.replace(r1=float(r1_fit), o=float(o_fit))

    rmse_b, r2_b = _fit_quality(initial, dn, t_ref)
    rmse_a, r2_a = _fit_quality(after, dn, t_ref)
    return CalibrationReport(
        params_before=initial,
        params_after=after,
        rmse_before=rmse_b,
        rmse_after=rmse_a,
        r2_before=r2_b,
        r2_after=r2_a,
        iterations=result.iterations,
        converged=result.converged,
        final_objective=result.fun,
        n_pairs=len(pairs),
        trace=result.trace,
    )


class CsvFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


CSV_HEADER = ["timestamp", "dn", "t_ref_c"]


def read_reference_csv(path) -> List[ReferencePair]:
    """Read ``timestamp,dn,t_ref_c`` rows into reference pairs."""
    pairs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise CsvFormatError(path, 1, f"expected header {','.join(CSV_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise CsvFormatError(path, line, f"expected 3 columns, got {len(row)}")
            try:
                ts, dn, t = (float(c) for c in row)
                pairs.append(ReferencePair(dn=dn, t_ref=t, timestamp=ts))
            except ValueError as exc:
                raise CsvFormatError(path, line, str(exc)) from None
    return pairs


def write_reference_csv(pairs: Sequence[ReferencePair], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i, p in enumerate(pairs):
            ts = p.timestamp if p.timestamp is not None else float(i)
            w.writerow([repr(float(ts)), repr(float(p.dn)), repr(float(p.t_ref))])


def write_report(report: CalibrationReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
