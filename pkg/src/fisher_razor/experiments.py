"""Toy BIC-versus-razor curves and end-to-end razor sweeps."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InputError
from .network import Dataset, FitConfig, NetworkSpec, fit_mle, forward, init_params
from .prior import PriorConfig
from .razor import CSV_COLUMNS, RazorReport, RazorSettings, razor

logger = logging.getLogger(__name__)

# toy constants of the preset: training-error scale, linear penalty,
# negative-complexity weight, 1/(N eps2^2), and width M = sqrt(0.5 D)
FIG2_ERROR = 10.0
FIG2_PENALTY = 0.1
FIG2_C3 = 0.002
FIG2_SHIFT = 0.001
FIG2_WIDTH_FACTOR = 0.5
FIG2_D_RANGE = range(1, 1001)


@dataclass(frozen=True)
class CurvePoint:
    d: int
    bic: float
    mdl: float


def figure2_bic(d: float) -> float:
    return FIG2_ERROR / (d + 1) + FIG2_PENALTY * d


def figure2_mdl(d: float) -> float:
    width = math.sqrt(FIG2_WIDTH_FACTOR * d)
    return figure2_bic(d) - FIG2_C3 * d / (1.0 / width + FIG2_SHIFT) ** 2


def figure2_curves(d_values: Sequence[int] = FIG2_D_RANGE) -> list[CurvePoint]:
    d_values = list(d_values)
    if not d_values or any(int(d) < 1 for d in d_values):
        raise InputError("d_values must be a nonempty list of integers >= 1")
    return [CurvePoint(int(d), figure2_bic(d), figure2_mdl(d)) for d in d_values]


def curves_csv(points: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    buf.write("d,bic,mdl\n")
    for p in points:
        buf.write(f"{p.d},{float(p.bic)!r},{float(p.mdl)!r}\n")
    return buf.getvalue()


def curves_svg(points: Sequence[CurvePoint], width: int = 640, height: int = 400) -> str:
    """Standalone SVG line chart with one polyline per criterion."""
    pad = 50
    xs = [p.d for p in points]
    ys = [v for p in points for v in (p.bic, p.mdl)]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    def poly(attr, color):
        pts = " ".join(f"{sx(p.d):.2f},{sy(getattr(p, attr)):.2f}" for p in points)
        return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'

    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        poly("bic", "#1f77b4"),
        poly("mdl", "#d62728"),
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="13">number of parameters D</text>',
        f'<text x="14" y="{height / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 14 {height / 2})">criterion</text>',
        f'<text x="{width - pad}" y="{pad}" text-anchor="end" font-size="12" fill="#1f77b4">BIC</text>',
        f'<text x="{width - pad}" y="{pad + 16}" text-anchor="end" font-size="12" fill="#d62728">MDL razor</text>',
        "</svg>",
    ])


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    reports: list[RazorReport | None]
    errors: list[str | None]
    warnings: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rep in self.reports:
            if rep is not None:
                writer.writerow(rep.csv_row())
        return buf.getvalue()


def _one(spec: NetworkSpec, data: Dataset, config: PriorConfig, settings: RazorSettings, fit_config: FitConfig):
    fit = fit_mle(spec, data, fit_config)
    return razor(spec, fit.theta, data, config, settings)


def razor_sweep(
    specs: Sequence[NetworkSpec],
    data: Dataset,
    config: PriorConfig,
    seed: int = 0,
    settings: RazorSettings | None = None,
    fit_config: FitConfig | None = None,
    max_workers: int = 1,
) -> SweepResult:
    """Fit every spec and evaluate its razor with the same ``seed``.

    A spec whose fit or razor fails gets ``None`` in ``reports`` and the
    message in ``errors``; the sweep carries on.  Rows keep input order.
    """
    for spec in specs:
        if spec.input_dim != data.inputs.shape[1] or spec.output_dim != data.targets.shape[1]:
            raise InputError(f"spec {spec.layer_widths} does not match data dimensions")
    st = replace(settings or RazorSettings(), seed=seed)
    fc = fit_config or FitConfig()

    def run(spec):
        try:
            return _one(spec, data, config, st, fc), None
        except Exception as exc:  # row-level failure, sweep continues
            logger.error("razor sweep: spec %s failed: %s", spec.layer_widths, exc)
            return None, f"{type(exc).__name__}: {exc}"

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, specs))
    else:
        results = [run(s) for s in specs]
    result = SweepResult([r for r, _ in results], [e for _, e in results])
    fitted = [r.neg_log_lik for r in result.reports if r is not None]
    if any(b > a + 1e-6 for a, b in zip(fitted, fitted[1:])):
        msg = "neg_log_lik increases along the sweep; a larger model fit worse"
        logger.warning(msg)
        result.warnings.append(msg)
    return result


def width_sweep_specs(input_dim: int, output_dim: int, widths: Sequence[int], activation: str = "tanh", seed: int = 0) -> list[NetworkSpec]:
    return [NetworkSpec((input_dim, w, output_dim), activation=activation, seed=seed) for w in widths]


def synthetic_dataset(spec: NetworkSpec, n: int, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Gaussian inputs, targets from a randomly initialized teacher of the same architecture plus noise."""
    rng = np.random.default_rng(seed)
    teacher = init_params(replace(spec, seed=seed + 1))
    x = rng.standard_normal((n, spec.input_dim))
    y = forward(spec, teacher, x) + noise * rng.standard_normal((n, spec.output_dim))
    return Dataset(x, y)
