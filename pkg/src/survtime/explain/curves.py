"""Curve-set containers shared by all explanations, plus CSV/JSON/SVG export."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from html import escape

import numpy as np

from ..data import TimeGrid

KINDS = (
    "ice", "pdp", "shap-local", "shap-importance", "perm-importance",
    "grouped-perm-importance",
)

CSV_COLUMNS = ("kind", "curve_name", "time", "value", "dispersion")
RAW_SUFFIX = "#raw"


def _fmt(v) -> str:
    return repr(float(v))


@dataclass(frozen=True, eq=False)
class ExplanationCurveSet:
    """Named family of curves over one time grid.

    ``dispersion`` holds per-curve standard deviations where the estimator
    has a spread (ICE values behind a PDP, permutations behind a PFI curve).
    ``auxiliary`` carries companion curves that are exported but not part of
    the headline result, e.g. the signed importance behind an absolute one.
    """

    grid: TimeGrid
    curves: dict[str, np.ndarray]
    kind: str
    dispersion: dict[str, np.ndarray] = field(default_factory=dict)
    auxiliary: dict[str, np.ndarray] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown explanation kind {self.kind!r}")
        m = len(self.grid)

        def freeze(d, what):
            out = {}
            for name, v in d.items():
                a = np.array(v, dtype=float, copy=True)
                if a.shape != (m,):
                    raise ValueError(f"{what} {name!r} has shape {a.shape}, grid has {m} points")
                a.setflags(write=False)
                out[str(name)] = a
            return out

        curves = freeze(self.curves, "curve")
        disp = freeze(self.dispersion, "dispersion")
        unknown = set(disp) - set(curves)
        if unknown:
            raise ValueError(f"dispersion given for unknown curves {sorted(unknown)}")
        if any(np.any(d < 0) for d in disp.values()):
            raise ValueError("dispersion must be non-negative")
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "dispersion", disp)
        object.__setattr__(self, "auxiliary", freeze(self.auxiliary, "auxiliary curve"))
        object.__setattr__(self, "provenance", dict(self.provenance))

    @property
    def names(self) -> list[str]:
        return list(self.curves)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.curves[name]

    def area(self, name: str) -> float:
        """Trapezoidal area under a curve (the value itself for one-point grids)."""
        y = self.curves[name]
        if y.size == 1:
            return float(y[0])
        return float(np.sum((y[1:] + y[:-1]) * np.diff(self.grid.points)) / 2.0)

    def ranking(self) -> list[str]:
        """Curve names ordered by decreasing area."""
        return sorted(self.names, key=lambda nm: -self.area(nm))

    def rows(self):
        t = self.grid.points
        for name, values in self.curves.items():
            disp = self.dispersion.get(name)
            for k in range(t.size):
                yield (self.kind, name, _fmt(t[k]), _fmt(values[k]),
                       "" if disp is None else _fmt(disp[k]))
        for name, values in self.auxiliary.items():
            for k in range(t.size):
                yield (self.kind, name, _fmt(t[k]), _fmt(values[k]), "")

    def to_csv(self, path) -> None:
        """Long format: one row per (curve, time point)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(self.rows())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "time": self.grid.points.tolist(),
            "curves": [
                {
                    "name": name,
                    "value": v.tolist(),
                    "dispersion": self.dispersion[name].tolist() if name in self.dispersion else None,
                }
                for name, v in self.curves.items()
            ],
            "auxiliary": [{"name": nm, "value": v.tolist()} for nm, v in self.auxiliary.items()],
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExplanationCurveSet":
        curves = {c["name"]: c["value"] for c in d["curves"]}
        disp = {c["name"]: c["dispersion"] for c in d["curves"] if c["dispersion"] is not None}
        aux = {c["name"]: c["value"] for c in d.get("auxiliary", [])}
        return cls(TimeGrid(d["time"]), curves, d["kind"], disp, aux, d.get("provenance", {}))

    def to_svg(self, path=None, width: int = 640, height: int = 400, title: str | None = None) -> str:
        svg = render_svg(self, width, height, title)
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(svg)
        return svg


_PALETTE = ("#4378bf", "#f05a71", "#8bdcbe", "#ae2c87", "#ffa58c", "#46bac2",
            "#371ea3", "#b3eebb", "#ffdc80", "#8c2e2e")


def render_svg(cs: ExplanationCurveSet, width=640, height=400, title=None) -> str:
    """Lines over time with +/- one standard deviation ribbons."""
    left, right, top, bottom = 60, 150, 30, 40
    pw, ph = width - left - right, height - top - bottom
    t = cs.grid.points
    lows, highs = [], []
    for name, v in cs.curves.items():
        d = cs.dispersion.get(name, np.zeros_like(v))
        lows.append(np.min(v - d))
        highs.append(np.max(v + d))
    ymin, ymax = float(min(lows)), float(max(highs))
    if ymax - ymin < 1e-12:
        ymin, ymax = ymin - 0.5, ymax + 0.5
    tmin, tmax = float(t[0]), float(t[-1])
    tspan = tmax - tmin if tmax > tmin else 1.0

    def sx(x):
        return left + (x - tmin) / tspan * pw

    def sy(y):
        return top + (ymax - y) / (ymax - ymin) * ph

    def path_of(xs, ys):
        # step-after rendering: curves are right-continuous in time
        pts = [f"{sx(xs[0]):.2f},{sy(ys[0]):.2f}"]
        for k in range(1, len(xs)):
            pts.append(f"{sx(xs[k]):.2f},{sy(ys[k - 1]):.2f}")
            pts.append(f"{sx(xs[k]):.2f},{sy(ys[k]):.2f}")
        return " ".join(pts)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>',
    ]
    if title:
        out.append(f'<text x="{left}" y="{top - 10}" font-size="13">{escape(title)}</text>')
    for k in range(5):
        yv = ymin + (ymax - ymin) * k / 4
        xv = tmin + tspan * k / 4
        out.append(f'<text x="{left - 6}" y="{sy(yv) + 4:.2f}" text-anchor="end">{yv:.3g}</text>')
        out.append(f'<text x="{sx(xv):.2f}" y="{top + ph + 16}" text-anchor="middle">{xv:.3g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 6}" text-anchor="middle">time</text>')
    for i, (name, v) in enumerate(cs.curves.items()):
        color = _PALETTE[i % len(_PALETTE)]
        d = cs.dispersion.get(name)
        if d is not None and np.any(d > 0):
            upper = path_of(t, v + d).split(" ")
            lower = path_of(t, v - d).split(" ")
            poly = " ".join(upper + lower[::-1])
            out.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{path_of(t, v)}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 14 * i + 8
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


@dataclass(frozen=True, eq=False)
class ShapAttribution:
    """Per-feature attribution curves for one observation.

    ``values[j]`` is the attribution of feature j over the grid; together
    with ``baseline`` (mean prediction over the background) they add up to
    ``prediction``. ``standard_errors`` is filled by the sampling estimator.
    """

    grid: TimeGrid
    values: np.ndarray
    baseline: np.ndarray
    prediction: np.ndarray
    feature_names: tuple[str, ...]
    estimator: str
    observation_id: int | str | None = None
    n_samples: int | None = None
    standard_errors: np.ndarray | None = None

    def local_accuracy_gap(self) -> float:
        """Largest |sum_j phi_j(t) + baseline(t) - f_t(x)| over the grid."""
        return float(np.max(np.abs(self.values.sum(axis=0) + self.baseline - self.prediction)))

    def as_curve_set(self, provenance: dict | None = None) -> ExplanationCurveSet:
        curves = dict(zip(self.feature_names, self.values))
        disp = {}
        if self.standard_errors is not None:
            disp = dict(zip(self.feature_names, self.standard_errors))
        prov = {"observation": self.observation_id, "estimator": self.estimator,
                "n_samples": self.n_samples}
        prov.update(provenance or {})
        return ExplanationCurveSet(self.grid, curves, "shap-local", disp,
                                   {"baseline": self.baseline, "prediction": self.prediction},
                                   prov)
