"""
SVG charts for analysis reports, rendered from jinja2 templates.
"""

from pathlib import Path
from typing import Dict, List, Union

from jinja2 import Environment, PackageLoader, StrictUndefined, select_autoescape

from drivercal.models.report_models import (
    BucketResult,
    ConsistencyReport,
    DistanceStats,
    MetricSummary,
)

SERIES_COLORS = {
    "refit noise": "#95a5a6",
    "same driver": "#2ecc71",
    "cross driver": "#e74c3c",
}


def _round(value: float) -> float:
    return round(float(value), 2)


def _series(bucket: BucketResult) -> Dict[str, DistanceStats]:
    return {
        "refit noise": bucket.refit_noise,
        "same driver": bucket.same_driver,
        "cross driver": bucket.cross_driver,
    }


class SvgRenderer:
    """Lays out histogram and error-bar charts and renders them to SVG 1.1."""

    def __init__(self, width: int = 640, height: int = 400):
        self.width = width
        self.height = height
        self.plot_left = 70
        self.plot_top = 50
        self.plot_width = width - self.plot_left - 30
        self.plot_height = height - self.plot_top - 80
        self.env = Environment(
            loader=PackageLoader("drivercal", "templates"),
            autoescape=select_autoescape(enabled_extensions=("j2",), default=True),
            undefined=StrictUndefined,
            trim_blocks=True,
            lstrip_blocks=True,
        )

    def _y(self, value: float, y_max: float) -> float:
        return _round(self.plot_top + self.plot_height * (1.0 - value / y_max))

    def _yticks(self, y_max: float, integer: bool) -> List[Dict]:
        ticks = []
        for i in range(6):
            value = y_max * i / 5
            label = f"{value:.0f}" if integer else f"{value:.2f}"
            ticks.append({"y": self._y(value, y_max), "label": label})
        return ticks

    def render_histogram(self, summary: MetricSummary) -> str:
        histogram = summary.histogram
        counts = histogram.counts
        edges = histogram.bin_edges
        y_max = max(max(counts, default=0), 1)
        bar_width = self.plot_width / max(len(counts), 1)
        bars = []
        for i, count in enumerate(counts):
            top = self._y(count, y_max)
            bars.append(
                {
                    "x": _round(self.plot_left + i * bar_width),
                    "y": top,
                    "width": _round(bar_width * 0.92),
                    "height": _round(self.plot_top + self.plot_height - top),
                    "count": count,
                    "label": f"[{edges[i]:.2f}, {edges[i + 1]:.2f})",
                    "peak": i in histogram.peaks,
                }
            )
        step = max(1, len(counts) // 5)
        xticks = [
            {"x": _round(self.plot_left + i * bar_width), "label": f"{edges[i]:.2f}"}
            for i in range(0, len(edges), step)
        ]
        return self.env.get_template("histogram.svg.j2").render(
            width=self.width,
            height=self.height,
            plot_left=self.plot_left,
            plot_top=self.plot_top,
            plot_width=self.plot_width,
            plot_height=self.plot_height,
            title=summary.name.replace("_", " "),
            xlabel=summary.unit,
            yticks=self._yticks(y_max, integer=True),
            bars=bars,
            xticks=xticks,
            footnote=(
                f"{len(summary.values)} of {summary.total_drivers} drivers "
                f"({summary.inclusion_fraction:.0%})"
            ),
        )

    def render_errorbars(self, report: ConsistencyReport) -> str:
        """Mean +- one standard error of the three distance populations per bucket."""
        highs = [
            stats.mean + stats.standard_error
            for bucket in report.buckets
            for stats in _series(bucket).values()
        ]
        y_max = max(max(highs, default=0.0), 1e-9) * 1.1
        group_width = self.plot_width / max(len(report.buckets), 1)
        groups = []
        for i, bucket in enumerate(report.buckets):
            center = self.plot_left + group_width * (i + 0.5)
            points = []
            for j, (series, stats) in enumerate(_series(bucket).items()):
                x = _round(center + (j - 1) * group_width * 0.2)
                points.append(
                    {
                        "x": x,
                        "y": self._y(stats.mean, y_max),
                        "y_high": self._y(stats.mean + stats.standard_error, y_max),
                        "y_low": self._y(max(stats.mean - stats.standard_error, 0.0), y_max),
                        "color": SERIES_COLORS[series],
                        "series": series,
                        "label": f"{stats.mean:.3f} +- {stats.standard_error:.3f} (n={stats.n})",
                    }
                )
            groups.append(
                {"x": _round(center), "label": f"{bucket.label} frames", "points": points}
            )

        legend = [
            {"x": self.plot_left + k * 130, "series": series, "color": color}
            for k, (series, color) in enumerate(SERIES_COLORS.items())
        ]
        footnote = ""
        if report.significance is not None:
            footnote = (
                f"Welch ({report.significance.alternative}) p = "
                f"{report.significance.p_value:.3g} in {report.significance.bucket}"
            )
        return self.env.get_template("errorbars.svg.j2").render(
            width=self.width,
            height=self.height,
            plot_left=self.plot_left,
            plot_top=self.plot_top,
            plot_width=self.plot_width,
            plot_height=self.plot_height,
            title="Parameter distance by trajectory length",
            ylabel="L2 distance",
            yticks=self._yticks(y_max, integer=False),
            groups=groups,
            legend=legend,
            footnote=footnote,
        )


def write_svg(svg: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path
