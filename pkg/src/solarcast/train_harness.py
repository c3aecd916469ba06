"""Training loop, hyperparameter sweep, SGD-vs-Adam comparison and curve files."""

import csv
import itertools
import logging
import math
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from solarcast import neuralnet as nn
from solarcast.dataset import batches
from solarcast.errors import ValidationError

log = logging.getLogger(__name__)

FREEZE_WINDOW = 10
FREEZE_DELTA = 1e-12
# MAE subgradients are bounded, so a blown-up run usually stays finite; a loss
# this many times the starting scale is treated as divergence too
DIVERGENCE_FACTOR = 100.0
SWEEP_EPOCHS = 100
FINAL_EPOCHS = 1000
DEFAULT_WIDTHS = (8, 16, 32, 64, 128, 256)
DEFAULT_DEPTHS = (1, 2, 3)
# feature magnitudes above this (mean |x| on the training set) are flagged as
# a divergence risk for plain SGD
RAW_SCALE_RISK = 10.0


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"  # "sgd" | "adam"
    lr: float = 0.001
    epochs: int = SWEEP_EPOCHS
    batch_size: int = 128
    shuffle_seed: int = 0
    model_config: nn.MLPConfig = field(default_factory=nn.MLPConfig)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.epochs < 1:
            raise ValidationError(f"epochs={self.epochs} must be >= 1")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size={self.batch_size} must be >= 1")

    def make_optimizer(self):
        if self.optimizer == "sgd":
            return nn.SGD(self.lr)
        return nn.Adam(self.lr, self.beta1, self.beta2, self.epsilon)

    def label(self):
        mc = self.model_config
        widths = "x".join(str(w) for w in mc.hidden_widths)
        relu = "+relu" if mc.final_relu else ""
        return f"{self.optimizer}-lr{self.lr:g}-h{widths}{relu}"


@dataclass
class EpochStats:
    epoch_index: int
    mean_train_mae: float
    mean_train_mse: float
    wall_seconds: float
    diverged: bool = False
    frozen: bool = False


def is_frozen(history, window=FREEZE_WINDOW, delta=FREEZE_DELTA):
    """True when the last ``window`` epoch-to-epoch loss changes are all below ``delta``."""
    if len(history) < window + 1:
        return False
    tail = history[-(window + 1) :]
    return all(abs(b - a) < delta for a, b in zip(tail[:-1], tail[1:]))


def train(config, train_set, model=None, on_epoch=None):
    """Train on ``train_set`` (a :class:`SampleSet`); returns ``(model, stats)``.

    Each epoch reshuffles with seed ``shuffle_seed + epoch`` and records the
    mean per-sample MAE/MSE of the forward passes made during that epoch.
    Training stops early, flagged ``diverged``, once the loss is non-finite or
    exceeds :func:`divergence_threshold`.
    """
    if len(train_set) == 0:
        raise ValidationError("training set is empty")
    model = nn.init(config.model_config) if model is None else model
    opt = config.make_optimizer()
    stats, history = [], []
    n = len(train_set)
    threshold = divergence_threshold(model, train_set)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        abs_sum = sq_sum = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for X, y in batches(train_set, config.batch_size, config.shuffle_seed + epoch):
                pred, cache = nn.forward(model, X)
                loss, dpred = nn.mae_loss(pred, y)
                r = pred - y
                abs_sum += loss * len(y)
                sq_sum += float(r @ r)
                if not math.isfinite(loss):
                    break
                nn.optimizer_step(model, nn.backward(model, cache, dpred), opt)
        mae = abs_sum / n
        mse = sq_sum / n
        diverged = not (
            math.isfinite(mae) and mae <= threshold and all(np.isfinite(p).all() for p in model.parameters())
        )
        history.append(mae)
        st = EpochStats(epoch, mae, mse, time.perf_counter() - t0, diverged, is_frozen(history))
        stats.append(st)
        if on_epoch is not None:
            on_epoch(st)
        if diverged:
            log.warning("%s diverged at epoch %d", config.label(), epoch)
            break
    return model, stats


def divergence_threshold(model, train_set, factor=DIVERGENCE_FACTOR):
    """``factor`` times the larger of the initial model's MAE and the all-zero predictor's MAE."""
    initial = nn.mae_loss(nn.forward(model, train_set.features)[0], train_set.targets)[0]
    zero = float(np.mean(np.abs(train_set.targets)))
    return factor * max(initial, zero)


def steps_per_epoch(n_samples, batch_size):
    return math.ceil(n_samples / batch_size)


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    config: TrainConfig
    final: EpochStats
    n_params: int
    any_frozen: bool

    @property
    def usable(self):
        return not self.final.diverged and math.isfinite(self.final.mean_train_mae)


@dataclass
class SweepResult:
    rows: list
    best: SweepRow | None


def default_grid(
    widths=DEFAULT_WIDTHS, depths=DEFAULT_DEPTHS, epochs=SWEEP_EPOCHS, batch_size=128, seed=0, input_dim=7
):
    grid = []
    for depth, width, final_relu, opt in itertools.product(depths, widths, (False, True), ("sgd", "adam")):
        mc = nn.MLPConfig(input_dim, (width,) * depth, final_relu, seed)
        grid.append(TrainConfig(opt, 0.001, epochs, batch_size, seed, mc))
    return grid


def select_best(rows):
    """Lowest finite final MAE; ties go to fewer parameters, then lower seed."""
    usable = [r for r in rows if r.usable]
    if not usable:
        return None
    return min(
        usable,
        key=lambda r: (r.final.mean_train_mae, r.n_params, r.config.model_config.init_seed, r.config.shuffle_seed),
    )


def _run_cell(cfg, train_set):
    _, stats = train(cfg, train_set)
    return SweepRow(cfg, stats[-1], cfg.model_config.n_params, any(s.frozen for s in stats))


def sweep(train_set, grid=None, jobs=1):
    """Train every grid cell independently; diverged cells are kept but never best."""
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ValidationError("sweep grid is empty")
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            rows = list(pool.map(lambda c: _run_cell(c, train_set), grid))
    else:
        rows = [_run_cell(c, train_set) for c in grid]
    return SweepResult(rows, select_best(rows))


def write_sweep_table(result, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "optimizer", "lr", "hidden", "final_relu", "epochs", "n_params",
                    "final_mae", "final_mse", "diverged", "any_frozen", "best"])
        for r in result.rows:
            mc = r.config.model_config
            w.writerow([
                r.config.label(), r.config.optimizer, r.config.lr,
                "x".join(map(str, mc.hidden_widths)), int(mc.final_relu), r.final.epoch_index + 1,
                r.n_params, repr(r.final.mean_train_mae), repr(r.final.mean_train_mse),
                int(r.final.diverged), int(r.any_frozen), int(r is result.best),
            ])
    return path


# ---------------------------------------------------------------------------
# Optimiser comparison
# ---------------------------------------------------------------------------


@dataclass
class Comparison:
    sgd: list
    adam: list
    sgd_diverged: bool
    sgd_frozen: bool
    adam_diverged: bool
    feature_scale: float
    divergence_risk: str

    def summary(self):
        return {
            "epochs": {"sgd": len(self.sgd), "adam": len(self.adam)},
            "final_mae": {"sgd": self.sgd[-1].mean_train_mae, "adam": self.adam[-1].mean_train_mae},
            "sgd_diverged": self.sgd_diverged,
            "sgd_frozen": self.sgd_frozen,
            "adam_diverged": self.adam_diverged,
            "feature_scale": self.feature_scale,
            "divergence_risk": self.divergence_risk,
        }


def feature_scale(features):
    return float(np.mean(np.abs(features))) if len(features) else 0.0


def compare_optimizers(train_set, epochs=SWEEP_EPOCHS, batch_size=128, seed=0, hidden=(32, 32), final_relu=False):
    """Train the same architecture with SGD(0.001) and default Adam from one init."""
    mc = nn.MLPConfig(train_set.features.shape[1], tuple(hidden), final_relu, seed)
    base = TrainConfig("sgd", 0.001, epochs, batch_size, seed, mc)
    _, sgd_stats = train(base, train_set)
    _, adam_stats = train(replace(base, optimizer="adam"), train_set)
    scale = feature_scale(train_set.features)
    return Comparison(
        sgd=sgd_stats,
        adam=adam_stats,
        sgd_diverged=any(s.diverged for s in sgd_stats),
        sgd_frozen=any(s.frozen for s in sgd_stats),
        adam_diverged=any(s.diverged for s in adam_stats),
        feature_scale=scale,
        divergence_risk="high" if scale > RAW_SCALE_RISK else "low",
    )


def moving_average(values, window=10):
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window:
        return v.copy()
    return np.convolve(v, np.ones(window) / window, mode="valid")


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

CURVE_COLUMNS = ("epoch", "mae", "mse", "wall_seconds", "diverged", "frozen")
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def write_curve_csv(stats, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for s in stats:
            w.writerow([s.epoch_index, repr(s.mean_train_mae), repr(s.mean_train_mse),
                        repr(s.wall_seconds), int(s.diverged), int(s.frozen)])
    return path


def read_curve_csv(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != CURVE_COLUMNS:
            raise ValidationError(f"{path}: unexpected header {header}")
        for row in r:
            out.append(EpochStats(int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                                  bool(int(row[4])), bool(int(row[5]))))
    return out


def render_svg(series, title="", width=640, height=400):
    """Line plot of epoch-mean MAE; ``series`` maps a label to its stats list."""
    margin = {"l": 70, "r": 20, "t": 30, "b": 50}
    pw, ph = width - margin["l"] - margin["r"], height - margin["t"] - margin["b"]
    finite = [s.mean_train_mae for st in series.values() for s in st if math.isfinite(s.mean_train_mae)]
    ymax = max(finite) if finite else 1.0
    ymin = min(min(finite), 0.0) if finite else 0.0
    if ymax == ymin:
        ymax = ymin + 1.0
    nmax = max((len(st) for st in series.values()), default=1)
    xspan = max(nmax - 1, 1)

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width), height=str(height), fill="white")
    ET.SubElement(svg, "text", x=str(width / 2), y="18", attrib={"text-anchor": "middle"}).text = title
    x0, y0 = margin["l"], margin["t"] + ph
    ET.SubElement(svg, "line", x1=str(x0), y1=str(y0), x2=str(x0 + pw), y2=str(y0), stroke="black")
    ET.SubElement(svg, "line", x1=str(x0), y1=str(margin["t"]), x2=str(x0), y2=str(y0), stroke="black")
    ET.SubElement(svg, "text", x=str(x0 + pw / 2), y=str(height - 10),
                  attrib={"text-anchor": "middle"}).text = "epoch"
    ylab = ET.SubElement(svg, "text", x="15", y=str(margin["t"] + ph / 2),
                         transform=f"rotate(-90 15 {margin['t'] + ph / 2})", attrib={"text-anchor": "middle"})
    ylab.text = "mean absolute training loss (watts per square meter)"
    for tick in range(5):
        v = ymin + (ymax - ymin) * tick / 4
        ty = y0 - ph * tick / 4
        ET.SubElement(svg, "text", x=str(x0 - 5), y=f"{ty:.1f}", attrib={"text-anchor": "end",
                      "font-size": "10"}).text = f"{v:.4g}"
    for ci, (label, stats) in enumerate(series.items()):
        pts = [
            f"{x0 + pw * s.epoch_index / xspan:.2f},{y0 - ph * (s.mean_train_mae - ymin) / (ymax - ymin):.2f}"
            for s in stats
            if math.isfinite(s.mean_train_mae)
        ]
        color = _COLORS[ci % len(_COLORS)]
        ET.SubElement(svg, "polyline", points=" ".join(pts), fill="none", stroke=color,
                      attrib={"stroke-width": "1.5", "data-series": label})
        ET.SubElement(svg, "text", x=str(x0 + pw - 5), y=str(margin["t"] + 14 * (ci + 1)), fill=color,
                      attrib={"text-anchor": "end", "font-size": "12"}).text = label
    return ET.tostring(svg, encoding="unicode")


def emit_curves(runs, out_dir):
    """Write ``<name>.csv`` and ``<name>.svg`` per run plus an overlay ``curves.svg``.

    ``runs`` maps a run name to its list of :class:`EpochStats`. Returns the
    written paths.
    """
    if not runs or any(not st for st in runs.values()):
        raise ValidationError("emit_curves needs at least one non-empty run")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, stats in runs.items():
        paths.append(write_curve_csv(stats, out / f"{name}.csv"))
        svg_path = out / f"{name}.svg"
        svg_path.write_text(render_svg({name: stats}, title=name), encoding="utf-8")
        paths.append(svg_path)
    if len(runs) > 1:
        overlay = out / "curves.svg"
        overlay.write_text(render_svg(runs, title=" vs ".join(runs)), encoding="utf-8")
        paths.append(overlay)
    return paths


def stats_to_dicts(stats):
    return [asdict(s) for s in stats]
