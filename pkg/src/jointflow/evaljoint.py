"""Scene-level evaluation: joint minADE/minFDE, KDE-based joint NLL, aggregation.

The distance metrics are joint: the error of a sample is averaged over all
agents of the scene first, and the minimum is then taken over scene-level
samples. Taking per-agent minima independently would reward incoherent
futures and is deliberately not offered.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .scene import Scene

KDE_BANDWIDTH_FLOOR = 1e-3


def joint_min_ade(samples: np.ndarray, ground_truth: np.ndarray) -> float:
    """Min over joint samples of the agent-and-time-averaged L2 error (meters).

    samples: (S, n_agents, n_steps, 2); ground_truth: (n_agents, n_steps, 2).
    """
    samples, ground_truth = _check_shapes(samples, ground_truth)
    err = np.linalg.norm(samples - ground_truth[None], axis=-1)  # (S, A, T)
    return float(err.mean(axis=(1, 2)).min())


def joint_min_fde(samples: np.ndarray, ground_truth: np.ndarray) -> float:
    """Min over joint samples of the agent-averaged final-step L2 error."""
    samples, ground_truth = _check_shapes(samples, ground_truth)
    err = np.linalg.norm(samples[:, :, -1] - ground_truth[None, :, -1], axis=-1)
    return float(err.mean(axis=1).min())


def _check_shapes(samples, ground_truth):
    samples = np.asarray(samples, dtype=float)
    ground_truth = np.asarray(ground_truth, dtype=float)
    if samples.ndim != 4 or samples.shape[-1] != 2:
        raise ValueError(f"samples must be (S, A, T, 2), got {samples.shape}")
    if samples.shape[0] < 1:
        raise ValueError("need at least one joint sample")
    if samples.shape[1:] != ground_truth.shape:
        raise ValueError(
            f"sample shape {samples.shape[1:]} does not match ground truth "
            f"{ground_truth.shape}"
        )
    return samples, ground_truth


def kde_bandwidths(samples: np.ndarray, floor: float = KDE_BANDWIDTH_FLOOR) -> np.ndarray:
    """Per-coordinate rule-of-thumb bandwidths sigma_j * m^(-1/(d+4)), floored."""
    samples = np.asarray(samples, dtype=float)
    m, d = samples.shape
    sigma = samples.std(axis=0, ddof=1) if m > 1 else np.zeros(d)
    return np.maximum(sigma * m ** (-1.0 / (d + 4)), floor)


def gaussian_kde_logpdf(
    points: np.ndarray, samples: np.ndarray, floor: float = KDE_BANDWIDTH_FLOOR
) -> np.ndarray:
    """Log density of a product-Gaussian KDE fitted to `samples`, at `points`.

    points: (q, d); samples: (m, d). Degenerate coordinates are handled by
    the bandwidth floor.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    samples = np.asarray(samples, dtype=float)
    m, d = samples.shape
    h = kde_bandwidths(samples, floor)
    z = (points[:, None, :] - samples[None, :, :]) / h  # (q, m, d)
    log_kernel = -0.5 * (z**2).sum(axis=-1) - np.log(h).sum() - 0.5 * d * np.log(2 * np.pi)
    return logsumexp(log_kernel, axis=1) - np.log(m)


def joint_nll_metric(
    sampler: Callable[[Scene], np.ndarray],
    scenes: Sequence[Scene],
    max_samples: int = 100,
) -> float:
    """Mean per-scene NLL of the ground-truth joint future under a KDE.

    `sampler` maps a scene to joint samples (S, n_agents, n_steps, 2); up to
    `max_samples` of them are flattened into vectors, a Gaussian kernel
    density is fitted over them, and the negative log density is read off at
    the flattened ground truth.
    """
    if max_samples < 2:
        raise ValueError("max_samples must be >= 2")
    if not scenes:
        raise ValueError("need at least one scene")
    total = 0.0
    for scene in scenes:
        samples = np.asarray(sampler(scene), dtype=float)[:max_samples]
        gt = np.stack([a.future.positions for a in scene.agents])
        flat = samples.reshape(samples.shape[0], -1)
        total += -float(gaussian_kde_logpdf(gt.reshape(1, -1), flat)[0])
    return total / len(scenes)


@dataclass(frozen=True)
class MetricsReport:
    variant: str
    seed: int
    n_scenes: int
    joint_min_ade: float
    joint_min_fde: float
    joint_nll: float
    classifier_accuracy: float | None = None

    def __post_init__(self):
        if self.n_scenes < 1:
            raise ValueError("a report needs at least one scene")
        if self.joint_min_ade < 0 or self.joint_min_fde < 0:
            raise ValueError("distance metrics cannot be negative")


def evaluate_variant(
    bundle,
    scenes: Sequence[Scene],
    n_samples: int = 6,
    max_density_samples: int = 100,
    eval_seed: int = 0,
) -> MetricsReport:
    """Distance metrics on `n_samples` joint draws plus the KDE NLL.

    Deterministic under `eval_seed`: each scene gets a derived seed, so the
    report is reproducible regardless of scene-level parallelism.
    """
    from . import model as model_mod

    if not scenes:
        raise ValueError("need at least one scene to evaluate")
    ade = fde = 0.0
    for i, scene in enumerate(scenes):
        preds = model_mod.predict_scene(scene, bundle, n_samples, seed=(eval_seed, 2 * i))
        gt = np.stack([a.future.positions for a in scene.agents])
        ade += joint_min_ade(preds, gt)
        fde += joint_min_fde(preds, gt)
    index = {s.scene_id: i for i, s in enumerate(scenes)}

    def sampler(scene: Scene) -> np.ndarray:
        return model_mod.predict_scene(
            scene, bundle, max_density_samples, seed=(eval_seed, 2 * index[scene.scene_id] + 1)
        )

    nll = joint_nll_metric(sampler, scenes, max_density_samples)
    return MetricsReport(
        variant=bundle.variant.strategy.value,
        seed=bundle.variant.seed,
        n_scenes=len(scenes),
        joint_min_ade=ade / len(scenes),
        joint_min_fde=fde / len(scenes),
        joint_nll=nll,
        classifier_accuracy=model_mod.classifier_accuracy(bundle, scenes),
    )


@dataclass(frozen=True)
class VariantSummary:
    variant: str
    n_runs: int
    min_ade_mean: float
    min_ade_std: float
    min_fde_mean: float
    min_fde_std: float
    nll_mean: float
    nll_std: float
    best_min_ade: bool
    best_min_fde: bool
    best_nll: bool


def aggregate_runs(reports: Sequence[MetricsReport]) -> list[VariantSummary]:
    """Per-variant mean and sample std of each metric, best variant marked.

    Lower is better for all three metrics; a single run reports std 0.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    by_variant: dict[str, list[MetricsReport]] = {}
    for r in reports:
        by_variant.setdefault(r.variant, []).append(r)

    def mean_std(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        return float(arr.mean()), std

    stats = {}
    for variant, runs in sorted(by_variant.items()):
        stats[variant] = (
            mean_std([r.joint_min_ade for r in runs]),
            mean_std([r.joint_min_fde for r in runs]),
            mean_std([r.joint_nll for r in runs]),
            len(runs),
        )
    best_ade = min(stats, key=lambda v: stats[v][0][0])
    best_fde = min(stats, key=lambda v: stats[v][1][0])
    best_nll = min(stats, key=lambda v: stats[v][2][0])
    return [
        VariantSummary(
            variant=v,
            n_runs=n,
            min_ade_mean=a[0],
            min_ade_std=a[1],
            min_fde_mean=f[0],
            min_fde_std=f[1],
            nll_mean=l[0],
            nll_std=l[1],
            best_min_ade=v == best_ade,
            best_min_fde=v == best_fde,
            best_nll=v == best_nll,
        )
        for v, (a, f, l, n) in stats.items()
    ]


# -- CSV I/O (fixed column sets; floats written via repr for stability) ----

REPORT_COLUMNS = [
    "variant",
    "seed",
    "n_scenes",
    "joint_min_ade",
    "joint_min_fde",
    "joint_nll",
    "classifier_accuracy",
]

SUMMARY_COLUMNS = [
    "variant",
    "n_runs",
    "min_ade_mean",
    "min_ade_std",
    "min_fde_mean",
    "min_fde_std",
    "nll_mean",
    "nll_std",
    "best_min_ade",
    "best_min_fde",
    "best_nll",
]


def write_reports_csv(reports: Sequence[MetricsReport], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow(
                [
                    r.variant,
                    r.seed,
                    r.n_scenes,
                    repr(r.joint_min_ade),
                    repr(r.joint_min_fde),
                    repr(r.joint_nll),
                    "" if r.classifier_accuracy is None else repr(r.classifier_accuracy),
                ]
            )


def read_reports_csv(path: str | Path) -> list[MetricsReport]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                MetricsReport(
                    variant=row["variant"],
                    seed=int(row["seed"]),
                    n_scenes=int(row["n_scenes"]),
                    joint_min_ade=float(row["joint_min_ade"]),
                    joint_min_fde=float(row["joint_min_fde"]),
                    joint_nll=float(row["joint_nll"]),
                    classifier_accuracy=(
                        float(row["classifier_accuracy"])
                        if row["classifier_accuracy"]
                        else None
                    ),
                )
            )
    return out


def write_summary_csv(summaries: Sequence[VariantSummary], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            writer.writerow(
                [
                    s.variant,
                    s.n_runs,
                    repr(s.min_ade_mean),
                    repr(s.min_ade_std),
                    repr(s.min_fde_mean),
                    repr(s.min_fde_std),
                    repr(s.nll_mean),
                    repr(s.nll_std),
                    int(s.best_min_ade),
                    int(s.best_min_fde),
                    int(s.best_nll),
                ]
            )
