"""Experiment orchestration: Monte-Carlo runs, CSV emission, NFE accounting.

Every CSV starts with ``# schema=1`` followed by the fully resolved
configuration as ``#``-prefixed comment lines, so the artifact alone
reproduces itself.  Runs fan out over ``workers`` processes; each run
draws from its own (master_seed, run_index) stream, so results are byte
identical for any worker count.  Floats are formatted with %.12g and rows
are emitted in run-index order.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigError, ExperimentConfig, serialize_config
from .guidance import GuidanceConfig, freeinit_baseline, guided_sample
from .freqfilter import butterworth_mask
from .metrics import (
    MetricsReport,
    aggregate_report,
    reference_highfreq_energy,
    subject_consistency_proxy,
)
from .prior import make_denoiser, responsibilities, union_prior
from .sampler import sample
from .schedule import ddim_grid

__all__ = [
    "AblationRow",
    "run_experiment",
    "run_prior_distillation",
    "run_cfg_comparison",
    "guided_nfe_formula",
    "freeinit_nfe_formula",
]


@dataclass(frozen=True)
class AblationRow:
    """One swept value with mean/stderr of every proxy over the runs."""

    param: str
    value: float
    subject_mean: float
    subject_stderr: float
    background_mean: float
    background_stderr: float
    imaging_mean: float
    imaging_stderr: float
    smoothness_mean: float
    smoothness_stderr: float
    interframe_correlation: float
    sample_count: int

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if isinstance(v, float) and not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if (
            min(
                self.subject_stderr,
                self.background_stderr,
                self.imaging_stderr,
                self.smoothness_stderr,
            )
            < 0.0
        ):
            raise ValueError("stderr columns must be >= 0")


def guided_nfe_formula(grid_steps: int, interpolation_steps: int, rollout_steps: int) -> int:
    """2 per grid entry plus (rollout + 1) guide evaluations of 2 per window step."""
    return 2 * grid_steps + interpolation_steps * (rollout_steps + 1) * 2


def freeinit_nfe_formula(grid_steps: int, iterations: int) -> int:
    return iterations * 2 * grid_steps


# -- per-run workers (module level so they pickle) --------------------------


def _materialize(config: ExperimentConfig):
    sampler_prior = config.sampler_prior.build(config.channels, config.height, config.width)
    guide_prior = (
        config.guide_prior.build(config.channels, config.height, config.width)
        if config.guide_prior is not None
        else None
    )
    return (
        sampler_prior,
        guide_prior,
        config.sampler_schedule.build(),
        config.guide_schedule.build(),
        ddim_grid(config.sampler_schedule.total_steps, config.grid_steps),
    )


def _run_one(args):
    mode, config, guidance, run_index = args
    sampler_prior, guide_prior, sched_s, sched_g, grid = _materialize(config)
    denoiser = make_denoiser(sampler_prior)
    if mode == "plain":
        z, trace = sample(
            denoiser,
            sched_s,
            grid,
            guidance.main_guidance,
            config.condition,
            config.shape,
            config.master_seed,
            run_index,
        )
    elif mode == "guided":
        guide_denoiser = make_denoiser(guide_prior) if guide_prior is not None else None
        z, trace = guided_sample(
            denoiser,
            sched_s,
            grid,
            guidance,
            config.condition,
            config.shape,
            config.master_seed,
            run_index,
            guide_denoiser=guide_denoiser,
            guide_schedule=sched_g if guide_prior is not None else None,
        )
    elif mode == "baseline":
        mask = butterworth_mask(
            config.frames, config.height, config.width, guidance.cutoff, guidance.filter_order
        )
        z, trace = freeinit_baseline(
            denoiser,
            sched_s,
            grid,
            config.baseline_iterations,
            mask,
            guidance.main_guidance,
            config.condition,
            config.shape,
            config.master_seed,
            run_index,
        )
    else:  # pragma: no cover - guarded by callers
        raise ValueError(f"unknown run mode {mode!r}")
    return z, trace.nfe_base, trace.nfe_guide


def _run_many(mode: str, config: ExperimentConfig, guidance: GuidanceConfig):
    """Videos plus (nfe_base, nfe_guide) for run indices 0..sample_count-1."""
    args = [(mode, config, guidance, i) for i in range(config.sample_count)]
    if config.workers <= 1:
        results = [_run_one(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, args, chunksize=8))
    videos = [r[0] for r in results]
    return videos, results[0][1], results[0][2]


# -- CSV plumbing ------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(path: str, config: ExperimentConfig, header, rows) -> str:
    buf = io.StringIO()
    buf.write("# schema=1\n")
    for line in serialize_config(config).splitlines():
        buf.write(f"# {line}\n" if line else "#\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    tmp = path + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        for candidate in (tmp, path):
            try:
                os.remove(candidate)
            except OSError:
                pass
        raise
    return path


def _reference_energy(config: ExperimentConfig) -> float:
    prior = config.sampler_prior.build(config.channels, config.height, config.width)
    return reference_highfreq_energy(
        prior, config.shape, sample_count=1000, seed=config.master_seed ^ 0x5EED, condition=None
    )


_REPORT_HEADER = (
    ("kind",)
    + MetricsReport.CSV_COLUMNS
    + ("nfe_base", "nfe_guide", "nfe_total", "master_seed")
)


def _report_row(kind: str, report: MetricsReport, nfe_base: int, nfe_guide: int, seed: int):
    return (
        (kind,)
        + report.csv_values()
        + (nfe_base, nfe_guide, nfe_base + nfe_guide, seed)
    )


# -- experiment kinds --------------------------------------------------------


def _run_report_experiment(config: ExperimentConfig, mode: str) -> str:
    videos, nfe_base, nfe_guide = _run_many(mode, config, config.guidance)
    report = aggregate_report(videos, _reference_energy(config))
    row = _report_row(config.kind, report, nfe_base, nfe_guide, config.master_seed)
    return _write_csv(config.out, config, _REPORT_HEADER, [row])


def _stats(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), stderr


def run_ablation(config: ExperimentConfig) -> str:
    """Sweep one guidance parameter; one `AblationRow` per value."""
    from .metrics import (
        background_consistency_proxy,
        imaging_quality_proxy,
        interframe_correlation,
        motion_smoothness_proxy,
    )

    reference = _reference_energy(config)
    rows = []
    sweep_rows = []
    for value in config.ablate_values:
        cast = int(value) if config.ablate_param != "interpolation_scale" else float(value)
        try:
            guidance = replace(config.guidance, **{config.ablate_param: cast})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        videos, _, _ = _run_many("guided", config, guidance)
        subj = [subject_consistency_proxy(v) for v in videos]
        back = [background_consistency_proxy(v) for v in videos]
        imag = [imaging_quality_proxy(v, reference) for v in videos]
        smoo = [motion_smoothness_proxy(v) for v in videos]
        s_m, s_e = _stats(subj)
        b_m, b_e = _stats(back)
        i_m, i_e = _stats(imag)
        m_m, m_e = _stats(smoo)
        row = AblationRow(
            param=config.ablate_param,
            value=float(value),
            subject_mean=s_m,
            subject_stderr=s_e,
            background_mean=b_m,
            background_stderr=b_e,
            imaging_mean=i_m,
            imaging_stderr=i_e,
            smoothness_mean=m_m,
            smoothness_stderr=m_e,
            interframe_correlation=interframe_correlation(videos),
            sample_count=len(videos),
        )
        sweep_rows.append(row)
        rows.append(tuple(getattr(row, f) for f in AblationRow.__dataclass_fields__))
    header = tuple(AblationRow.__dataclass_fields__)
    path = _write_csv(config.out, config, header, rows)
    if config.plot is not None:
        from .svgplot import write_line_chart

        write_line_chart(
            config.plot,
            [r.value for r in sweep_rows],
            {
                "subject": [r.subject_mean for r in sweep_rows],
                "background": [r.background_mean for r in sweep_rows],
            },
            title=f"sweep of {config.ablate_param}",
            xlabel=config.ablate_param,
            ylabel="proxy value",
        )
    return path


def run_prior_distillation(config: ExperimentConfig) -> str:
    """Guided vs unguided mode occupancy under a prior missing a mode.

    Outputs are classified to their nearest mode: maximum responsibility
    at the clean level under the equal-weight union of the sampler and
    guide mixtures, null condition.  Rows report per-mode fractions for
    both arms; the target component is indexed within the guide prior.
    """
    if config.guide_prior is None:
        raise ConfigError("distill requires a [guide_prior] section")
    if not 0 <= config.distill_target_component < len(config.guide_prior.components):
        raise ConfigError("distill_target_component out of range for the guide prior")
    sampler_prior = config.sampler_prior.build(config.channels, config.height, config.width)
    guide_prior = config.guide_prior.build(config.channels, config.height, config.width)
    union = union_prior(sampler_prior, guide_prior)
    shape3 = (config.channels, config.height, config.width)
    flat = [
        np.broadcast_to(np.asarray(comp.mean_for(None), dtype=np.float64), shape3).ravel()
        for _, comp in union.components
    ]
    if all(np.array_equal(flat[0], m) for m in flat[1:]):
        raise ConfigError("mixture modes coincide; classification is degenerate")

    rows = []
    for arm, mode in (("unguided", "plain"), ("guided", "guided")):
        videos, _, _ = _run_many(mode, config, config.guidance)
        counts = np.zeros(len(union.components), dtype=int)
        for v in videos:
            counts[int(np.argmax(responsibilities(union, v, 1.0, None)))] += 1
        for comp_index, count in enumerate(counts):
            is_target = comp_index == len(sampler_prior.components) + config.distill_target_component
            rows.append(
                (
                    arm,
                    comp_index,
                    int(is_target),
                    count / len(videos),
                    int(count),
                    len(videos),
                )
            )
    header = ("arm", "mode_index", "is_target", "fraction", "count", "sample_count")
    return _write_csv(config.out, config, header, rows)


def run_cfg_comparison(config: ExperimentConfig) -> str:
    """Guided runs under standard vs low-scale interpolation guidance.

    Matched seeds; one report row per interpolation mode.  Report-only:
    this experiment carries no acceptance threshold.
    """
    from .sampler import cfg, cfg_plus_plus

    reference = _reference_energy(config)
    rows = []
    for label, mode in (("cfg:7.5", cfg(7.5)), ("cfg++:0.8", cfg_plus_plus(0.8))):
        guidance = replace(config.guidance, interp_guidance=mode)
        videos, nfe_base, nfe_guide = _run_many("guided", config, guidance)
        report = aggregate_report(videos, reference)
        rows.append(_report_row(label, report, nfe_base, nfe_guide, config.master_seed))
    header = ("interp_mode",) + _REPORT_HEADER[1:]
    return _write_csv(config.out, config, header, rows)


def run_nfe_accounting(config: ExperimentConfig) -> str:
    """Measured vs analytic evaluation counts for the two refinement methods."""
    single = replace(config, sample_count=1)
    _, fi_base, fi_guide = _run_many("baseline", single, config.guidance)
    _, vg_base, vg_guide = _run_many("guided", single, config.guidance)
    fi_measured = fi_base + fi_guide
    vg_measured = vg_base + vg_guide
    fi_formula = freeinit_nfe_formula(config.grid_steps, config.baseline_iterations)
    vg_formula = guided_nfe_formula(
        config.grid_steps,
        config.guidance.interpolation_steps,
        config.guidance.rollout_steps,
    )
    if fi_measured != fi_formula or vg_measured != vg_formula:
        raise AssertionError(
            f"measured evaluation counts diverge from formulas: "
            f"baseline {fi_measured} vs {fi_formula}, guided {vg_measured} vs {vg_formula}"
        )
    rows = [
        ("baseline", fi_measured, fi_formula, config.grid_steps, config.baseline_iterations),
        ("guided", vg_measured, vg_formula, config.grid_steps, config.guidance.interpolation_steps),
        ("ratio", fi_measured / vg_measured, fi_formula / vg_formula, config.grid_steps, 0),
    ]
    header = ("method", "nfe_measured", "nfe_analytic", "grid_steps", "iterations_or_window")
    return _write_csv(config.out, config, header, rows)


def run_experiment(config: ExperimentConfig) -> str:
    """Execute the configured experiment kind and return the CSV path."""
    if config.kind == "sample":
        return _run_report_experiment(config, "plain")
    if config.kind == "guide":
        return _run_report_experiment(config, "guided")
    if config.kind == "baseline":
        return _run_report_experiment(config, "baseline")
    if config.kind == "ablate":
        return run_ablation(config)
    if config.kind == "distill":
        return run_prior_distillation(config)
    if config.kind == "nfe":
        return run_nfe_accounting(config)
    if config.kind == "cfg-compare":
        return run_cfg_comparison(config)
    raise ConfigError(f"unknown experiment kind {config.kind!r}")
