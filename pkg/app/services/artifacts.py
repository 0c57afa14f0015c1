"""CSV, JSON and SVG artifacts for runs and simulations."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from app.core.errors import ArtifactError  # noqa: E402
from app.services.beamformer_eval import BeamImage  # noqa: E402
from app.services.experiment import ExperimentResult, Simulation  # noqa: E402
from app.services.stage1_lift import phase_angle  # noqa: E402

LOGGER = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "phase-retrieval"
SVG_METADATA = {"Date": None}


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def ensure_directory(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactError(f"Cannot create output directory {path}: {exc}") from exc
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    try:
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(value) for value in row])
    except OSError as exc:
        raise ArtifactError(f"Cannot write {path}: {exc}") from exc
    return path


def write_json(path: Path, payload: Any) -> Path:
    try:
        path.write_text(
            json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise ArtifactError(f"Cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def _intensity_rows(simulation: Simulation):
    positions = simulation.scenario.geometry.positions
    for index, (xy, value) in enumerate(zip(positions, simulation.measurements.intensity)):
        yield index, xy[0], xy[1], value


def _phase_true_rows(simulation: Simulation):
    b_true = simulation.measurements.b_true
    phases = phase_angle(b_true)
    unwrapped = np.unwrap(phases)
    for index in range(b_true.shape[0]):
        yield index, phases[index], unwrapped[index]


def _beam_rows(image: BeamImage):
    for (u, v), level in zip(image.grid.angles, image.values):
        yield u, v, level


def _save_heatmap(image: BeamImage, path: Path, title: str) -> Path:
    grid = image.grid
    layout = np.full((grid.rows, grid.cols), np.nan)
    layout[grid.indices[:, 0], grid.indices[:, 1]] = image.values
    fig, ax = plt.subplots(figsize=(5, 4))
    mesh = ax.imshow(
        layout,
        origin="lower",
        extent=(*grid.u_extent, *grid.v_extent),
        aspect="auto",
        cmap="viridis",
        vmin=-40.0,
        vmax=0.0,
    )
    fig.colorbar(mesh, ax=ax, label="dB")
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    ax.set_title(title)
    try:
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    except OSError as exc:
        raise ArtifactError(f"Cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def _save_delta_trace(delta: Sequence[float], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(np.arange(1, len(delta) + 1), delta, marker="o")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("delta")
    ax.set_title("Maximum magnitude error bound")
    try:
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    except OSError as exc:
        raise ArtifactError(f"Cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def write_simulation(simulation: Simulation, out_dir: Path) -> List[Path]:
    ensure_directory(out_dir)
    return [
        write_csv(out_dir / "intensity.csv", ["element", "x_m", "y_m", "intensity"], _intensity_rows(simulation)),
        write_csv(out_dir / "phase_true.csv", ["element", "phase_rad", "unwrapped_rad"], _phase_true_rows(simulation)),
    ]


def write_run_artifacts(result: ExperimentResult, out_dir: Path, emit_svg: bool) -> List[Path]:
    """Write every artifact of a finished run into ``out_dir``."""

    estimate = result.retrieval.estimate
    written = write_simulation(result.simulation, out_dir)

    est_phase = phase_angle(estimate.b_final)
    aligned = result.phase.unwrapped_est
    written.append(
        write_csv(
            out_dir / "phase_est.csv",
            ["element", "phase_rad", "unwrapped_aligned_rad", "aligned_error_rad"],
            zip(range(est_phase.shape[0]), est_phase, aligned, result.phase.errors),
        )
    )
    written.append(write_csv(out_dir / "beam_true.csv", ["u", "v", "level_db"], _beam_rows(result.beam_true)))
    written.append(write_csv(out_dir / "beam_est.csv", ["u", "v", "level_db"], _beam_rows(result.beam_est)))
    written.append(
        write_csv(
            out_dir / "peaks.csv",
            ["rank", "u", "v", "level_db", "grid_index"],
            ((rank, p.u, p.v, p.level_db, p.index) for rank, p in enumerate(result.peaks_est.peaks, start=1)),
        )
    )
    written.append(
        write_csv(
            out_dir / "delta_trace.csv",
            ["iteration", "delta", "pruned_residual", "power", "cg_iterations"],
            ((r.iteration, r.delta, r.pruned_residual, r.power, r.cg_iterations) for r in estimate.history),
        )
    )
    if estimate.stage1 is not None:
        table = estimate.stage1.lp.residual_table()
        header = list(table[0].keys()) if table else ["iteration"]
        written.append(
            write_csv(
                out_dir / "lp_stage1_residuals.csv",
                header,
                ([row[key] for key in header] for row in table),
            )
        )

    if emit_svg:
        written.append(_save_heatmap(result.beam_true, out_dir / "beam_true.svg", "True phase"))
        written.append(_save_heatmap(result.beam_est, out_dir / "beam_est.svg", "Estimated phase"))
        written.append(_save_delta_trace(estimate.delta_trace, out_dir / "delta_trace.svg"))

    written.append(write_json(out_dir / "run_report.json", result.report()))
    LOGGER.info("Wrote %s artifacts to %s", len(written), out_dir)
    return written
