"""Service exports."""

from app.services.alternating_projections import ApConfig, PhaseEstimate, run_pipeline
from app.services.array_model import ApertureGeometry, build_grid, build_manifold, rectangular_aperture
from app.services.lp_solver import LinearProgram, LpSolution, LpStatus, l1_augment, solve_lp
from app.services.scene_sim import Measurements, Scenario, Source, simulate_received

__all__ = [
	"ApConfig",
	"ApertureGeometry",
	"LinearProgram",
	"LpSolution",
	"LpStatus",
	"Measurements",
	"PhaseEstimate",
	"Scenario",
	"Source",
	"build_grid",
	"build_manifold",
	"l1_augment",
	"rectangular_aperture",
	"run_pipeline",
	"simulate_received",
	"solve_lp",
]
