"""Spectra of a 2D rectangular billiard perturbed by a point or small rectangular impurity."""
from .basis import (
    Mode,
    ModeTable,
    RectangleBilliard,
    eigenfunction_value,
    enumerate_modes,
    lowest_modes,
    mean_level_density,
    mode_energy,
    mode_table,
)
from .classifier import ClassificationReport, finite_metric, point_metric, strip_map, width_delta
from .finite_impurity import (
    RectImpurity,
    cutoff_index,
    matched_cutoff_energy,
    truncated_secular_solve,
    v1_from_potential,
    vbar_from_v,
)
from .oracle import (
    OracleResult,
    eigendecompose,
    mode_overlaps,
    sliced_eigenvalues,
    solve_oracle,
    window_eigenpairs,
)
from .pointscatterer import (
    PointScatterer,
    PointSpectrum,
    PoleError,
    SeriesConfig,
    SpectralLine,
    regularized_g,
    solve_point_spectrum,
    theta_to_vbar,
    transition_matrix,
)

__version__ = "0.1.0"
